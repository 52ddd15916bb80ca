//! Epigenetic genetic algorithm: population structure, operators, and
//! the search loop with pluggable silencing-probability providers.

mod engine;
mod ops;
mod types;

pub use engine::{run_epiga, EvaluatorError, Evaluation, FitnessEvaluator, GsProvider, SearchError};
pub use ops::{
    binary_tournament, elitist_replacement, gene_silencing, nbr, nbr_raw, nucleosome_generation,
    reproduce_individuals,
};
pub use types::{
    Cell, EpiGaConfig, EpiGaError, GsProbabilities, Individual, NucleosomeMask, Population,
};
