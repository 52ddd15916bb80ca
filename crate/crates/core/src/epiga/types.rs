//! Population structure of the epigenetic GA: cells pairing a solution
//! with a nucleosome mask, individuals holding M cells, and populations
//! of T individuals.

use crate::scalar::Real;
use crate::scenario::{ScenarioGenome, GENOME_LEN};
use crate::FeatureVec;

/// Binary nucleosome mask; a 1 ("collapsed") protects the gene from the
/// swap during reproduction and makes it eligible for silencing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NucleosomeMask {
    bits: Vec<bool>,
}

impl NucleosomeMask {
    pub fn zeroed(len: usize) -> Self {
        Self { bits: vec![false; len] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_collapsed(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn collapse(&mut self, index: usize) {
        self.bits[index] = true;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_collapsed(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Positionwise OR, the mask law of nucleosome-based reproduction.
    pub fn or(&self, other: &Self) -> Result<Self, EpiGaError> {
        if self.len() != other.len() {
            return Err(EpiGaError::Contract(format!(
                "mask length mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(Self {
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| a | b).collect(),
        })
    }
}

/// One cell: a candidate solution plus its nucleosome mask, the fitness
/// of its last evaluation, and the environment-state features observed
/// during that evaluation (the snapshot GS-probability providers see).
#[derive(Debug, Clone, PartialEq)]
pub struct Cell<S: Real> {
    pub solution: ScenarioGenome<S>,
    pub mask: NucleosomeMask,
    pub fitness: Option<S>,
    pub features: Option<FeatureVec<S>>,
}

impl<S: Real> Cell<S> {
    pub fn new(solution: ScenarioGenome<S>) -> Self {
        Self {
            solution,
            mask: NucleosomeMask::zeroed(GENOME_LEN),
            fitness: None,
            features: None,
        }
    }

    pub fn is_evaluated(&self) -> bool {
        self.fitness.is_some()
    }
}

/// An individual holds M cells; its fitness is the best (minimum) cell
/// fitness.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual<S: Real> {
    pub cells: Vec<Cell<S>>,
}

impl<S: Real> Individual<S> {
    pub fn new(cells: Vec<Cell<S>>) -> Self {
        Self { cells }
    }

    pub fn is_evaluated(&self) -> bool {
        self.cells.iter().all(Cell::is_evaluated)
    }

    /// Minimum cell fitness; `None` when any cell is unevaluated.
    pub fn fitness(&self) -> Option<S> {
        if !self.is_evaluated() {
            return None;
        }
        self.cells
            .iter()
            .map(|c| c.fitness.unwrap())
            .fold(None, |acc: Option<S>, f| Some(acc.map_or(f, |a| a.min(f))))
    }

    /// Index of the best cell (lowest fitness; ties go to the lowest
    /// index).
    pub fn best_cell_index(&self) -> Option<usize> {
        extremum_index(&self.cells, |a, b| a < b)
    }

    /// Index of the worst cell (highest fitness; ties go to the lowest
    /// index).
    pub fn worst_cell_index(&self) -> Option<usize> {
        extremum_index(&self.cells, |a, b| a > b)
    }
}

fn extremum_index<S: Real>(cells: &[Cell<S>], better: impl Fn(S, S) -> bool) -> Option<usize> {
    let mut best: Option<(usize, S)> = None;
    for (i, cell) in cells.iter().enumerate() {
        let f = cell.fitness?;
        match best {
            None => best = Some((i, f)),
            Some((_, bf)) if better(f, bf) => best = Some((i, f)),
            _ => {}
        }
    }
    best.map(|(i, _)| i)
}

/// T individuals plus the generation counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Population<S: Real> {
    pub individuals: Vec<Individual<S>>,
    pub generation: u32,
}

impl<S: Real> Population<S> {
    pub fn size(&self) -> usize {
        self.individuals.len()
    }

    pub fn is_evaluated(&self) -> bool {
        self.individuals.iter().all(Individual::is_evaluated)
    }

    /// Index of the best individual (ties go to the lowest index).
    pub fn best_index(&self) -> Option<usize> {
        let mut best: Option<(usize, S)> = None;
        for (i, ind) in self.individuals.iter().enumerate() {
            let f = ind.fitness()?;
            match best {
                None => best = Some((i, f)),
                Some((_, bf)) if f < bf => best = Some((i, f)),
                _ => {}
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Per-gene silencing probabilities. `expression(j) = 1 - silencing(j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GsProbabilities<S: Real> {
    probs: [S; GENOME_LEN],
}

impl<S: Real> GsProbabilities<S> {
    pub fn new(probs: [S; GENOME_LEN]) -> Result<Self, EpiGaError> {
        for (j, p) in probs.iter().enumerate() {
            if !(*p >= S::zero() && *p <= S::one()) {
                return Err(EpiGaError::Contract(format!(
                    "silencing probability {p} for gene {j} outside [0, 1]"
                )));
            }
        }
        Ok(Self { probs })
    }

    /// Uniform probabilities, the equal-probability baseline setting.
    pub fn equal(p: S) -> Self {
        Self { probs: [p; GENOME_LEN] }
    }

    pub fn silencing(&self, gene: usize) -> S {
        self.probs[gene]
    }

    pub fn expression(&self, gene: usize) -> S {
        S::one() - self.probs[gene]
    }
}

/// Engine parameters with the standard defaults.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpiGaConfig {
    pub population_size: usize,
    pub cells_per_individual: usize,
    pub max_evaluations: usize,
    pub nucleosome_prob: f64,
    pub nucleosome_radius: usize,
    pub epigenetic_prob: f64,
    pub seed: u64,
}

impl Default for EpiGaConfig {
    fn default() -> Self {
        Self {
            population_size: 20,
            cells_per_individual: 1,
            max_evaluations: 1000,
            nucleosome_prob: 0.2,
            nucleosome_radius: 1,
            epigenetic_prob: 0.01,
            seed: 0,
        }
    }
}

impl EpiGaConfig {
    pub fn validate(&self) -> Result<(), EpiGaError> {
        if self.population_size < 2 || self.population_size % 2 != 0 {
            return Err(EpiGaError::Contract(format!(
                "population size must be even and >= 2, got {}",
                self.population_size
            )));
        }
        if self.cells_per_individual < 1 {
            return Err(EpiGaError::Contract("cells per individual must be >= 1".into()));
        }
        let initial = self.population_size * self.cells_per_individual;
        if self.max_evaluations < initial {
            return Err(EpiGaError::Contract(format!(
                "evaluation budget {} cannot cover the initial population ({initial})",
                self.max_evaluations
            )));
        }
        for (name, p) in [
            ("nucleosome_prob", self.nucleosome_prob),
            ("epigenetic_prob", self.epigenetic_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(EpiGaError::Contract(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Contract violations raised by operators and configuration checks.
#[derive(Debug, Clone, thiserror::Error)]
pub enum EpiGaError {
    #[error("contract violation: {0}")]
    Contract(String),
}
