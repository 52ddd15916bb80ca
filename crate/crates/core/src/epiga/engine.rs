//! The search loop: evaluate, select, regenerate nucleosomes, reproduce,
//! silence, replace, repeat until the evaluation budget is exhausted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ops::{
    binary_tournament, elitist_replacement, gene_silencing, nucleosome_generation,
    reproduce_individuals,
};
use super::types::{Cell, EpiGaConfig, EpiGaError, GsProbabilities, Individual, Population};
use crate::scalar::Real;
use crate::scenario::{sample_uniform, ScenarioGenome, GENOME_LEN};
use crate::trace::{GenerationRecord, SearchTrace};
use crate::{FeatureVec, FEATURE_LEN};

/// Supplies per-gene silencing probabilities for an environment state.
pub trait GsProvider<S: Real>: Sync {
    fn gs_probabilities(&self, features: &FeatureVec<S>) -> GsProbabilities<S>;
}

/// Result of one episode evaluation: the fitness (minimum distance) and
/// the environment-state features the epigenetic model consumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation<S: Real> {
    pub fitness: S,
    pub features: FeatureVec<S>,
}

/// Maps a genome to an episode outcome. Must be safe for concurrent
/// invocation; the engine merges results in index order so parallelism
/// never changes a trace.
pub trait FitnessEvaluator<S: Real>: Sync {
    fn evaluate(&self, genome: &ScenarioGenome<S>, episode_seed: u64)
        -> Result<Evaluation<S>, EvaluatorError>;
}

/// Failure reported by an evaluator; aborts the run with a diagnostic.
#[derive(Debug, Clone, thiserror::Error)]
#[error("{0}")]
pub struct EvaluatorError(pub String);

impl<S: Real, F> FitnessEvaluator<S> for F
where
    F: Fn(&ScenarioGenome<S>, u64) -> Result<Evaluation<S>, EvaluatorError> + Sync,
{
    fn evaluate(
        &self,
        genome: &ScenarioGenome<S>,
        episode_seed: u64,
    ) -> Result<Evaluation<S>, EvaluatorError> {
        self(genome, episode_seed)
    }
}

/// Search abort: invalid configuration, an operator contract violation,
/// or an evaluator failure. Evaluator failures carry the partial trace so
/// callers can persist what was recorded before the abort.
#[derive(Debug, thiserror::Error)]
pub enum SearchError<S: Real> {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error("operator contract violation: {0}")]
    Contract(String),
    #[error("evaluator failed: {message}")]
    Evaluator { message: String, partial: Box<SearchTrace<S>> },
}

impl<S: Real> From<EpiGaError> for SearchError<S> {
    fn from(err: EpiGaError) -> Self {
        match err {
            EpiGaError::Contract(msg) => SearchError::Contract(msg),
        }
    }
}

/// Evaluate the listed cells in parallel and merge results in index
/// order. `jobs` pairs (individual index, cell index) with an episode
/// seed.
fn evaluate_cells<S: Real, E: FitnessEvaluator<S>>(
    pop: &mut Population<S>,
    jobs: &[(usize, usize, u64)],
    evaluator: &E,
) -> Result<(), EvaluatorError> {
    let results: Vec<Result<Evaluation<S>, EvaluatorError>> = jobs
        .par_iter()
        .map(|&(ind, cell, seed)| {
            evaluator.evaluate(&pop.individuals[ind].cells[cell].solution, seed)
        })
        .collect();
    for (&(ind, cell, _), result) in jobs.iter().zip(results) {
        let eval = result?;
        let slot = &mut pop.individuals[ind].cells[cell];
        slot.fitness = Some(eval.fitness);
        slot.features = Some(eval.features);
    }
    Ok(())
}

fn record_generation<S: Real>(trace: &mut SearchTrace<S>, pop: &Population<S>, evals: usize) {
    let fits: Vec<S> = pop.individuals.iter().map(|i| i.fitness().unwrap()).collect();
    let best = fits.iter().copied().fold(S::infinity(), S::min);
    let avg = fits.iter().copied().sum::<S>() / crate::scalar::real(fits.len() as f64);
    trace.generations.push(GenerationRecord {
        generation: trace.generations.len() as u32 + 1,
        fitness_avg: avg,
        fitness_best: best,
        evaluations_used: evals,
    });
}

fn finalize<S: Real>(trace: &mut SearchTrace<S>, pop: &Population<S>, evals: usize) {
    trace.evaluations_used = evals;
    if let Some(best_idx) = pop.best_index() {
        let ind = &pop.individuals[best_idx];
        let cell_idx = ind.best_cell_index().unwrap();
        trace.best_genome = Some(ind.cells[cell_idx].solution);
        trace.best_fitness = ind.fitness();
    }
}

/// Run the epigenetic GA. Every generation: T offspring are produced from
/// T/2 tournament-selected parent pairs (fresh nucleosome masks, NBR on
/// the best cells, gene silencing on the new cells), evaluated, and
/// merged through elitist replacement. The silencing provider is queried
/// once per offspring cell with the environment-state snapshot from that
/// cell's parent evaluation.
pub fn run_epiga<S, P, E>(
    cfg: &EpiGaConfig,
    provider: &P,
    evaluator: &E,
) -> Result<SearchTrace<S>, SearchError<S>>
where
    S: Real,
    P: GsProvider<S>,
    E: FitnessEvaluator<S>,
{
    cfg.validate().map_err(|e| SearchError::Config(e.to_string()))?;
    let t = cfg.population_size;
    let m = cfg.cells_per_individual;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = SearchTrace::new(cfg.seed);

    let mut pop: Population<S> = Population {
        individuals: (0..t)
            .map(|_| Individual::new((0..m).map(|_| Cell::new(sample_uniform(&mut rng))).collect()))
            .collect(),
        generation: 0,
    };

    let mut evals = 0usize;
    let mut jobs: Vec<(usize, usize, u64)> = Vec::with_capacity(t * m);
    for i in 0..t {
        for c in 0..m {
            jobs.push((i, c, rng.gen::<u64>()));
        }
    }
    if let Err(e) = evaluate_cells(&mut pop, &jobs, evaluator) {
        finalize(&mut trace, &pop, evals);
        return Err(SearchError::Evaluator { message: e.to_string(), partial: Box::new(trace) });
    }
    evals += jobs.len();
    record_generation(&mut trace, &pop, evals);

    while evals + t <= cfg.max_evaluations {
        let mut offspring: Vec<Individual<S>> = Vec::with_capacity(t);
        let mut new_cells: Vec<usize> = Vec::with_capacity(t);
        for _ in 0..t / 2 {
            let a = binary_tournament(&pop, &mut rng)?;
            let b = binary_tournament(&pop, &mut rng)?;
            let mut p1 = pop.individuals[a].clone();
            let mut p2 = pop.individuals[b].clone();
            for parent in [&mut p1, &mut p2] {
                for cell in &mut parent.cells {
                    cell.mask = nucleosome_generation(
                        GENOME_LEN,
                        cfg.nucleosome_prob,
                        cfg.nucleosome_radius,
                        &mut rng,
                    );
                }
            }
            let ((mut o1, n1), (mut o2, n2)) = reproduce_individuals(&p1, &p2)?;
            for (child, slot) in [(&mut o1, n1), (&mut o2, n2)] {
                let features = child.cells[slot].features.unwrap_or([S::zero(); FEATURE_LEN]);
                let pr_gs = provider.gs_probabilities(&features);
                for j in 0..GENOME_LEN {
                    trace.expression.predicted_expression_sum[j] +=
                        pr_gs.expression(j).to_f64().unwrap();
                }
                trace.expression.provider_queries += 1;
                let (cell, expressed) =
                    gene_silencing(&child.cells[slot], &pr_gs, cfg.epigenetic_prob, &mut rng);
                child.cells[slot] = cell;
                trace.expression.gs_invocations += 1;
                for j in 0..GENOME_LEN {
                    if expressed[j] {
                        trace.expression.expressed[j] += 1;
                    }
                }
                new_cells.push(slot);
            }
            offspring.push(o1);
            offspring.push(o2);
        }
        let mut off_pop = Population { individuals: offspring, generation: pop.generation };
        let jobs: Vec<(usize, usize, u64)> = new_cells
            .iter()
            .enumerate()
            .map(|(i, &c)| (i, c, rng.gen::<u64>()))
            .collect();
        if let Err(e) = evaluate_cells(&mut off_pop, &jobs, evaluator) {
            finalize(&mut trace, &pop, evals);
            return Err(SearchError::Evaluator {
                message: e.to_string(),
                partial: Box::new(trace),
            });
        }
        evals += jobs.len();
        pop = elitist_replacement(&pop, &off_pop)?;
        record_generation(&mut trace, &pop, evals);
    }

    finalize(&mut trace, &pop, evals);
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::EqualProvider;

    fn constant_evaluator<S: Real>(c: f64) -> impl FitnessEvaluator<S> {
        move |_g: &ScenarioGenome<S>, _seed: u64| {
            Ok(Evaluation { fitness: crate::scalar::real(c), features: [S::zero(); FEATURE_LEN] })
        }
    }

    fn sphere_evaluator(g: &ScenarioGenome<f64>, _seed: u64) -> Result<Evaluation<f64>, EvaluatorError> {
        // Sum of squared scaled numeric genes; smooth landscape with the
        // optimum at the low corner.
        let pv = g.scaled_values();
        let fitness = pv.iter().map(|v| v * v).sum();
        Ok(Evaluation { fitness, features: [0.0; FEATURE_LEN] })
    }

    #[test]
    fn flat_landscape_is_stable() {
        let cfg = EpiGaConfig { max_evaluations: 200, seed: 3, ..EpiGaConfig::default() };
        let trace: SearchTrace<f64> =
            run_epiga(&cfg, &EqualProvider, &constant_evaluator(2.5)).unwrap();
        for row in &trace.generations {
            assert_eq!(row.fitness_best, 2.5);
            assert_eq!(row.fitness_avg, 2.5);
        }
    }

    #[test]
    fn sphere_best_fitness_is_non_increasing() {
        let cfg = EpiGaConfig { max_evaluations: 400, seed: 4, ..EpiGaConfig::default() };
        let trace: SearchTrace<f64> = run_epiga(&cfg, &EqualProvider, &sphere_evaluator).unwrap();
        assert!(trace.is_monotone());
        let first = trace.generations.first().unwrap().fitness_best;
        let last = trace.generations.last().unwrap().fitness_best;
        assert!(last <= first);
    }

    #[test]
    fn default_budget_yields_fifty_generations() {
        let cfg = EpiGaConfig { seed: 5, ..EpiGaConfig::default() };
        let trace: SearchTrace<f64> = run_epiga(&cfg, &EqualProvider, &sphere_evaluator).unwrap();
        assert_eq!(trace.generations.len(), 50);
        assert_eq!(trace.evaluations_used, 1000);
        assert_eq!(trace.generations.last().unwrap().evaluations_used, 1000);
    }

    #[test]
    fn identical_seeds_reproduce_traces_exactly() {
        let cfg = EpiGaConfig { max_evaluations: 300, seed: 6, ..EpiGaConfig::default() };
        let a = run_epiga(&cfg, &EqualProvider, &sphere_evaluator).unwrap();
        let b = run_epiga(&cfg, &EqualProvider, &sphere_evaluator).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn multi_cell_individuals_run() {
        let cfg = EpiGaConfig {
            cells_per_individual: 3,
            max_evaluations: 200,
            seed: 7,
            ..EpiGaConfig::default()
        };
        let trace: SearchTrace<f64> = run_epiga(&cfg, &EqualProvider, &sphere_evaluator).unwrap();
        assert!(trace.is_monotone());
        // Initial evaluation costs T*M = 60; each generation adds T = 20.
        assert_eq!(trace.evaluations_used, 60 + 7 * 20);
    }

    #[test]
    fn evaluator_failure_aborts_with_partial_trace() {
        let cfg = EpiGaConfig { max_evaluations: 400, seed: 8, ..EpiGaConfig::default() };
        let counter = std::sync::atomic::AtomicUsize::new(0);
        let failing = move |g: &ScenarioGenome<f64>, seed: u64| {
            if counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst) >= 60 {
                Err(EvaluatorError("episode crashed".into()))
            } else {
                sphere_evaluator(g, seed)
            }
        };
        match run_epiga(&cfg, &EqualProvider, &failing) {
            Err(SearchError::Evaluator { message, partial }) => {
                assert!(message.contains("episode crashed"));
                assert!(!partial.generations.is_empty());
            }
            other => panic!("expected evaluator failure, got {other:?}"),
        }
    }

    #[test]
    fn odd_population_is_rejected() {
        let cfg = EpiGaConfig { population_size: 7, ..EpiGaConfig::default() };
        assert!(matches!(
            run_epiga(&cfg, &EqualProvider, &constant_evaluator::<f64>(1.0)),
            Err(SearchError::Config(_))
        ));
    }
}
