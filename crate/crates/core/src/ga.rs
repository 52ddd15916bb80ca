//! Classical single-objective GA baseline (binary tournament, uniform
//! crossover, per-gene uniform-resample mutation, elitist replacement)
//! plus the equal-probability provider and a random-search sanity
//! baseline.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::epiga::{
    binary_tournament, elitist_replacement, Cell, EvaluatorError, FitnessEvaluator, Individual,
    Population, SearchError,
};
use crate::provider::EqualProvider;
use crate::scalar::Real;
use crate::scenario::{clamp_repair, gene_specs, resample_gene, sample_uniform, ScenarioGenome, GENOME_LEN};
use crate::trace::{GenerationRecord, SearchTrace};

/// GA parameters. The crossover and mutation rates are conventional
/// defaults (0.9 and 1/num_genes); sweep them via config if needed.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GaConfig {
    pub population_size: usize,
    pub max_evaluations: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 20,
            max_evaluations: 1000,
            crossover_prob: 0.9,
            mutation_prob: 1.0 / GENOME_LEN as f64,
            seed: 0,
        }
    }
}

impl GaConfig {
    fn validate<S: Real>(&self) -> Result<(), SearchError<S>> {
        if self.population_size < 2 || self.population_size % 2 != 0 {
            return Err(SearchError::Config(format!(
                "population size must be even and >= 2, got {}",
                self.population_size
            )));
        }
        if self.max_evaluations < self.population_size {
            return Err(SearchError::Config(format!(
                "evaluation budget {} cannot cover the initial population",
                self.max_evaluations
            )));
        }
        for (name, p) in [("crossover_prob", self.crossover_prob), ("mutation_prob", self.mutation_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SearchError::Config(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// The equal-probability silencing provider (0.5 for every gene), the
/// configuration distinguishing the equal-probability variant from the
/// trained one.
pub fn make_equal_provider() -> EqualProvider {
    EqualProvider
}

/// Uniform crossover: each gene position flips a fair coin to decide
/// whether the children swap parents' values there. The categorical gene
/// is carried atomically like any other position.
fn uniform_crossover<S: Real, R: Rng + ?Sized>(
    a: &ScenarioGenome<S>,
    b: &ScenarioGenome<S>,
    rng: &mut R,
) -> (ScenarioGenome<S>, ScenarioGenome<S>) {
    let mut x = *a.values();
    let mut y = *b.values();
    for j in 0..GENOME_LEN {
        if rng.gen::<bool>() {
            core::mem::swap(&mut x[j], &mut y[j]);
        }
    }
    (ScenarioGenome::from_values(x), ScenarioGenome::from_values(y))
}

fn mutate<S: Real, R: Rng + ?Sized>(genome: &mut ScenarioGenome<S>, prob: f64, rng: &mut R) {
    let specs = gene_specs();
    for j in 0..GENOME_LEN {
        if rng.gen::<f64>() < prob {
            genome.set_value(j, resample_gene(&specs[j], rng));
        }
    }
}

fn evaluate_population<S: Real, E: FitnessEvaluator<S>>(
    pop: &mut Population<S>,
    seeds: &[u64],
    evaluator: &E,
) -> Result<(), EvaluatorError> {
    let results: Vec<Result<crate::epiga::Evaluation<S>, EvaluatorError>> = pop
        .individuals
        .par_iter()
        .zip(seeds.par_iter())
        .map(|(ind, &seed)| evaluator.evaluate(&ind.cells[0].solution, seed))
        .collect();
    for (ind, result) in pop.individuals.iter_mut().zip(results) {
        let eval = result?;
        ind.cells[0].fitness = Some(eval.fitness);
        ind.cells[0].features = Some(eval.features);
    }
    Ok(())
}

fn record<S: Real>(trace: &mut SearchTrace<S>, pop: &Population<S>, evals: usize) {
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

fn finish<S: Real>(trace: &mut SearchTrace<S>, pop: &Population<S>, evals: usize) {
    trace.evaluations_used = evals;
    if let Some(best) = pop.best_index() {
        trace.best_genome = Some(pop.individuals[best].cells[0].solution);
        trace.best_fitness = pop.individuals[best].fitness();
    }
}

/// Run the generational GA with the same trace format and budget
/// semantics as the epigenetic engine.
pub fn run_ga<S, E>(cfg: &GaConfig, evaluator: &E) -> Result<SearchTrace<S>, SearchError<S>>
where
    S: Real,
    E: FitnessEvaluator<S>,
{
    cfg.validate()?;
    let t = cfg.population_size;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = SearchTrace::new(cfg.seed);

    let mut pop: Population<S> = Population {
        individuals: (0..t)
            .map(|_| Individual::new(vec![Cell::new(sample_uniform(&mut rng))]))
            .collect(),
        generation: 0,
    };
    let seeds: Vec<u64> = (0..t).map(|_| rng.gen()).collect();
    let mut evals = 0usize;
    if let Err(e) = evaluate_population(&mut pop, &seeds, evaluator) {
        finish(&mut trace, &pop, evals);
        return Err(SearchError::Evaluator { message: e.to_string(), partial: Box::new(trace) });
    }
    evals += t;
    record(&mut trace, &pop, evals);

    while evals + t <= cfg.max_evaluations {
        let mut children: Vec<Individual<S>> = Vec::with_capacity(t);
        for _ in 0..t / 2 {
            let a = binary_tournament(&pop, &mut rng)?;
            let b = binary_tournament(&pop, &mut rng)?;
            let pa = pop.individuals[a].cells[0].solution;
            let pb = pop.individuals[b].cells[0].solution;
            let (mut c1, mut c2) = if rng.gen::<f64>() < cfg.crossover_prob {
                uniform_crossover(&pa, &pb, &mut rng)
            } else {
                (pa, pb)
            };
            for child in [&mut c1, &mut c2] {
                mutate(child, cfg.mutation_prob, &mut rng);
                *child = clamp_repair(*child);
            }
            children.push(Individual::new(vec![Cell::new(c1)]));
            children.push(Individual::new(vec![Cell::new(c2)]));
        }
        let mut off = Population { individuals: children, generation: pop.generation };
        let seeds: Vec<u64> = (0..t).map(|_| rng.gen()).collect();
        if let Err(e) = evaluate_population(&mut off, &seeds, evaluator) {
            finish(&mut trace, &pop, evals);
            return Err(SearchError::Evaluator { message: e.to_string(), partial: Box::new(trace) });
        }
        evals += t;
        pop = elitist_replacement(&pop, &off)?;
        record(&mut trace, &pop, evals);
    }

    finish(&mut trace, &pop, evals);
    Ok(trace)
}

/// Random search over uniform genomes, reported in the shared trace
/// format (one row per `batch` evaluations). Sanity-check baseline only.
pub fn run_random_search<S, E>(
    batch: usize,
    max_evaluations: usize,
    seed: u64,
    evaluator: &E,
) -> Result<SearchTrace<S>, SearchError<S>>
where
    S: Real,
    E: FitnessEvaluator<S>,
{
    if batch == 0 || max_evaluations < batch {
        return Err(SearchError::Config("random search needs batch >= 1 within budget".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = SearchTrace::new(seed);
    let mut best: Option<(S, ScenarioGenome<S>)> = None;
    let mut evals = 0usize;
    while evals + batch <= max_evaluations {
        let genomes: Vec<(ScenarioGenome<S>, u64)> =
            (0..batch).map(|_| (sample_uniform(&mut rng), rng.gen())).collect();
        let results: Vec<Result<crate::epiga::Evaluation<S>, EvaluatorError>> = genomes
            .par_iter()
            .map(|(g, s)| evaluator.evaluate(g, *s))
            .collect();
        let mut sum = S::zero();
        for ((g, _), result) in genomes.iter().zip(results) {
            let eval = match result {
                Ok(e) => e,
                Err(e) => {
                    trace.evaluations_used = evals;
                    return Err(SearchError::Evaluator {
                        message: e.to_string(),
                        partial: Box::new(trace),
                    });
                }
            };
            sum += eval.fitness;
            if best.map_or(true, |(bf, _)| eval.fitness < bf) {
                best = Some((eval.fitness, *g));
            }
        }
        evals += batch;
        trace.generations.push(GenerationRecord {
            generation: trace.generations.len() as u32 + 1,
            fitness_avg: sum / crate::scalar::real(batch as f64),
            fitness_best: best.unwrap().0,
            evaluations_used: evals,
        });
    }
    trace.evaluations_used = evals;
    if let Some((f, g)) = best {
        trace.best_fitness = Some(f);
        trace.best_genome = Some(g);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epiga::Evaluation;
    use crate::FEATURE_LEN;

    fn sphere(g: &ScenarioGenome<f64>, _seed: u64) -> Result<Evaluation<f64>, EvaluatorError> {
        let pv = g.scaled_values();
        Ok(Evaluation { fitness: pv.iter().map(|v| v * v).sum(), features: [0.0; FEATURE_LEN] })
    }

    #[test]
    fn frozen_operators_freeze_population() {
        let cfg = GaConfig {
            crossover_prob: 0.0,
            mutation_prob: 0.0,
            max_evaluations: 200,
            seed: 1,
            ..GaConfig::default()
        };
        let trace = run_ga(&cfg, &sphere).unwrap();
        let first = trace.generations.first().unwrap();
        for row in &trace.generations {
            assert_eq!(row.fitness_best, first.fitness_best);
            // Elitism with cloned offspring keeps the population fixed
            // from generation 1 onward.
            assert_eq!(row.fitness_avg, first.fitness_avg);
        }
    }

    #[test]
    fn sphere_is_monotone_under_elitism() {
        let cfg = GaConfig { max_evaluations: 400, seed: 2, ..GaConfig::default() };
        let trace = run_ga(&cfg, &sphere).unwrap();
        assert!(trace.is_monotone());
    }

    #[test]
    fn defaults_give_fifty_generations_and_full_budget() {
        let cfg = GaConfig { seed: 3, ..GaConfig::default() };
        let trace = run_ga(&cfg, &sphere).unwrap();
        assert_eq!(trace.generations.len(), 50);
        assert_eq!(trace.evaluations_used, 1000);
    }

    #[test]
    fn random_search_tracks_running_best() {
        let trace = run_random_search(20, 200, 4, &sphere).unwrap();
        assert_eq!(trace.generations.len(), 10);
        assert!(trace.is_monotone());
        assert_eq!(trace.evaluations_used, 200);
    }
}
