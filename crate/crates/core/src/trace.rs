//! Search trace shared by every search method: per-generation fitness
//! statistics, budget accounting, and gene-expression bookkeeping.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::scenario::{ScenarioGenome, GENOME_LEN};

/// One row of a search trace: population statistics right after the
/// generation's evaluations were merged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationRecord<S: Real> {
    pub generation: u32,
    pub fitness_avg: S,
    pub fitness_best: S,
    pub evaluations_used: usize,
}

/// Gene-expression accounting for one run.
///
/// `expressed` counts Express events per gene (a resample was performed;
/// for the categorical gene the drawn value may coincide with the old
/// one). `gs_invocations` counts gene-silencing applications, i.e. the
/// number of opportunities each gene had. `predicted_expression_sum`
/// accumulates the provider's expression probabilities so reports can
/// compare predicted against realized frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionStats {
    pub expressed: [u64; GENOME_LEN],
    pub gs_invocations: u64,
    pub predicted_expression_sum: [f64; GENOME_LEN],
    pub provider_queries: u64,
}

impl ExpressionStats {
    pub fn zeroed() -> Self {
        Self {
            expressed: [0; GENOME_LEN],
            gs_invocations: 0,
            predicted_expression_sum: [0.0; GENOME_LEN],
            provider_queries: 0,
        }
    }

    /// Realized per-gene expression frequency (`None` before any GS ran).
    pub fn realized_frequency(&self, gene: usize) -> Option<f64> {
        if self.gs_invocations == 0 {
            None
        } else {
            Some(self.expressed[gene] as f64 / self.gs_invocations as f64)
        }
    }

    /// Mean predicted expression probability per gene.
    pub fn predicted_mean(&self, gene: usize) -> Option<f64> {
        if self.provider_queries == 0 {
            None
        } else {
            Some(self.predicted_expression_sum[gene] / self.provider_queries as f64)
        }
    }
}

impl Default for ExpressionStats {
    fn default() -> Self {
        Self::zeroed()
    }
}

/// Complete record of one search run.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrace<S: Real> {
    pub run_seed: u64,
    pub generations: Vec<GenerationRecord<S>>,
    pub expression: ExpressionStats,
    pub best_genome: Option<ScenarioGenome<S>>,
    pub best_fitness: Option<S>,
    pub evaluations_used: usize,
}

impl<S: Real> SearchTrace<S> {
    pub fn new(run_seed: u64) -> Self {
        Self {
            run_seed,
            generations: Vec::new(),
            expression: ExpressionStats::zeroed(),
            best_genome: None,
            best_fitness: None,
            evaluations_used: 0,
        }
    }

    /// First generation whose best fitness hit zero (a collision), if any.
    pub fn first_zero_generation(&self) -> Option<u32> {
        self.generations
            .iter()
            .find(|g| g.fitness_best <= S::zero())
            .map(|g| g.generation)
    }

    /// Best fitness is non-increasing across generations. Elitist
    /// replacement guarantees this; violations indicate an engine bug.
    pub fn is_monotone(&self) -> bool {
        self.generations
            .windows(2)
            .all(|w| w[1].fitness_best <= w[0].fitness_best)
    }
}

/// Write trace rows as CSV (`run_id,generation,fitness_avg,fitness_best,
/// evaluations_used`).
pub fn write_trace_csv<S: Real, W: std::io::Write>(
    trace: &SearchTrace<S>,
    run_id: &str,
    out: &mut W,
) -> std::io::Result<()> {
    writeln!(out, "run_id,generation,fitness_avg,fitness_best,evaluations_used")?;
    for row in &trace.generations {
        writeln!(
            out,
            "{},{},{},{},{}",
            run_id, row.generation, row.fitness_avg, row.fitness_best, row.evaluations_used
        )?;
    }
    Ok(())
}

/// Write the expression sidecar as JSON.
pub fn write_expression_json<W: std::io::Write>(
    stats: &ExpressionStats,
    out: &mut W,
) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(out, stats)
}

/// Read an expression sidecar back.
pub fn read_expression_json<R: std::io::Read>(input: R) -> serde_json::Result<ExpressionStats> {
    serde_json::from_reader(input)
}
