//! Dataset pipeline: run random scenarios through the simulator, keep
//! the near-critical records (minimum distance at most 5 m), and store
//! them as CSV.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::scalar::Real;
use crate::scenario::{encode_names, sample_uniform, ScenarioGenome, GENOME_LEN};
use crate::sim::{run_episode, EpisodeMode, RouteLayout, SimConfig};
use crate::{FeatureVec, FEATURE_LEN};

/// Records with a minimum distance above this are filtered out; the
/// boundary itself is kept.
pub const FITNESS_FILTER_MAX: f64 = 5.0;

/// One training record: state features, scaled parameter values, and the
/// ground-truth fitness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingSample<S: Real> {
    pub features: FeatureVec<S>,
    pub values: [S; GENOME_LEN],
    pub f_gt: S,
}

/// Acceptance accounting of a dataset build.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub requested: usize,
    pub kept: usize,
    pub acceptance_rate: f64,
}

/// Sample `n_samples` uniform scenarios round-robin over `layouts`, run
/// each as an episode, and keep those with `MD <= 5 m`. Warns (but
/// proceeds) when fewer than 100 records survive the filter.
pub fn build_dataset<S: Real>(
    layouts: &[RouteLayout],
    cfg: &SimConfig,
    n_samples: usize,
    seed: u64,
    mode: EpisodeMode,
) -> (Vec<TrainingSample<S>>, DatasetStats) {
    assert!(n_samples >= 1, "dataset build needs at least one sample");
    assert!(!layouts.is_empty(), "dataset build needs at least one layout");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jobs: Vec<(usize, ScenarioGenome<S>, u64)> = (0..n_samples)
        .map(|i| (i % layouts.len(), sample_uniform(&mut rng), rng.gen()))
        .collect();
    let samples: Vec<Option<TrainingSample<S>>> = jobs
        .par_iter()
        .map(|&(li, genome, ep_seed)| {
            let outcome = run_episode(&layouts[li], &genome, cfg, ep_seed, mode, false)
                .expect("sampled genomes are valid");
            if outcome.md.to_f64().unwrap() <= FITNESS_FILTER_MAX {
                Some(TrainingSample {
                    features: outcome.feature_vector,
                    values: genome.scaled_values(),
                    f_gt: outcome.md,
                })
            } else {
                None
            }
        })
        .collect();
    let kept: Vec<TrainingSample<S>> = samples.into_iter().flatten().collect();
    let stats = DatasetStats {
        requested: n_samples,
        kept: kept.len(),
        acceptance_rate: kept.len() as f64 / n_samples as f64,
    };
    if stats.kept < 100 {
        log::warn!(
            "dataset build kept only {} of {} samples; training may be unstable",
            stats.kept,
            stats.requested
        );
    }
    (kept, stats)
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed dataset: {0}")]
    Parse(String),
}

/// CSV layout: 16 feature columns, 10 scaled-value columns named after
/// the genes, then the ground-truth fitness.
pub fn write_dataset_csv<S: Real, W: Write>(
    samples: &[TrainingSample<S>],
    out: &mut W,
) -> std::io::Result<()> {
    let mut header: Vec<String> = (0..FEATURE_LEN).map(|i| format!("f{i}")).collect();
    header.extend(encode_names().iter().map(|n| format!("pv_{n}")));
    header.push("f_gt".to_string());
    writeln!(out, "{}", header.join(","))?;
    for s in samples {
        let mut row: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
        row.extend(s.values.iter().map(|v| v.to_string()));
        row.push(s.f_gt.to_string());
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_dataset_csv<S: Real, R: BufRead>(
    input: R,
) -> Result<Vec<TrainingSample<S>>, DatasetError> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| DatasetError::Parse("empty file".into()))??;
    let expected = FEATURE_LEN + GENOME_LEN + 1;
    if header.split(',').count() != expected {
        return Err(DatasetError::Parse(format!(
            "expected {expected} columns, found {}",
            header.split(',').count()
        )));
    }
    let mut samples = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected {
            return Err(DatasetError::Parse(format!("row with {} fields", fields.len())));
        }
        let parse = |s: &str| -> Result<S, DatasetError> {
            s.parse::<f64>()
                .map_err(|_| DatasetError::Parse(format!("bad number {s:?}")))
                .map(|v| crate::scalar::real(v))
        };
        let mut features = [S::zero(); FEATURE_LEN];
        for (i, f) in features.iter_mut().enumerate() {
            *f = parse(fields[i])?;
        }
        let mut values = [S::zero(); GENOME_LEN];
        for (i, v) in values.iter_mut().enumerate() {
            *v = parse(fields[FEATURE_LEN + i])?;
        }
        samples.push(TrainingSample { features, values, f_gt: parse(fields[expected - 1])? });
    }
    Ok(samples)
}
