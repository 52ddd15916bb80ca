//! Training utility: smooth-L1 loss, analytic gradients over batches,
//! and the SGD-with-momentum loop with an 80/20 train/test split.

use ndarray::{Array1, Array2, ArrayD};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::dataset::TrainingSample;
use super::{ContextMode, ModelGrads, ModelParams};
use crate::scalar::{real, Real};
use crate::scenario::GENOME_LEN;
use crate::FEATURE_LEN;

/// Smooth-L1 loss between a prediction and its ground truth:
/// `0.5 d^2` for |d| < 1, `|d| - 0.5` otherwise.
pub fn smooth_l1<S: Real>(f: S, f_gt: S) -> S {
    let d = (f_gt - f).abs();
    if d < S::one() {
        real::<S>(0.5) * d * d
    } else {
        d - real::<S>(0.5)
    }
}

/// d(smooth_l1)/df.
fn smooth_l1_grad<S: Real>(f: S, f_gt: S) -> S {
    let d = f - f_gt;
    if d.abs() < S::one() {
        d
    } else if d > S::zero() {
        S::one()
    } else {
        -S::one()
    }
}

fn pack<S: Real>(samples: &[TrainingSample<S>]) -> (Array2<S>, Array2<S>, Array1<S>) {
    let feats = Array2::from_shape_fn((samples.len(), FEATURE_LEN), |(i, j)| {
        samples[i].features[j]
    });
    let pv = Array2::from_shape_fn((samples.len(), GENOME_LEN), |(i, j)| samples[i].values[j]);
    let gt = Array1::from_iter(samples.iter().map(|s| s.f_gt));
    (feats, pv, gt)
}

/// Mean smooth-L1 loss of `params` over `samples` (forward only).
pub fn loss_on<S: Real>(params: &ModelParams<S>, samples: &[TrainingSample<S>]) -> S {
    let (feats, pv, gt) = pack(samples);
    let cache = params.forward(feats, pv);
    let n = real::<S>(samples.len() as f64);
    cache.f.iter().zip(gt.iter()).map(|(&f, &g)| smooth_l1(f, g)).sum::<S>() / n
}

/// Mean smooth-L1 loss plus analytic gradients over a batch. The batch
/// is split into chunks evaluated in parallel; chunk gradients are
/// reduced in a fixed order so results do not depend on thread timing.
pub fn loss_and_grads<S: Real>(
    params: &ModelParams<S>,
    samples: &[TrainingSample<S>],
) -> (S, ModelGrads<S>) {
    assert!(!samples.is_empty());
    let n = samples.len();
    let chunk = n.div_ceil(rayon::current_num_threads().max(1)).max(16);
    let pieces: Vec<(S, ModelGrads<S>)> = samples
        .par_chunks(chunk)
        .map(|part| {
            let (feats, pv, gt) = pack(part);
            let cache = params.forward(feats, pv);
            let inv_n = S::one() / real::<S>(n as f64);
            let mut loss_sum = S::zero();
            let dl_df = Array1::from_iter(cache.f.iter().zip(gt.iter()).map(|(&f, &g)| {
                loss_sum += smooth_l1(f, g);
                smooth_l1_grad(f, g) * inv_n
            }));
            (loss_sum * inv_n, params.backward(&cache, &dl_df))
        })
        .collect();
    let mut total_loss = S::zero();
    let mut grads = ModelGrads::zeros_like(params);
    for (loss, g) in pieces {
        total_loss += loss;
        grads.add_assign(&g);
    }
    (total_loss, grads)
}

/// Training hyperparameters. `attn_lr_mult` scales the learning rate of
/// the attention-side tensors (encoder and key embeddings), which adapt
/// slower than the wide head under a single global rate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainHyper {
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    pub attn_lr_mult: f64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self { batch: 64, epochs: 60, lr: 1e-3, momentum: 0.9, seed: 0, attn_lr_mult: 1.0 }
    }
}

/// Held-out metrics and the training-loss history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub train_size: usize,
    pub test_size: usize,
    pub initial_loss: f64,
    pub final_train_loss: f64,
    pub test_mse: f64,
    pub test_mae: f64,
    pub batch_losses: Vec<f64>,
}

impl TrainReport {
    /// Moving average of the batch losses over `window` steps.
    pub fn smoothed_losses(&self, window: usize) -> Vec<f64> {
        if self.batch_losses.len() < window || window == 0 {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(self.batch_losses.len() - window + 1);
        let mut sum: f64 = self.batch_losses[..window].iter().sum();
        out.push(sum / window as f64);
        for i in window..self.batch_losses.len() {
            sum += self.batch_losses[i] - self.batch_losses[i - window];
            out.push(sum / window as f64);
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training diverged: batch loss {loss} exceeds 10x the initial loss {initial}")]
    Diverged { loss: f64, initial: f64 },
}

const ATTN_TENSORS: [&str; 5] = ["enc1_w", "enc1_b", "enc2_w", "enc2_b", "keys"];

/// Train a fresh model on `dataset` with mini-batch SGD plus momentum.
/// The dataset is shuffled once into an 80/20 train/test split; returns
/// the trained parameters and held-out MSE/MAE.
pub fn train<S: Real>(
    dataset: &[TrainingSample<S>],
    hyper: &TrainHyper,
    mode: ContextMode,
) -> Result<(ModelParams<S>, TrainReport), TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    indices.shuffle(&mut rng);
    let split = ((dataset.len() * 8).div_ceil(10)).max(1);
    let (train_idx, test_idx) = indices.split_at(split.min(dataset.len()));
    let train_set: Vec<TrainingSample<S>> = train_idx.iter().map(|&i| dataset[i]).collect();
    let test_set: Vec<TrainingSample<S>> = test_idx.iter().map(|&i| dataset[i]).collect();

    let mut params = ModelParams::init(mode, hyper.seed.wrapping_add(1));
    let mut velocity: Vec<ArrayD<S>> = params
        .tensors()
        .iter()
        .map(|(_, t)| ArrayD::zeros(t.raw_dim()))
        .collect();

    let batch = hyper.batch.min(train_set.len()).max(1);
    let momentum = real::<S>(hyper.momentum);
    let mut batch_losses = Vec::new();
    let mut initial_loss: Option<f64> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for _epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for ids in order.chunks(batch) {
            let minibatch: Vec<TrainingSample<S>> = ids.iter().map(|&i| train_set[i]).collect();
            let (loss, grads) = loss_and_grads(&params, &minibatch);
            let loss_f = loss.to_f64().unwrap();
            let initial = *initial_loss.get_or_insert(loss_f);
            if loss_f > 10.0 * initial.max(1e-9) {
                return Err(TrainError::Diverged { loss: loss_f, initial });
            }
            batch_losses.push(loss_f);

            let gviews = grads.tensors();
            for (slot, ((name, mut p), vel)) in
                params.tensors_mut().into_iter().zip(velocity.iter_mut()).enumerate()
            {
                let mult = if ATTN_TENSORS.contains(&name.as_str()) {
                    hyper.attn_lr_mult
                } else {
                    1.0
                };
                let lr = real::<S>(hyper.lr * mult);
                let g = &gviews[slot].1;
                vel.zip_mut_with(g, |v, &gi| *v = momentum * *v - lr * gi);
                p.zip_mut_with(vel, |pi, &vi| *pi += vi);
            }
        }
    }

    let eval_set: &[TrainingSample<S>] = if test_set.is_empty() { &train_set } else { &test_set };
    let (mse, mae) = prediction_errors(&params, eval_set);
    let final_train_loss = loss_on(&params, &train_set).to_f64().unwrap();
    let report = TrainReport {
        train_size: train_set.len(),
        test_size: test_set.len(),
        initial_loss: initial_loss.unwrap_or(0.0),
        final_train_loss,
        test_mse: mse,
        test_mae: mae,
        batch_losses,
    };
    Ok((params, report))
}

/// MSE and MAE of the model's predictions over a sample set.
pub fn prediction_errors<S: Real>(
    params: &ModelParams<S>,
    samples: &[TrainingSample<S>],
) -> (f64, f64) {
    let (feats, pv, gt) = pack(samples);
    let cache = params.forward(feats, pv);
    let mut se = 0.0;
    let mut ae = 0.0;
    for (&f, &g) in cache.f.iter().zip(gt.iter()) {
        let d = (f - g).to_f64().unwrap();
        se += d * d;
        ae += d.abs();
    }
    let n = samples.len() as f64;
    (se / n, ae / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn smooth_l1_branch_values() {
        assert_eq!(smooth_l1(2.0, 2.0), 0.0);
        assert_relative_eq!(smooth_l1(2.5, 2.0), 0.125, max_relative = 1e-15);
        assert_relative_eq!(smooth_l1(0.0, 2.0), 1.5, max_relative = 1e-15);
        // Symmetric in the sign of the difference.
        assert_eq!(smooth_l1(2.0, 2.5), smooth_l1(2.5, 2.0));
    }

    #[test]
    fn memorizes_identical_samples() {
        let sample = TrainingSample::<f64> {
            features: [0.1; FEATURE_LEN],
            values: [0.5; GENOME_LEN],
            f_gt: 2.0,
        };
        let dataset = vec![sample; 50];
        let hyper = TrainHyper { epochs: 120, batch: 16, lr: 3e-3, ..TrainHyper::default() };
        let (params, report) = train(&dataset, &hyper, ContextMode::Projected).unwrap();
        assert!(report.final_train_loss < 1e-4, "loss {}", report.final_train_loss);
        let pred = params.predict(&sample);
        assert!((pred - 2.0).abs() < 0.05, "prediction {pred}");
    }

    #[test]
    fn smoothed_losses_trend_downward() {
        // Learnable mapping: f_gt linear in one parameter value.
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let dataset: Vec<TrainingSample<f64>> = (0..300)
            .map(|_| {
                let mut values = [0.0; GENOME_LEN];
                for v in &mut values {
                    *v = rand::Rng::gen_range(&mut rng, 0.0..=1.0);
                }
                let mut features = [0.0; FEATURE_LEN];
                for f in &mut features {
                    *f = rand::Rng::gen_range(&mut rng, -0.05..=0.05);
                }
                TrainingSample { features, values, f_gt: 5.0 * (1.0 - values[1]) }
            })
            .collect();
        let hyper = TrainHyper { epochs: 30, ..TrainHyper::default() };
        let (_, report) = train(&dataset, &hyper, ContextMode::Projected).unwrap();
        let smoothed = report.smoothed_losses(50);
        assert!(!smoothed.is_empty());
        let first = smoothed.first().unwrap();
        let last = smoothed.last().unwrap();
        assert!(last < first, "smoothed loss did not decrease: {first} -> {last}");
        // Allow small local wobble but no sustained increase.
        for w in smoothed.windows(2) {
            assert!(w[1] <= w[0] * 1.10 + 1e-6, "smoothed loss jumped: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let sample = TrainingSample::<f64> {
            features: [0.1; FEATURE_LEN],
            values: [0.5; GENOME_LEN],
            f_gt: 2.0,
        };
        let dataset = vec![sample; 64];
        // An absurd learning rate blows the loss up immediately.
        let hyper = TrainHyper { epochs: 50, lr: 1e3, ..TrainHyper::default() };
        match train(&dataset, &hyper, ContextMode::Projected) {
            Err(TrainError::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn split_is_80_20() {
        let sample = TrainingSample::<f64> {
            features: [0.0; FEATURE_LEN],
            values: [0.0; GENOME_LEN],
            f_gt: 1.0,
        };
        let dataset = vec![sample; 100];
        let hyper = TrainHyper { epochs: 1, ..TrainHyper::default() };
        let (_, report) = train(&dataset, &hyper, ContextMode::Projected).unwrap();
        assert_eq!(report.train_size, 80);
        assert_eq!(report.test_size, 20);
    }
}
