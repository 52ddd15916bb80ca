//! The epigenetic model: a state encoder producing the query vector, a
//! parameter-name embedding table, sigmoid scaled-dot-product attention
//! whose weights are the gene-expression probabilities, and a Conv1D +
//! MLP fitness-prediction head used for training. Forward and backward
//! passes are implemented here directly; no external autodiff.

mod checkpoint;
mod dataset;
mod train;

pub use checkpoint::{load_model, save_model, Checkpoint, CheckpointError};
pub use dataset::{
    build_dataset, read_dataset_csv, write_dataset_csv, DatasetError, DatasetStats,
    TrainingSample, FITNESS_FILTER_MAX,
};
pub use train::{loss_and_grads, loss_on, smooth_l1, train, TrainError, TrainHyper, TrainReport};

use ndarray::{Array1, Array2, Array3, ArrayViewD, ArrayViewMutD, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scalar::{real, Real};
use crate::scenario::GENOME_LEN;
use crate::{FeatureVec, FEATURE_LEN};

/// Query/key embedding width (d_k).
pub const EMBED_DIM: usize = 48;
/// Hidden width of the state encoder.
pub const ENC_HIDDEN: usize = 64;
/// Attention output length in the projected-context layout.
pub const ATTN_OUT_LEN: usize = 106;
/// Flatten length after the convolution stack in the projected layout.
pub const FLATTEN_LEN: usize = 3136;

/// Convolution stack: (out channels, kernel width, padding). Input is a
/// single channel of length `o_len`.
const CONV_SPECS: [(usize, usize, usize); 4] = [(16, 3, 1), (32, 5, 0), (64, 3, 1), (32, 5, 0)];
/// Hidden widths of the prediction MLP (final layer emits the scalar).
const MLP_WIDTHS: [usize; 3] = [512, 256, 128];

/// How the attention context enters the head.
///
/// `Projected`: the elementwise product A .* V is lifted to the embedding
/// width by a learned 10 -> 48 map, giving the 106-dimensional
/// concatenation (context, Q, V). `Raw` keeps the 10-dimensional product
/// and concatenates only Q after it (58 inputs); ablation use only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ContextMode {
    Projected,
    Raw,
}

impl ContextMode {
    pub fn o_len(&self) -> usize {
        match self {
            ContextMode::Projected => EMBED_DIM + EMBED_DIM + GENOME_LEN,
            ContextMode::Raw => GENOME_LEN + EMBED_DIM,
        }
    }

    pub fn flatten_len(&self) -> usize {
        let mut l = self.o_len();
        for (_, k, pad) in CONV_SPECS {
            l = conv_out_len(l, k, pad);
        }
        CONV_SPECS[CONV_SPECS.len() - 1].0 * l
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ContextMode::Projected => "projected",
            ContextMode::Raw => "raw",
        }
    }
}

impl std::str::FromStr for ContextMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "projected" => Ok(ContextMode::Projected),
            "raw" => Ok(ContextMode::Raw),
            other => Err(format!("unknown context mode {other:?}")),
        }
    }
}

fn conv_out_len(l_in: usize, k: usize, pad: usize) -> usize {
    l_in + 2 * pad - k + 1
}

/// Fully connected layer computing `x . w + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<S: Real> {
    pub w: Array2<S>,
    pub b: Array1<S>,
}

impl<S: Real> Dense<S> {
    fn glorot<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(real::<S>(-limit), real::<S>(limit));
        Self {
            w: Array2::from_shape_fn((n_in, n_out), |_| dist.sample(rng)),
            b: Array1::zeros(n_out),
        }
    }

    fn forward(&self, x: &Array2<S>) -> Array2<S> {
        x.dot(&self.w) + &self.b
    }
}

/// 1D convolution storing its kernel as a matrix of shape
/// (out_channels, in_channels * kernel) so forward and backward are
/// plain matrix products against im2col buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<S: Real> {
    pub w: Array2<S>,
    pub b: Array1<S>,
    pub in_ch: usize,
    pub kernel: usize,
    pub pad: usize,
}

impl<S: Real> Conv1d<S> {
    fn glorot<R: Rng + ?Sized>(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = in_ch * kernel;
        let fan_out = out_ch * kernel;
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(real::<S>(-limit), real::<S>(limit));
        Self {
            w: Array2::from_shape_fn((out_ch, in_ch * kernel), |_| dist.sample(rng)),
            b: Array1::zeros(out_ch),
            in_ch,
            kernel,
            pad,
        }
    }

    fn out_ch(&self) -> usize {
        self.w.nrows()
    }

    /// Build the im2col buffer (in_ch * kernel, l_out) for one sample.
    fn im2col(&self, input: &ndarray::ArrayView2<S>) -> Array2<S> {
        let l_in = input.ncols();
        let l_out = conv_out_len(l_in, self.kernel, self.pad);
        let mut col = Array2::zeros((self.in_ch * self.kernel, l_out));
        for c in 0..self.in_ch {
            for i in 0..self.kernel {
                for pos in 0..l_out {
                    let src = pos + i;
                    if src >= self.pad && src - self.pad < l_in {
                        col[[c * self.kernel + i, pos]] = input[[c, src - self.pad]];
                    }
                }
            }
        }
        col
    }

    /// Scatter gradient columns back to the (padded) input layout.
    fn col2im(&self, dcol: &Array2<S>, l_in: usize) -> Array2<S> {
        let l_out = dcol.ncols();
        let mut dinput = Array2::zeros((self.in_ch, l_in));
        for c in 0..self.in_ch {
            for i in 0..self.kernel {
                for pos in 0..l_out {
                    let src = pos + i;
                    if src >= self.pad && src - self.pad < l_in {
                        dinput[[c, src - self.pad]] += dcol[[c * self.kernel + i, pos]];
                    }
                }
            }
        }
        dinput
    }
}

/// All trainable tensors of the epigenetic model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S: Real> {
    pub mode: ContextMode,
    /// State encoder 16 -> 64 -> 48 with tanh activations (query path).
    pub enc1: Dense<S>,
    pub enc2: Dense<S>,
    /// Parameter-name embedding table K, one row per gene.
    pub keys: Array2<S>,
    /// Value layer mapping the 10 scaled parameter values to V.
    pub value: Dense<S>,
    /// Context projection lifting A .* V to the embedding width
    /// (projected mode only; unused but kept in raw mode).
    pub ctx_proj: Dense<S>,
    pub conv: Vec<Conv1d<S>>,
    pub mlp: Vec<Dense<S>>,
}

impl<S: Real> ModelParams<S> {
    /// Seeded initialization. The value layer starts at the identity
    /// (plus small noise) so V initially mirrors the parameter values,
    /// giving the attention weights their per-gene gating semantics from
    /// the first step.
    pub fn init(mode: ContextMode, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc1 = Dense::glorot(FEATURE_LEN, ENC_HIDDEN, &mut rng);
        let enc2 = Dense::glorot(ENC_HIDDEN, EMBED_DIM, &mut rng);
        let key_limit = (6.0 / (GENOME_LEN + EMBED_DIM) as f64).sqrt();
        let key_dist = Uniform::new_inclusive(real::<S>(-key_limit), real::<S>(key_limit));
        let keys = Array2::from_shape_fn((GENOME_LEN, EMBED_DIM), |_| key_dist.sample(&mut rng));
        let noise = Uniform::new_inclusive(real::<S>(-0.01), real::<S>(0.01));
        let mut value = Dense::glorot(GENOME_LEN, GENOME_LEN, &mut rng);
        value.w = Array2::from_shape_fn((GENOME_LEN, GENOME_LEN), |(i, j)| {
            let eye = if i == j { S::one() } else { S::zero() };
            eye + noise.sample(&mut rng)
        });
        let ctx_proj = Dense::glorot(GENOME_LEN, EMBED_DIM, &mut rng);
        let mut conv = Vec::new();
        let mut in_ch = 1;
        for (out_ch, k, pad) in CONV_SPECS {
            conv.push(Conv1d::glorot(in_ch, out_ch, k, pad, &mut rng));
            in_ch = out_ch;
        }
        let mut mlp = Vec::new();
        let mut width = mode.flatten_len();
        for w in MLP_WIDTHS {
            mlp.push(Dense::glorot(width, w, &mut rng));
            width = w;
        }
        mlp.push(Dense::glorot(width, 1, &mut rng));
        Self { mode, enc1, enc2, keys, value, ctx_proj, conv, mlp }
    }

    /// Encode feature batches into queries (tanh MLP), returning the
    /// hidden activations for backprop.
    fn encode(&self, feats: &Array2<S>) -> (Array2<S>, Array2<S>) {
        let h1 = self.enc1.forward(feats).mapv(S::tanh);
        let q = self.enc2.forward(&h1).mapv(S::tanh);
        (h1, q)
    }

    /// Attention weights for one environment state: sigmoid of the
    /// scaled dot products between the encoded query and each gene's key
    /// embedding. Strictly inside (0, 1) for finite inputs.
    pub fn attention_weights(&self, features: &FeatureVec<S>) -> [S; GENOME_LEN] {
        let feats = Array2::from_shape_fn((1, FEATURE_LEN), |(_, j)| features[j]);
        let (_, q) = self.encode(&feats);
        let scale = real::<S>((EMBED_DIM as f64).sqrt());
        let logits = q.dot(&self.keys.t()) / scale;
        let mut out = [S::zero(); GENOME_LEN];
        for j in 0..GENOME_LEN {
            out[j] = sigmoid(logits[[0, j]]);
        }
        out
    }

    /// Full forward pass over a batch. Caches every intermediate needed
    /// by [`ModelParams::backward`].
    pub fn forward(&self, feats: Array2<S>, pv: Array2<S>) -> BatchCache<S> {
        let batch = feats.nrows();
        assert_eq!(feats.ncols(), FEATURE_LEN);
        assert_eq!(pv.ncols(), GENOME_LEN);
        assert_eq!(pv.nrows(), batch);

        let (h1, q) = self.encode(&feats);
        let scale = real::<S>((EMBED_DIM as f64).sqrt());
        let logits = q.dot(&self.keys.t()) / scale;
        let a = logits.mapv(sigmoid);
        let v = self.value.forward(&pv);
        let av = &a * &v;

        let (ctx, o) = match self.mode {
            ContextMode::Projected => {
                let ctx = self.ctx_proj.forward(&av);
                let mut o = Array2::zeros((batch, self.mode.o_len()));
                o.slice_mut(ndarray::s![.., 0..EMBED_DIM]).assign(&ctx);
                o.slice_mut(ndarray::s![.., EMBED_DIM..2 * EMBED_DIM]).assign(&q);
                o.slice_mut(ndarray::s![.., 2 * EMBED_DIM..]).assign(&v);
                (Some(ctx), o)
            }
            ContextMode::Raw => {
                let mut o = Array2::zeros((batch, self.mode.o_len()));
                o.slice_mut(ndarray::s![.., 0..GENOME_LEN]).assign(&av);
                o.slice_mut(ndarray::s![.., GENOME_LEN..]).assign(&q);
                (None, o)
            }
        };
        debug_assert_eq!(o.ncols(), self.mode.o_len());

        // Convolution stack over (batch, channels, length).
        let mut conv_inputs: Vec<Array3<S>> = Vec::with_capacity(CONV_SPECS.len() + 1);
        let mut cols: Vec<Array3<S>> = Vec::with_capacity(CONV_SPECS.len());
        let mut current = {
            let mut t = Array3::zeros((batch, 1, self.mode.o_len()));
            t.slice_mut(ndarray::s![.., 0, ..]).assign(&o);
            t
        };
        for layer in &self.conv {
            conv_inputs.push(current.clone());
            let l_in = current.len_of(Axis(2));
            let l_out = conv_out_len(l_in, layer.kernel, layer.pad);
            let mut col_batch = Array3::zeros((batch, layer.in_ch * layer.kernel, l_out));
            let mut out = Array3::zeros((batch, layer.out_ch(), l_out));
            for bi in 0..batch {
                let col = layer.im2col(&current.index_axis(Axis(0), bi));
                let z = layer.w.dot(&col) + &layer.b.view().insert_axis(Axis(1));
                out.index_axis_mut(Axis(0), bi).assign(&z.mapv(relu));
                col_batch.index_axis_mut(Axis(0), bi).assign(&col);
            }
            cols.push(col_batch);
            current = out;
        }
        conv_inputs.push(current.clone());

        let flat_len = self.mode.flatten_len();
        let flat = current
            .into_shape_with_order((batch, flat_len))
            .expect("conv output is contiguous");

        let mut mlp_inputs = Vec::with_capacity(self.mlp.len());
        let mut x = flat.clone();
        for (i, layer) in self.mlp.iter().enumerate() {
            mlp_inputs.push(x.clone());
            let z = layer.forward(&x);
            x = if i + 1 < self.mlp.len() { z.mapv(relu) } else { z };
        }
        let f = x.index_axis(Axis(1), 0).to_owned();

        BatchCache {
            feats,
            pv,
            h1,
            q,
            a,
            v,
            av,
            ctx,
            conv_inputs,
            cols,
            flat,
            mlp_inputs,
            f,
        }
    }

    /// Predicted fitness for one sample.
    pub fn predict(&self, sample: &dataset::TrainingSample<S>) -> S {
        let feats = Array2::from_shape_fn((1, FEATURE_LEN), |(_, j)| sample.features[j]);
        let pv = Array2::from_shape_fn((1, GENOME_LEN), |(_, j)| sample.values[j]);
        self.forward(feats, pv).f[0]
    }

    /// Backward pass: given dL/df per sample, accumulate gradients for
    /// every tensor.
    pub fn backward(&self, cache: &BatchCache<S>, dl_df: &Array1<S>) -> ModelGrads<S> {
        let batch = cache.f.len();
        let mut grads = ModelGrads::zeros_like(self);

        // MLP backward.
        let mut grad: Array2<S> = dl_df.view().insert_axis(Axis(1)).to_owned();
        for i in (0..self.mlp.len()).rev() {
            let input = &cache.mlp_inputs[i];
            grads.mlp[i].w = input.t().dot(&grad);
            grads.mlp[i].b = grad.sum_axis(Axis(0));
            let mut dinput = grad.dot(&self.mlp[i].w.t());
            if i > 0 {
                // Backprop through the ReLU applied to this input.
                dinput.zip_mut_with(input, |g, &x| {
                    if x <= S::zero() {
                        *g = S::zero();
                    }
                });
            }
            grad = dinput;
        }

        // Unflatten to the conv output layout.
        let last_len = cache.conv_inputs.last().unwrap().len_of(Axis(2));
        let last_ch = CONV_SPECS[CONV_SPECS.len() - 1].0;
        let mut dconv = grad
            .into_shape_with_order((batch, last_ch, last_len))
            .expect("flatten gradient is contiguous");

        // Conv backward, newest layer first.
        for (li, layer) in self.conv.iter().enumerate().rev() {
            let post = &cache.conv_inputs[li + 1];
            dconv.zip_mut_with(post, |g, &x| {
                if x <= S::zero() {
                    *g = S::zero();
                }
            });
            let l_in = cache.conv_inputs[li].len_of(Axis(2));
            let mut dinput = Array3::zeros((batch, layer.in_ch, l_in));
            for bi in 0..batch {
                let dout = dconv.index_axis(Axis(0), bi);
                let col = cache.cols[li].index_axis(Axis(0), bi);
                grads.conv[li].w += &dout.dot(&col.t());
                grads.conv[li].b += &dout.sum_axis(Axis(1));
                let dcol = layer.w.t().dot(&dout);
                dinput.index_axis_mut(Axis(0), bi).assign(&layer.col2im(&dcol, l_in));
            }
            dconv = dinput;
        }
        let do_attn: Array2<S> = dconv.index_axis(Axis(1), 0).to_owned();

        // Split the concatenation gradient per context mode.
        let (dav, dq_shortcut, dv_shortcut) = match self.mode {
            ContextMode::Projected => {
                let dctx = do_attn.slice(ndarray::s![.., 0..EMBED_DIM]).to_owned();
                let dq = do_attn.slice(ndarray::s![.., EMBED_DIM..2 * EMBED_DIM]).to_owned();
                let dv = do_attn.slice(ndarray::s![.., 2 * EMBED_DIM..]).to_owned();
                grads.ctx_proj.w = cache.av.t().dot(&dctx);
                grads.ctx_proj.b = dctx.sum_axis(Axis(0));
                let dav = dctx.dot(&self.ctx_proj.w.t());
                (dav, dq, Some(dv))
            }
            ContextMode::Raw => {
                let dav = do_attn.slice(ndarray::s![.., 0..GENOME_LEN]).to_owned();
                let dq = do_attn.slice(ndarray::s![.., GENOME_LEN..]).to_owned();
                (dav, dq, None)
            }
        };

        let da = &dav * &cache.v;
        let mut dv = &dav * &cache.a;
        if let Some(dvs) = dv_shortcut {
            dv = dv + dvs;
        }
        grads.value.w = cache.pv.t().dot(&dv);
        grads.value.b = dv.sum_axis(Axis(0));

        // Through the sigmoid and the scaled dot product.
        let scale = real::<S>((EMBED_DIM as f64).sqrt());
        let ones: Array2<S> = Array2::from_elem(cache.a.raw_dim(), S::one());
        let dlogits = da * &cache.a * (ones - &cache.a);
        grads.keys = dlogits.t().dot(&cache.q) / scale;
        let dq_attn = dlogits.dot(&self.keys) / scale;
        let dq_total = dq_shortcut + dq_attn;

        // Encoder backward through both tanh layers.
        let ones_q: Array2<S> = Array2::from_elem(cache.q.raw_dim(), S::one());
        let dpre_q = dq_total * (ones_q - &cache.q * &cache.q);
        grads.enc2.w = cache.h1.t().dot(&dpre_q);
        grads.enc2.b = dpre_q.sum_axis(Axis(0));
        let dh1 = dpre_q.dot(&self.enc2.w.t());
        let ones_h: Array2<S> = Array2::from_elem(cache.h1.raw_dim(), S::one());
        let dpre_h = dh1 * (ones_h - &cache.h1 * &cache.h1);
        grads.enc1.w = cache.feats.t().dot(&dpre_h);
        grads.enc1.b = dpre_h.sum_axis(Axis(0));

        grads
    }

    /// Named views over every tensor, in a fixed order shared with
    /// [`ModelGrads`].
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, S>)> {
        let mut out: Vec<(String, ArrayViewD<'_, S>)> = vec![
            ("enc1_w".into(), self.enc1.w.view().into_dyn()),
            ("enc1_b".into(), self.enc1.b.view().into_dyn()),
            ("enc2_w".into(), self.enc2.w.view().into_dyn()),
            ("enc2_b".into(), self.enc2.b.view().into_dyn()),
            ("keys".into(), self.keys.view().into_dyn()),
            ("value_w".into(), self.value.w.view().into_dyn()),
            ("value_b".into(), self.value.b.view().into_dyn()),
            ("ctx_proj_w".into(), self.ctx_proj.w.view().into_dyn()),
            ("ctx_proj_b".into(), self.ctx_proj.b.view().into_dyn()),
        ];
        for (i, c) in self.conv.iter().enumerate() {
            out.push((format!("conv{}_w", i + 1), c.w.view().into_dyn()));
            out.push((format!("conv{}_b", i + 1), c.b.view().into_dyn()));
        }
        for (i, d) in self.mlp.iter().enumerate() {
            out.push((format!("mlp{}_w", i + 1), d.w.view().into_dyn()));
            out.push((format!("mlp{}_b", i + 1), d.b.view().into_dyn()));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, ArrayViewMutD<'_, S>)> {
        let mut out: Vec<(String, ArrayViewMutD<'_, S>)> = vec![
            ("enc1_w".into(), self.enc1.w.view_mut().into_dyn()),
            ("enc1_b".into(), self.enc1.b.view_mut().into_dyn()),
            ("enc2_w".into(), self.enc2.w.view_mut().into_dyn()),
            ("enc2_b".into(), self.enc2.b.view_mut().into_dyn()),
            ("keys".into(), self.keys.view_mut().into_dyn()),
            ("value_w".into(), self.value.w.view_mut().into_dyn()),
            ("value_b".into(), self.value.b.view_mut().into_dyn()),
            ("ctx_proj_w".into(), self.ctx_proj.w.view_mut().into_dyn()),
            ("ctx_proj_b".into(), self.ctx_proj.b.view_mut().into_dyn()),
        ];
        for (i, c) in self.conv.iter_mut().enumerate() {
            out.push((format!("conv{}_w", i + 1), c.w.view_mut().into_dyn()));
            out.push((format!("conv{}_b", i + 1), c.b.view_mut().into_dyn()));
        }
        for (i, d) in self.mlp.iter_mut().enumerate() {
            out.push((format!("mlp{}_w", i + 1), d.w.view_mut().into_dyn()));
            out.push((format!("mlp{}_b", i + 1), d.b.view_mut().into_dyn()));
        }
        out
    }
}

/// Gradients, one tensor per trainable tensor of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads<S: Real> {
    pub enc1: Dense<S>,
    pub enc2: Dense<S>,
    pub keys: Array2<S>,
    pub value: Dense<S>,
    pub ctx_proj: Dense<S>,
    pub conv: Vec<Conv1d<S>>,
    pub mlp: Vec<Dense<S>>,
}

impl<S: Real> ModelGrads<S> {
    pub fn zeros_like(params: &ModelParams<S>) -> Self {
        let zero_dense = |d: &Dense<S>| Dense {
            w: Array2::zeros(d.w.raw_dim()),
            b: Array1::zeros(d.b.raw_dim()),
        };
        Self {
            enc1: zero_dense(&params.enc1),
            enc2: zero_dense(&params.enc2),
            keys: Array2::zeros(params.keys.raw_dim()),
            value: zero_dense(&params.value),
            ctx_proj: zero_dense(&params.ctx_proj),
            conv: params
                .conv
                .iter()
                .map(|c| Conv1d {
                    w: Array2::zeros(c.w.raw_dim()),
                    b: Array1::zeros(c.b.raw_dim()),
                    in_ch: c.in_ch,
                    kernel: c.kernel,
                    pad: c.pad,
                })
                .collect(),
            mlp: params.mlp.iter().map(zero_dense).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.enc1.w += &other.enc1.w;
        self.enc1.b += &other.enc1.b;
        self.enc2.w += &other.enc2.w;
        self.enc2.b += &other.enc2.b;
        self.keys += &other.keys;
        self.value.w += &other.value.w;
        self.value.b += &other.value.b;
        self.ctx_proj.w += &other.ctx_proj.w;
        self.ctx_proj.b += &other.ctx_proj.b;
        for (a, b) in self.conv.iter_mut().zip(&other.conv) {
            a.w += &b.w;
            a.b += &b.b;
        }
        for (a, b) in self.mlp.iter_mut().zip(&other.mlp) {
            a.w += &b.w;
            a.b += &b.b;
        }
    }

    /// Views in the same order as [`ModelParams::tensors`].
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, S>)> {
        let mut out: Vec<(String, ArrayViewD<'_, S>)> = vec![
            ("enc1_w".into(), self.enc1.w.view().into_dyn()),
            ("enc1_b".into(), self.enc1.b.view().into_dyn()),
            ("enc2_w".into(), self.enc2.w.view().into_dyn()),
            ("enc2_b".into(), self.enc2.b.view().into_dyn()),
            ("keys".into(), self.keys.view().into_dyn()),
            ("value_w".into(), self.value.w.view().into_dyn()),
            ("value_b".into(), self.value.b.view().into_dyn()),
            ("ctx_proj_w".into(), self.ctx_proj.w.view().into_dyn()),
            ("ctx_proj_b".into(), self.ctx_proj.b.view().into_dyn()),
        ];
        for (i, c) in self.conv.iter().enumerate() {
            out.push((format!("conv{}_w", i + 1), c.w.view().into_dyn()));
            out.push((format!("conv{}_b", i + 1), c.b.view().into_dyn()));
        }
        for (i, d) in self.mlp.iter().enumerate() {
            out.push((format!("mlp{}_w", i + 1), d.w.view().into_dyn()));
            out.push((format!("mlp{}_b", i + 1), d.b.view().into_dyn()));
        }
        out
    }
}

/// Forward-pass intermediates for one batch.
pub struct BatchCache<S: Real> {
    pub feats: Array2<S>,
    pub pv: Array2<S>,
    pub h1: Array2<S>,
    pub q: Array2<S>,
    pub a: Array2<S>,
    pub v: Array2<S>,
    pub av: Array2<S>,
    pub ctx: Option<Array2<S>>,
    conv_inputs: Vec<Array3<S>>,
    cols: Vec<Array3<S>>,
    pub flat: Array2<S>,
    mlp_inputs: Vec<Array2<S>>,
    pub f: Array1<S>,
}

impl<S: Real> BatchCache<S> {
    /// Length of the attention-output concatenation.
    pub fn o_len(&self) -> usize {
        self.conv_inputs[0].len_of(Axis(2))
    }

    /// Length of the flattened conv output feeding the MLP.
    pub fn flatten_len(&self) -> usize {
        self.flat.ncols()
    }
}

fn sigmoid<S: Real>(x: S) -> S {
    S::one() / (S::one() + (-x).exp())
}

fn relu<S: Real>(x: S) -> S {
    x.max(S::zero())
}
