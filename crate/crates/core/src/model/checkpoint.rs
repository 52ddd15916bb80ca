//! Model checkpoints: a versioned JSON file holding every tensor with
//! its name and shape, the context-mode switch, and the gene names.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::{ContextMode, ModelParams};
use crate::scalar::{real, Real};
use crate::scenario::encode_names;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Serialized model.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub context_mode: String,
    pub gene_names: Vec<String>,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),
}

impl Checkpoint {
    pub fn from_params<S: Real>(params: &ModelParams<S>) -> Self {
        let tensors = params
            .tensors()
            .into_iter()
            .map(|(name, view)| TensorEntry {
                name,
                shape: view.shape().to_vec(),
                data: view.iter().map(|v| v.to_f64().unwrap()).collect(),
            })
            .collect();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            context_mode: params.mode.as_str().to_string(),
            gene_names: encode_names().iter().map(|s| s.to_string()).collect(),
            tensors,
        }
    }

    pub fn into_params<S: Real>(self) -> Result<ModelParams<S>, CheckpointError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Incompatible(format!(
                "version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let mode: ContextMode = self
            .context_mode
            .parse()
            .map_err(CheckpointError::Incompatible)?;
        let mut params = ModelParams::init(mode, 0);
        let mut entries: std::collections::BTreeMap<String, TensorEntry> =
            self.tensors.into_iter().map(|t| (t.name.clone(), t)).collect();
        for (name, mut view) in params.tensors_mut() {
            let entry = entries.remove(&name).ok_or_else(|| {
                CheckpointError::Incompatible(format!("missing tensor {name}"))
            })?;
            if entry.shape != view.shape() {
                return Err(CheckpointError::Incompatible(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    entry.shape,
                    view.shape()
                )));
            }
            let data: Vec<S> = entry.data.iter().map(|&v| real(v)).collect();
            let arr = ArrayD::from_shape_vec(view.raw_dim(), data).map_err(|e| {
                CheckpointError::Incompatible(format!("tensor {name}: {e}"))
            })?;
            view.assign(&arr);
        }
        if let Some(extra) = entries.keys().next() {
            return Err(CheckpointError::Incompatible(format!("unknown tensor {extra}")));
        }
        Ok(params)
    }
}

/// Save a model checkpoint to `path` as JSON.
pub fn save_model<S: Real>(params: &ModelParams<S>, path: &Path) -> Result<(), CheckpointError> {
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    serde_json::to_writer(&mut writer, &Checkpoint::from_params(params))?;
    Ok(())
}

/// Load a model checkpoint from `path`.
pub fn load_model<S: Real>(path: &Path) -> Result<ModelParams<S>, CheckpointError> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let ckpt: Checkpoint = serde_json::from_reader(reader)?;
    ckpt.into_params()
}
