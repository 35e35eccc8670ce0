//! Versioned JSON checkpoint.
//!
//! ```text
//! {
//!   "format": "conversation-kernel-checkpoint",
//!   "version": 1,
//!   "model":    { "shape": {"family", "window_size"}, "d_backbone", "d_model", "hidden" },
//!   "provider": { "name", "dim", "deterministic", "max_sequence_length", "url"? },
//!   "train_config": { ... } | null,
//!   "params": { "w_comment" | "w_window" | "w_hidden" | "b_hidden" | "w_out" | "b_out":
//!               { "shape": [..], "values": [row-major f64] } },
//!   "history": [ { "epoch", "train_loss", "val_loss", "val_accuracy", "val_macro_f1", "learning_rate" } ],
//!   "best_epoch": int | null,
//!   "metadata": { str: str }
//! }
//! ```
//!
//! Floats are written in shortest round-trip form, so save/load is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{ProjectionParams, ProviderDescriptor};
use crate::model::{ConversationKernel, HeadParams, ModelConfig, ModelParams};

use super::{EpochRecord, TrainConfig};

pub const CHECKPOINT_FORMAT: &str = "conversation-kernel-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("not a checkpoint (format '{0}')")]
    Format(String),
    #[error("unsupported checkpoint version {0} (this build reads {CHECKPOINT_VERSION})")]
    Version(u32),
    #[error("tensor '{name}': {reason}")]
    Tensor { name: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    fn matrix(a: &Array2<f64>) -> Self {
        Tensor {
            shape: a.shape().to_vec(),
            values: a.iter().copied().collect(),
        }
    }

    fn vector(a: &Array1<f64>) -> Self {
        Tensor {
            shape: vec![a.len()],
            values: a.to_vec(),
        }
    }

    fn check(&self, name: &'static str, shape: &[usize]) -> Result<(), CheckpointError> {
        let err = |reason: String| CheckpointError::Tensor { name, reason };
        if self.shape != shape {
            return Err(err(format!("expected shape {shape:?}, found {:?}", self.shape)));
        }
        if self.values.len() != shape.iter().product::<usize>() {
            return Err(err(format!("{} values for shape {shape:?}", self.values.len())));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(err("non-finite value".into()));
        }
        Ok(())
    }

    fn to_matrix(&self, name: &'static str, rows: usize, cols: usize) -> Result<Array2<f64>, CheckpointError> {
        self.check(name, &[rows, cols])?;
        Ok(Array2::from_shape_vec((rows, cols), self.values.clone()).expect("shape checked"))
    }

    fn to_vector(&self, name: &'static str, len: usize) -> Result<Array1<f64>, CheckpointError> {
        self.check(name, &[len])?;
        Ok(Array1::from(self.values.clone()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointParams {
    pub w_comment: Tensor,
    pub w_window: Tensor,
    pub w_hidden: Tensor,
    pub b_hidden: Tensor,
    pub w_out: Tensor,
    pub b_out: Tensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub model: ModelConfig,
    pub provider: ProviderDescriptor,
    pub train_config: Option<TrainConfig>,
    pub params: CheckpointParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(model: &ConversationKernel, provider: ProviderDescriptor) -> Self {
        let p = &model.params;
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            model: model.config,
            provider,
            train_config: None,
            params: CheckpointParams {
                w_comment: Tensor::matrix(&p.projection.w_comment),
                w_window: Tensor::matrix(&p.projection.w_window),
                w_hidden: Tensor::matrix(&p.head.w_hidden),
                b_hidden: Tensor::vector(&p.head.b_hidden),
                w_out: Tensor::matrix(&p.head.w_out),
                b_out: Tensor::vector(&p.head.b_out),
            },
            history: Vec::new(),
            best_epoch: None,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_training(mut self, config: &TrainConfig, history: &[EpochRecord], best_epoch: Option<usize>) -> Self {
        self.train_config = Some(*config);
        self.history = history.to_vec();
        self.best_epoch = best_epoch;
        self
    }

    pub fn model(&self) -> Result<ConversationKernel, CheckpointError> {
        let c = &self.model;
        let p = &self.params;
        let params = ModelParams {
            projection: ProjectionParams {
                w_comment: p.w_comment.to_matrix("w_comment", c.d_model, c.d_backbone)?,
                w_window: p.w_window.to_matrix("w_window", c.d_model, c.d_backbone)?,
            },
            head: HeadParams {
                w_hidden: p.w_hidden.to_matrix("w_hidden", c.hidden, c.d_backbone)?,
                b_hidden: p.b_hidden.to_vector("b_hidden", c.hidden)?,
                w_out: p.w_out.to_matrix("w_out", 2, c.hidden)?,
                b_out: p.b_out.to_vector("b_out", 2)?,
            },
        };
        Ok(ConversationKernel { config: *c, params })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoints always serialise")
    }

    pub fn from_json(s: &str) -> Result<Self, CheckpointError> {
        let value: serde_json::Value = serde_json::from_str(s)?;
        let format = value.get("format").and_then(|f| f.as_str()).unwrap_or_default();
        if format != CHECKPOINT_FORMAT {
            return Err(CheckpointError::Format(format.to_owned()));
        }
        let version = value.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let ck: Checkpoint = serde_json::from_str(s)?;
        ck.model()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_json()).map_err(|source| CheckpointError::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let s = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.to_owned(),
            source,
        })?;
        Checkpoint::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Embedder;
    use crate::kernel::KernelShape;

    fn sample() -> (ConversationKernel, Checkpoint) {
        let m = ConversationKernel::init(ModelConfig::new(KernelShape::default(), 8).with_hidden(4), 42).unwrap();
        let e = Embedder::hash(8).unwrap();
        let ck = Checkpoint::new(&m, e.descriptor().clone());
        (m, ck)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (m, ck) = sample();
        let back = Checkpoint::from_json(&ck.to_json()).unwrap();
        assert_eq!(back, ck);
        let m2 = back.model().unwrap();
        for (a, b) in m.params.slices().iter().zip(m2.params.slices()) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn rejects_foreign_or_corrupt_files() {
        let (_, ck) = sample();
        let mut v: serde_json::Value = serde_json::from_str(&ck.to_json()).unwrap();
        v["version"] = 99.into();
        assert!(matches!(Checkpoint::from_json(&v.to_string()), Err(CheckpointError::Version(99))));

        let mut v: serde_json::Value = serde_json::from_str(&ck.to_json()).unwrap();
        v["format"] = "other".into();
        assert!(matches!(Checkpoint::from_json(&v.to_string()), Err(CheckpointError::Format(_))));

        let mut v: serde_json::Value = serde_json::from_str(&ck.to_json()).unwrap();
        v["params"]["b_out"]["values"] = serde_json::json!([0.0]);
        assert!(matches!(
            Checkpoint::from_json(&v.to_string()),
            Err(CheckpointError::Tensor { name: "b_out", .. })
        ));

        assert!(matches!(Checkpoint::from_json("{"), Err(CheckpointError::Parse(_))));
    }
}
