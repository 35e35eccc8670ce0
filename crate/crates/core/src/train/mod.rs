//! End-to-end training of projections and head by minimising the binary
//! cross-entropy of the marginal prediction.

mod checkpoint;
mod grad;
mod optim;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{Checkpoint, CheckpointError, Tensor, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use grad::{batch_gradient, batch_gradient_into, batch_loss, dloss_dp, example_gradient, zeros_like, ExampleGrad, Gradients};
pub use optim::{Adam, AdamConfig};

use crate::embedding::Embedder;
use crate::exec::{self, Execution};
use crate::ingest::{Corpus, IngestError, LabeledExample};
use crate::metrics::ConfusionMatrix;
use crate::model::{forward_with, ConversationKernel, ExampleFeatures, ModelError, ModelParams};

pub const LOSS_EPSILON: f64 = 1e-7;
/// Learning rate for transformer-sidecar backbones.
pub const SIDECAR_LEARNING_RATE: f64 = 1e-5;
/// Learning rate for the frozen hash backbone, where only projections and head learn.
pub const HASH_LEARNING_RATE: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0} dataset is empty")]
    EmptyDataset(&'static str),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] IngestError),
}

/// Clamped binary cross-entropy, `p` clamped to `[1e-7, 1 - 1e-7]`.
pub fn bce_loss(p_positive: f64, label: u8) -> f64 {
    let p = p_positive.clamp(LOSS_EPSILON, 1.0 - LOSS_EPSILON);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub warmup_fraction: f64,
    pub seed: u64,
    pub adam: AdamConfig,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            learning_rate: HASH_LEARNING_RATE,
            epochs: 3,
            warmup_fraction: 0.10,
            seed: 0,
            adam: AdamConfig::default(),
            execution: Execution::default(),
        }
    }
}

impl TrainConfig {
    /// Defaults with the learning rate matched to the backbone.
    pub fn for_provider(provider_name: &str) -> Self {
        let learning_rate = if provider_name == crate::embedding::HASH_PROVIDER_NAME {
            HASH_LEARNING_RATE
        } else {
            SIDECAR_LEARNING_RATE
        };
        TrainConfig {
            learning_rate,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config("learning_rate must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(TrainError::Config("warmup_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, n_examples: usize) -> usize {
        n_examples.div_ceil(self.batch_size)
    }
}

/// Linear warm-up from 0 to the base rate over the first
/// `warmup_fraction * total_steps` steps, then constant.
pub fn lr_at(config: &TrainConfig, step: usize, total_steps: usize) -> f64 {
    let warmup = config.warmup_fraction * total_steps as f64;
    if warmup <= 0.0 {
        return config.learning_rate;
    }
    config.learning_rate * (step as f64 / warmup).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_macro_f1: f64,
    pub learning_rate: f64,
}

pub struct TrainState {
    pub params: ModelParams,
    pub best_params: ModelParams,
    pub best_epoch: Option<usize>,
    pub optimizer: Adam,
    pub step: u64,
    pub history: Vec<EpochRecord>,
}

impl TrainState {
    /// The best-validation parameters under the given model configuration.
    pub fn best_model(&self, base: &ConversationKernel) -> ConversationKernel {
        ConversationKernel {
            config: base.config,
            params: self.best_params.clone(),
        }
    }
}

/// Frozen backbone features for a dataset, in dataset order.
pub struct FeatureSet {
    pub features: Vec<ExampleFeatures>,
    pub labels: Vec<u8>,
}

impl FeatureSet {
    pub fn build(
        model: &ConversationKernel,
        embedder: &Embedder,
        corpus: &Corpus,
        examples: &[LabeledExample],
        exec: Execution,
    ) -> Result<Self, TrainError> {
        let features = exec::try_map(exec, examples, |ex| -> Result<ExampleFeatures, TrainError> {
            let tree = corpus.tree(&ex.conversation_id)?;
            Ok(model.features(embedder, tree, &ex.target_id)?.1)
        })?;
        Ok(FeatureSet {
            features,
            labels: examples.iter().map(|e| e.label).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn pairs(&self) -> Vec<(&ExampleFeatures, u8)> {
        self.features.iter().zip(self.labels.iter().copied()).collect()
    }

    /// Mean loss, accuracy and macro-F1 at threshold 0.5.
    pub fn score(&self, params: &ModelParams, exec: Execution) -> Result<(f64, f64, f64), ModelError> {
        let probs = exec::try_map(exec, &self.features, |f| forward_with(params, f).map(|t| t.p_positive))?;
        let loss = probs.iter().zip(&self.labels).map(|(&p, &y)| bce_loss(p, y)).sum::<f64>() / probs.len() as f64;
        let hard: Vec<u8> = probs.iter().map(|&p| u8::from(p >= crate::metrics::DEFAULT_THRESHOLD)).collect();
        let cm = ConfusionMatrix::from_labels(&hard, &self.labels).map_err(|e| ModelError::Config(e.to_string()))?;
        Ok((loss, cm.accuracy(), cm.macro_f1()))
    }
}

/// Train from scratch on `train_set`, selecting by validation macro-F1.
pub fn train(
    model: &ConversationKernel,
    embedder: &Embedder,
    corpus: &Corpus,
    train_set: &[LabeledExample],
    val_set: &[LabeledExample],
    config: &TrainConfig,
) -> Result<TrainState, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset("training"));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptyDataset("validation"));
    }
    let exec = config.execution;
    let train_feats = FeatureSet::build(model, embedder, corpus, train_set, exec)?;
    let val_feats = FeatureSet::build(model, embedder, corpus, val_set, exec)?;
    train_on_features(model.params.clone(), &train_feats, &val_feats, config)
}

pub fn train_on_features(
    initial: ModelParams,
    train_feats: &FeatureSet,
    val_feats: &FeatureSet,
    config: &TrainConfig,
) -> Result<TrainState, TrainError> {
    config.validate()?;
    if train_feats.is_empty() {
        return Err(TrainError::EmptyDataset("training"));
    }
    if val_feats.is_empty() {
        return Err(TrainError::EmptyDataset("validation"));
    }
    let exec = config.execution;
    let steps_per_epoch = config.steps_per_epoch(train_feats.len());
    let total_steps = steps_per_epoch * config.epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = initial;
    let mut optimizer = Adam::new(config.adam, &params);
    let mut best_params = params.clone();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_epoch = None;
    let mut history = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train_feats.len()).collect();
    let mut step = 0usize;
    let mut grads = zeros_like(&params);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut lr = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&ExampleFeatures, u8)> = chunk
                .iter()
                .map(|&i| (&train_feats.features[i], train_feats.labels[i]))
                .collect();
            let loss = batch_gradient_into(&params, &batch, exec, &mut grads)?;
            step += 1;
            lr = lr_at(config, step, total_steps);
            optimizer.step(&mut params, &grads, lr);
            epoch_loss += loss * chunk.len() as f64;
        }
        if !params.is_finite() {
            return Err(TrainError::Model(ModelError::Config(format!(
                "parameters diverged in epoch {epoch}; lower the learning rate"
            ))));
        }
        let (val_loss, val_accuracy, val_macro_f1) = val_feats.score(&params, exec)?;
        let rec = EpochRecord {
            epoch,
            train_loss: epoch_loss / train_feats.len() as f64,
            val_loss,
            val_accuracy,
            val_macro_f1,
            learning_rate: lr,
        };
        log::info!(
            "epoch {epoch}: train loss {:.4}, val loss {:.4}, val acc {:.4}, val macro-F1 {:.4}",
            rec.train_loss,
            rec.val_loss,
            rec.val_accuracy,
            rec.val_macro_f1
        );
        if val_macro_f1 > best_f1 {
            best_f1 = val_macro_f1;
            best_params = params.clone();
            best_epoch = Some(epoch);
        }
        history.push(rec);
    }

    Ok(TrainState {
        params,
        best_params,
        best_epoch,
        optimizer,
        step: step as u64,
        history,
    })
}
