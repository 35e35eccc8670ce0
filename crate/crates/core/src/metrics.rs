//! Accuracy, macro-F1 and evaluation reports.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::Embedder;
use crate::exec::{self, Execution};
use crate::ingest::{Corpus, IngestError, LabeledExample};
use crate::kernel::WindowKind;
use crate::model::{ConversationKernel, ModelError, Prediction};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("predictions and labels differ in length ({preds} vs {labels})")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] IngestError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn from_labels(preds: &[u8], labels: &[u8]) -> Result<Self, MetricsError> {
        if preds.len() != labels.len() {
            return Err(MetricsError::LengthMismatch {
                preds: preds.len(),
                labels: labels.len(),
            });
        }
        if preds.is_empty() {
            return Err(MetricsError::Empty);
        }
        let mut m = ConfusionMatrix::default();
        for (&p, &y) in preds.iter().zip(labels) {
            match (p != 0, y != 0) {
                (true, true) => m.tp += 1,
                (true, false) => m.fp += 1,
                (false, false) => m.tn += 1,
                (false, true) => m.fn_ += 1,
            }
        }
        Ok(m)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    /// F1 of one class from its own true positives, false positives and false negatives.
    fn class_f1(tp: usize, fp: usize, fn_: usize) -> f64 {
        if tp + fp + fn_ == 0 {
            // class absent from both predictions and labels
            return 1.0;
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    }

    pub fn f1_positive(&self) -> f64 {
        Self::class_f1(self.tp, self.fp, self.fn_)
    }

    pub fn f1_negative(&self) -> f64 {
        Self::class_f1(self.tn, self.fn_, self.fp)
    }

    pub fn macro_f1(&self) -> f64 {
        (self.f1_positive() + self.f1_negative()) / 2.0
    }
}

pub fn accuracy(preds: &[u8], labels: &[u8]) -> Result<f64, MetricsError> {
    Ok(ConfusionMatrix::from_labels(preds, labels)?.accuracy())
}

pub fn macro_f1(preds: &[u8], labels: &[u8]) -> Result<f64, MetricsError> {
    Ok(ConfusionMatrix::from_labels(preds, labels)?.macro_f1())
}

/// Retrieval diagnostics for one window kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    /// Mean p(w|x) over all evaluated examples (0 where the window is empty).
    pub mean_prob: f64,
    /// Mean p(w|x) over the examples where the window is non-empty.
    pub mean_prob_nonempty: f64,
    pub nonempty_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleResult {
    pub conversation_id: String,
    pub target_id: String,
    pub label: u8,
    pub p_positive: f64,
    pub fallback_used: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
    pub retrieval: BTreeMap<WindowKind, WindowStats>,
    pub n: usize,
    pub threshold: f64,
    pub mean_loss: f64,
    pub examples: Vec<ExampleResult>,
}

impl EvalReport {
    pub fn from_predictions(
        dataset: &[LabeledExample],
        preds: &[Prediction],
        threshold: f64,
    ) -> Result<Self, MetricsError> {
        if dataset.len() != preds.len() {
            return Err(MetricsError::LengthMismatch {
                preds: preds.len(),
                labels: dataset.len(),
            });
        }
        let hard: Vec<u8> = preds.iter().map(|p| p.label(threshold)).collect();
        let labels: Vec<u8> = dataset.iter().map(|e| e.label).collect();
        let confusion = ConfusionMatrix::from_labels(&hard, &labels)?;

        let mut sums: BTreeMap<WindowKind, (f64, usize)> = BTreeMap::new();
        for p in preds {
            for w in &p.per_window {
                let e = sums.entry(w.kind).or_default();
                e.0 += w.retrieval_prob;
                if w.p_positive.is_some() {
                    e.1 += 1;
                }
            }
        }
        let n = preds.len() as f64;
        let retrieval = sums
            .into_iter()
            .map(|(k, (sum, nonempty))| {
                let stats = WindowStats {
                    mean_prob: sum / n,
                    mean_prob_nonempty: if nonempty == 0 { 0.0 } else { sum / nonempty as f64 },
                    nonempty_fraction: nonempty as f64 / n,
                };
                (k, stats)
            })
            .collect();

        let mean_loss = preds
            .iter()
            .zip(&labels)
            .map(|(p, &y)| crate::train::bce_loss(p.p_positive, y))
            .sum::<f64>()
            / n;

        let examples = dataset
            .iter()
            .zip(preds)
            .map(|(e, p)| ExampleResult {
                conversation_id: e.conversation_id.clone(),
                target_id: e.target_id.clone(),
                label: e.label,
                p_positive: p.p_positive,
                fallback_used: p.fallback_used,
            })
            .collect();

        Ok(EvalReport {
            accuracy: confusion.accuracy(),
            macro_f1: confusion.macro_f1(),
            confusion,
            retrieval,
            n: preds.len(),
            threshold,
            mean_loss,
            examples,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialise")
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "examples   {}", self.n)?;
        writeln!(f, "accuracy   {:.4}", self.accuracy)?;
        writeln!(f, "macro-F1   {:.4}", self.macro_f1)?;
        writeln!(f, "mean loss  {:.4}", self.mean_loss)?;
        let c = &self.confusion;
        writeln!(f, "confusion  tp={} fp={} tn={} fn={}", c.tp, c.fp, c.tn, c.fn_)?;
        if !self.retrieval.is_empty() {
            writeln!(f, "{:<10} {:>10} {:>14} {:>10}", "window", "mean p(w|x)", "non-empty mean", "non-empty")?;
            for (k, s) in &self.retrieval {
                writeln!(
                    f,
                    "{:<10} {:>10.4} {:>14.4} {:>10.4}",
                    k.as_str(),
                    s.mean_prob,
                    s.mean_prob_nonempty,
                    s.nonempty_fraction
                )?;
            }
        }
        Ok(())
    }
}

/// Predict every example and aggregate the report.
pub fn evaluate(
    model: &ConversationKernel,
    embedder: &Embedder,
    corpus: &Corpus,
    dataset: &[LabeledExample],
    exec: Execution,
) -> Result<EvalReport, MetricsError> {
    if dataset.is_empty() {
        return Err(MetricsError::Empty);
    }
    let preds = predict_all(model, embedder, corpus, dataset, exec)?;
    EvalReport::from_predictions(dataset, &preds, DEFAULT_THRESHOLD)
}

pub fn predict_all(
    model: &ConversationKernel,
    embedder: &Embedder,
    corpus: &Corpus,
    dataset: &[LabeledExample],
    exec: Execution,
) -> Result<Vec<Prediction>, MetricsError> {
    exec::try_map(exec, dataset, |ex| {
        let tree = corpus.tree(&ex.conversation_id)?;
        Ok(model.predict(embedder, tree, &ex.target_id)?)
    })
}
