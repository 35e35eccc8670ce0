//! Retriever, context-augmented encoder head, and the marginal prediction
//! `p(y | x) = sum_w p(y | w, x) p(w | x)` over a target's context windows.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{mean_vector, EmbeddingError, Embedder, ProjectionParams};
use crate::kernel::{extract_windows_at, KernelError, KernelShape, WindowKind, WindowSet};
use crate::tree::{ConversationTree, TreeError};

pub const DEFAULT_HIDDEN: usize = 128;
pub const PROJECTION_INIT_NOISE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("every window is masked out")]
    AllMasked,
    #[error("score and mask lengths differ ({scores} vs {mask})")]
    MaskLength { scores: usize, mask: usize },
    #[error(transparent)]
    UnknownTarget(#[from] TreeError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("model config: {0}")]
    Config(String),
}

/// Inner-product relevance between a projected target and a projected window.
pub fn relevance(x: &Array1<f64>, w: &Array1<f64>) -> Result<f64, ModelError> {
    if x.len() != w.len() {
        return Err(ModelError::DimensionMismatch {
            expected: x.len(),
            got: w.len(),
        });
    }
    Ok(x.dot(w))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalDistribution {
    pub probs: Vec<f64>,
    pub mask: Vec<bool>,
}

/// Max-subtracted softmax over the unmasked scores; masked entries get exactly 0.
pub fn retrieval_distribution(scores: &[f64], mask: &[bool]) -> Result<RetrievalDistribution, ModelError> {
    if scores.len() != mask.len() {
        return Err(ModelError::MaskLength {
            scores: scores.len(),
            mask: mask.len(),
        });
    }
    let max = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&s, _)| s)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(ModelError::AllMasked);
    }
    let mut probs: Vec<f64> = scores
        .iter()
        .zip(mask)
        .map(|(&s, &m)| if m { (s - max).exp() } else { 0.0 })
        .collect();
    let z: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= z);
    Ok(RetrievalDistribution {
        probs,
        mask: mask.to_vec(),
    })
}

/// One-hidden-layer ReLU network with a two-way softmax output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    /// hidden x input
    pub w_hidden: Array2<f64>,
    pub b_hidden: Array1<f64>,
    /// 2 x hidden
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

/// Intermediate values of one head evaluation, kept for backprop.
#[derive(Debug, Clone)]
pub struct HeadTrace {
    pub pre: Array1<f64>,
    pub hidden: Array1<f64>,
    pub probs: [f64; 2],
}

impl HeadParams {
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let a = 1.0 / (input as f64).sqrt();
        let b = 1.0 / (hidden as f64).sqrt();
        HeadParams {
            w_hidden: Array2::from_shape_fn((hidden, input), |_| rng.random_range(-a..=a)),
            b_hidden: Array1::zeros(hidden),
            w_out: Array2::from_shape_fn((2, hidden), |_| rng.random_range(-b..=b)),
            b_out: Array1::zeros(2),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        HeadParams {
            w_hidden: Array2::zeros((hidden, input)),
            b_hidden: Array1::zeros(hidden),
            w_out: Array2::zeros((2, hidden)),
            b_out: Array1::zeros(2),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_hidden.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.nrows()
    }

    pub fn forward(&self, input: &Array1<f64>) -> Result<HeadTrace, ModelError> {
        if input.len() != self.input_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let pre = crate::linalg::matvec(&self.w_hidden, input) + &self.b_hidden;
        let hidden = pre.mapv(|v| v.max(0.0));
        let logits = self.w_out.dot(&hidden) + &self.b_out;
        Ok(HeadTrace {
            pre,
            hidden,
            probs: softmax2(logits[0], logits[1]),
        })
    }

    /// `(p(y=0), p(y=1))` for one encoder embedding.
    pub fn classify(&self, input: &Array1<f64>) -> Result<[f64; 2], ModelError> {
        Ok(self.forward(input)?.probs)
    }
}

fn softmax2(l0: f64, l1: f64) -> [f64; 2] {
    let m = l0.max(l1);
    let e0 = (l0 - m).exp();
    let e1 = (l1 - m).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub projection: ProjectionParams,
    pub head: HeadParams,
}

impl ModelParams {
    pub fn n_scalars(&self) -> usize {
        self.projection.w_comment.len()
            + self.projection.w_window.len()
            + self.head.w_hidden.len()
            + self.head.b_hidden.len()
            + self.head.w_out.len()
            + self.head.b_out.len()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Row-major views of every tensor, in checkpoint order:
    /// w_comment, w_window, w_hidden, b_hidden, w_out, b_out.
    pub fn slices(&self) -> [&[f64]; 6] {
        let p = &self.projection;
        let h = &self.head;
        [
            p.w_comment.as_slice().expect("standard layout"),
            p.w_window.as_slice().expect("standard layout"),
            h.w_hidden.as_slice().expect("standard layout"),
            h.b_hidden.as_slice().expect("standard layout"),
            h.w_out.as_slice().expect("standard layout"),
            h.b_out.as_slice().expect("standard layout"),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 6] {
        let p = &mut self.projection;
        let h = &mut self.head;
        [
            p.w_comment.as_slice_mut().expect("standard layout"),
            p.w_window.as_slice_mut().expect("standard layout"),
            h.w_hidden.as_slice_mut().expect("standard layout"),
            h.b_hidden.as_slice_mut().expect("standard layout"),
            h.w_out.as_slice_mut().expect("standard layout"),
            h.b_out.as_slice_mut().expect("standard layout"),
        ]
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn add_scaled(&mut self, alpha: f64, other: &ModelParams) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += alpha * y;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub shape: KernelShape,
    pub d_backbone: usize,
    pub d_model: usize,
    pub hidden: usize,
}

impl ModelConfig {
    pub fn new(shape: KernelShape, d_backbone: usize) -> Self {
        ModelConfig {
            shape,
            d_backbone,
            d_model: d_backbone,
            hidden: DEFAULT_HIDDEN,
        }
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self
    }
}

/// Retriever projections plus classifier head for one kernel shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationKernel {
    pub config: ModelConfig,
    pub params: ModelParams,
}

/// Frozen backbone outputs for one window.
#[derive(Debug, Clone)]
pub struct WindowFeatures {
    /// Mean backbone embedding of the members.
    pub mean: Array1<f64>,
    /// Backbone embedding of the joined target + members sequence.
    pub joined: Arc<Array1<f64>>,
}

/// Everything the trainable part of the model needs about one target. The
/// backbone is frozen, so this is computed once per example.
#[derive(Debug, Clone)]
pub struct ExampleFeatures {
    pub kinds: Vec<WindowKind>,
    pub target: Arc<Array1<f64>>,
    pub windows: Vec<Option<WindowFeatures>>,
    /// Present only when every window is empty.
    pub fallback: Option<Arc<Array1<f64>>>,
}

impl ExampleFeatures {
    pub fn mask(&self) -> Vec<bool> {
        self.windows.iter().map(Option::is_some).collect()
    }

    pub fn uses_fallback(&self) -> bool {
        self.fallback.is_some()
    }
}

pub fn featurize(
    embedder: &Embedder,
    tree: &ConversationTree,
    windows: &WindowSet,
) -> Result<ExampleFeatures, ModelError> {
    let target_text = tree.comment(windows.target).text.as_str();
    let mut texts = vec![target_text];
    for w in &windows.windows {
        texts.extend(w.members.iter().map(|&m| tree.comment(m).text.as_str()));
    }
    let backbone = embedder.embed_texts(&texts)?;
    let target = backbone[0].clone();

    let mut offset = 1;
    let mut means = Vec::with_capacity(windows.windows.len());
    let mut joins = Vec::new();
    for w in &windows.windows {
        if w.is_empty() {
            means.push(None);
            continue;
        }
        let members: Vec<&Array1<f64>> = backbone[offset..offset + w.len()].iter().map(Arc::as_ref).collect();
        offset += w.len();
        means.push(Some(mean_vector(&members)));
        let member_texts: Vec<&str> = w.members.iter().map(|&m| tree.comment(m).text.as_str()).collect();
        joins.push(embedder.join(target_text, &member_texts));
    }

    if joins.is_empty() {
        let fallback = embedder.embed_joined(&embedder.join::<&str>(target_text, &[]))?;
        return Ok(ExampleFeatures {
            kinds: windows.windows.iter().map(|w| w.kind).collect(),
            target,
            windows: vec![None; windows.windows.len()],
            fallback: Some(fallback),
        });
    }

    let join_refs: Vec<_> = joins.iter().collect();
    let mut joined = embedder.embed_joined_batch(&join_refs)?.into_iter();
    let windows_feat = means
        .into_iter()
        .map(|m| {
            m.map(|mean| WindowFeatures {
                mean,
                joined: joined.next().expect("one joined embedding per non-empty window"),
            })
        })
        .collect();
    Ok(ExampleFeatures {
        kinds: windows.windows.iter().map(|w| w.kind).collect(),
        target,
        windows: windows_feat,
        fallback: None,
    })
}

/// Forward pass over precomputed features, with every intermediate kept.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub x: Array1<f64>,
    /// Projected window embeddings (None for empty windows).
    pub w: Vec<Option<Array1<f64>>>,
    pub scores: Vec<f64>,
    pub retrieval: Option<RetrievalDistribution>,
    pub heads: Vec<Option<HeadTrace>>,
    pub fallback_head: Option<HeadTrace>,
    pub p_positive: f64,
}

impl ConversationKernel {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        if config.hidden == 0 || config.d_model == 0 || config.d_backbone == 0 {
            return Err(ModelError::Config("dimensions must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let projection =
            ProjectionParams::init(config.d_model, config.d_backbone, PROJECTION_INIT_NOISE, &mut rng);
        let head = HeadParams::init(config.d_backbone, config.hidden, &mut rng);
        Ok(ConversationKernel {
            config,
            params: ModelParams { projection, head },
        })
    }

    pub fn shape(&self) -> &KernelShape {
        &self.config.shape
    }

    pub fn windows(&self, tree: &ConversationTree, target_id: &str) -> Result<WindowSet, ModelError> {
        let target = tree.index_of(target_id)?;
        Ok(extract_windows_at(tree, target, &self.config.shape))
    }

    pub fn features(
        &self,
        embedder: &Embedder,
        tree: &ConversationTree,
        target_id: &str,
    ) -> Result<(WindowSet, ExampleFeatures), ModelError> {
        if embedder.dim() != self.config.d_backbone {
            return Err(ModelError::DimensionMismatch {
                expected: self.config.d_backbone,
                got: embedder.dim(),
            });
        }
        let ws = self.windows(tree, target_id)?;
        let f = featurize(embedder, tree, &ws)?;
        Ok((ws, f))
    }

    pub fn forward(&self, f: &ExampleFeatures) -> Result<ForwardTrace, ModelError> {
        forward_with(&self.params, f)
    }

    /// Marginal prediction for one target comment.
    pub fn predict(
        &self,
        embedder: &Embedder,
        tree: &ConversationTree,
        target_id: &str,
    ) -> Result<Prediction, ModelError> {
        let (ws, f) = self.features(embedder, tree, target_id)?;
        let trace = self.forward(&f)?;
        Ok(Prediction::from_trace(&ws, &trace))
    }
}

pub fn forward_with(params: &ModelParams, f: &ExampleFeatures) -> Result<ForwardTrace, ModelError> {
    let x = params.projection.project_comment(&f.target)?;
    if let Some(fb) = &f.fallback {
        let head = params.head.forward(fb)?;
        let p_positive = head.probs[1];
        return Ok(ForwardTrace {
            x,
            w: vec![None; f.windows.len()],
            scores: vec![0.0; f.windows.len()],
            retrieval: None,
            heads: vec![None; f.windows.len()],
            fallback_head: Some(head),
            p_positive,
        });
    }
    let mut w = Vec::with_capacity(f.windows.len());
    let mut scores = Vec::with_capacity(f.windows.len());
    let mut heads = Vec::with_capacity(f.windows.len());
    for wf in &f.windows {
        match wf {
            Some(wf) => {
                let wk = params.projection.project_window(&wf.mean)?;
                scores.push(relevance(&x, &wk)?);
                w.push(Some(wk));
                heads.push(Some(params.head.forward(&wf.joined)?));
            }
            None => {
                scores.push(0.0);
                w.push(None);
                heads.push(None);
            }
        }
    }
    let retrieval = retrieval_distribution(&scores, &f.mask())?;
    let p_positive = retrieval
        .probs
        .iter()
        .zip(&heads)
        .filter_map(|(p, h)| h.as_ref().map(|h| p * h.probs[1]))
        .sum();
    Ok(ForwardTrace {
        x,
        w,
        scores,
        retrieval: Some(retrieval),
        heads,
        fallback_head: None,
        p_positive,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPrediction {
    pub kind: WindowKind,
    pub member_ids: Vec<String>,
    /// p(w | x); 0 for empty windows.
    pub retrieval_prob: f64,
    /// p(y = 1 | w, x); absent for empty windows.
    pub p_positive: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub target_id: String,
    pub p_positive: f64,
    pub per_window: Vec<WindowPrediction>,
    pub fallback_used: bool,
}

impl Prediction {
    pub fn from_trace(ws: &WindowSet, trace: &ForwardTrace) -> Self {
        let per_window = ws
            .windows
            .iter()
            .enumerate()
            .map(|(i, w)| WindowPrediction {
                kind: w.kind,
                member_ids: w.member_ids.clone(),
                retrieval_prob: trace.retrieval.as_ref().map_or(0.0, |r| r.probs[i]),
                p_positive: trace.heads[i].as_ref().map(|h| h.probs[1]),
            })
            .collect();
        Prediction {
            target_id: ws.target_id.clone(),
            p_positive: trace.p_positive,
            per_window,
            fallback_used: trace.fallback_head.is_some(),
        }
    }

    pub fn p_negative(&self) -> f64 {
        1.0 - self.p_positive
    }

    pub fn label(&self, threshold: f64) -> u8 {
        u8::from(self.p_positive >= threshold)
    }
}

/// `sum_w p(w|x) * p(y=1|w,x)` for already-computed per-window quantities.
pub fn marginalize(retrieval: &[f64], per_window_positive: &[f64]) -> f64 {
    retrieval.iter().zip(per_window_positive).map(|(p, q)| p * q).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelFamily;
    use crate::tree::fixtures::t0;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn relevance_examples() {
        let x = Array1::from(vec![1.0, 0.0]);
        let w = Array1::from(vec![0.0, 1.0]);
        assert_eq!(relevance(&x, &w).unwrap(), 0.0);
        let o = Array1::from(vec![1.0, 1.0]);
        assert_eq!(relevance(&o, &o).unwrap(), 2.0);
        assert!(relevance(&o, &Array1::zeros(3)).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut naive = 0.0;
        for i in 0..8 {
            naive += a[i] * b[i];
        }
        let (a, b) = (Array1::from(a), Array1::from(b));
        assert_abs_diff_eq!(relevance(&a, &b).unwrap(), naive, epsilon = 1e-12);
        assert_eq!(relevance(&a, &b).unwrap(), relevance(&b, &a).unwrap());
    }

    #[test]
    fn softmax_examples() {
        let d = retrieval_distribution(&[0.0, 0.0], &[true, true]).unwrap();
        assert_eq!(d.probs, vec![0.5, 0.5]);

        let d = retrieval_distribution(&[2f64.ln(), 0.0], &[true, true]).unwrap();
        assert_abs_diff_eq!(d.probs[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.probs[1], 1.0 / 3.0, epsilon = 1e-12);

        let d = retrieval_distribution(&[5.0, -3.0, 7.0], &[true, false, true]).unwrap();
        assert_eq!(d.probs[1], 0.0);
        let z = 5f64.exp() + 7f64.exp();
        assert_abs_diff_eq!(d.probs[0], 5f64.exp() / z, epsilon = 1e-12);
        assert_abs_diff_eq!(d.probs[2], 7f64.exp() / z, epsilon = 1e-12);

        assert_eq!(retrieval_distribution(&[1.0], &[false]).unwrap_err(), ModelError::AllMasked);
        assert!(retrieval_distribution(&[1.0], &[true, true]).is_err());
    }

    #[test]
    fn head_examples() {
        let h = HeadParams::zeros(4, 3);
        assert_eq!(h.classify(&Array1::ones(4)).unwrap(), [0.5, 0.5]);

        let mut h = HeadParams::zeros(4, 3);
        h.b_out = Array1::from(vec![0.0, 3f64.ln()]);
        let p = h.classify(&Array1::ones(4)).unwrap();
        assert_abs_diff_eq!(p[0], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.75, epsilon = 1e-12);

        assert!(h.classify(&Array1::ones(5)).is_err());
    }

    #[test]
    fn head_matches_naive_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let h = HeadParams {
                w_hidden: Array2::from_shape_fn((5, 6), |_| rng.random_range(-1.0..1.0)),
                b_hidden: Array1::from_shape_fn(5, |_| rng.random_range(-1.0..1.0)),
                w_out: Array2::from_shape_fn((2, 5), |_| rng.random_range(-1.0..1.0)),
                b_out: Array1::from_shape_fn(2, |_| rng.random_range(-1.0..1.0)),
            };
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut hidden = [0.0; 5];
            for (i, hv) in hidden.iter_mut().enumerate() {
                let mut s = h.b_hidden[i];
                for j in 0..6 {
                    s += h.w_hidden[[i, j]] * x[j];
                }
                *hv = if s > 0.0 { s } else { 0.0 };
            }
            let mut logits = [0.0; 2];
            for (k, l) in logits.iter_mut().enumerate() {
                *l = h.b_out[k] + (0..5).map(|i| h.w_out[[k, i]] * hidden[i]).sum::<f64>();
            }
            let want1 = logits[1].exp() / (logits[0].exp() + logits[1].exp());
            let got = h.classify(&Array1::from(x)).unwrap();
            assert_abs_diff_eq!(got[1], want1, epsilon = 1e-10);
            assert_abs_diff_eq!(got[0] + got[1], 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn marginalization_arithmetic() {
        assert_abs_diff_eq!(marginalize(&[0.8, 0.2], &[0.9, 0.5]), 0.82, epsilon = 1e-12);
    }

    #[test]
    fn single_window_gets_full_retrieval_mass() {
        let t = t0();
        let e = Embedder::hash(16).unwrap();
        let cfg = ModelConfig::new(KernelShape::new(KernelFamily::AncSibChild, 2).unwrap(), 16).with_hidden(4);
        let m = ConversationKernel::init(cfg, 5).unwrap();
        // f is a leaf with no siblings: only the ancestor window survives
        let p = m.predict(&e, &t, "f").unwrap();
        assert!(!p.fallback_used);
        assert_eq!(p.per_window[0].retrieval_prob, 1.0);
        assert_eq!(p.p_positive, p.per_window[0].p_positive.unwrap());
        assert_eq!(p.per_window[1].retrieval_prob, 0.0);
        assert!(p.per_window[1].p_positive.is_none());
    }

    #[test]
    fn isolated_root_uses_fallback() {
        let t = ConversationTree::build(vec![crate::tree::Comment::new("r", None, "c", 0, "lonely post")]).unwrap();
        let e = Embedder::hash(16).unwrap();
        let cfg = ModelConfig::new(KernelShape::default(), 16).with_hidden(4);
        let m = ConversationKernel::init(cfg, 5).unwrap();
        let p = m.predict(&e, &t, "r").unwrap();
        assert!(p.fallback_used);
        let fb = e.embed_joined(&e.join::<&str>("lonely post", &[])).unwrap();
        assert_eq!(p.p_positive, m.params.head.classify(&fb).unwrap()[1]);
        assert!(p.per_window.iter().all(|w| w.retrieval_prob == 0.0));
    }

    #[test]
    fn prediction_errors() {
        let t = t0();
        let e = Embedder::hash(16).unwrap();
        let m = ConversationKernel::init(ModelConfig::new(KernelShape::default(), 16).with_hidden(4), 0).unwrap();
        assert!(matches!(m.predict(&e, &t, "nope"), Err(ModelError::UnknownTarget(_))));
        let wrong = Embedder::hash(8).unwrap();
        assert!(matches!(m.predict(&wrong, &t, "c"), Err(ModelError::DimensionMismatch { .. })));
    }

    proptest! {
        #[test]
        fn softmax_shift_invariance(
            scores in prop::collection::vec(-50.0f64..50.0, 1..6),
            shift in -100.0f64..100.0,
            mask_bits in any::<u8>(),
        ) {
            let mut mask: Vec<bool> = (0..scores.len()).map(|i| mask_bits >> i & 1 == 1).collect();
            mask[0] = true;
            let a = retrieval_distribution(&scores, &mask).unwrap();
            let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            let b = retrieval_distribution(&shifted, &mask).unwrap();
            prop_assert!((a.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for i in 0..scores.len() {
                prop_assert!((a.probs[i] - b.probs[i]).abs() < 1e-9);
                prop_assert!(a.probs[i] >= 0.0);
                if !mask[i] { prop_assert_eq!(a.probs[i], 0.0); }
            }
        }

        #[test]
        fn positive_rescaling_keeps_argmax(seed in any::<u64>(), scale in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = Array1::from_shape_fn(6, |_| rng.random_range(-1.0..1.0));
            let ws: Vec<Array1<f64>> = (0..3).map(|_| Array1::from_shape_fn(6, |_| rng.random_range(-1.0..1.0))).collect();
            let argmax = |xs: &Array1<f64>, s: f64| {
                let sc: Vec<f64> = ws.iter().map(|w| relevance(&(xs * s), &(w * s)).unwrap()).collect();
                (0..3).max_by(|&a, &b| sc[a].total_cmp(&sc[b])).unwrap()
            };
            prop_assert_eq!(argmax(&x, 1.0), argmax(&x, scale));
        }
    }
}
