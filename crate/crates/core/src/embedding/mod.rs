//! Text embedding backbones and the trainable comment/window projections.

mod hashing;
mod join;
#[cfg(feature = "remote")]
mod remote;

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use parking_lot::RwLock;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use hashing::{fnv1a, HashEmbedder, DEFAULT_HASH_DIM, HASH_MAX_SEQUENCE_LENGTH, HASH_PROVIDER_NAME};
pub use join::{
    join_texts, tokenize, JoinConfig, JoinedSequence, Token, BEGIN_MARKER, DEFAULT_TOKENS_PER_COMMENT,
    SEP_MARKER,
};
#[cfg(feature = "remote")]
pub use remote::{RemoteConfig, RemoteProvider, REMOTE_PROVIDER_NAME};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbeddingError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot embed an empty window")]
    EmptyWindow,
    #[error("provider returned a non-finite value")]
    NonFinite,
    #[error("provider protocol error: {0}")]
    Protocol(String),
    #[error("invalid provider configuration: {0}")]
    InvalidConfig(String),
}

/// Identity of a backbone, stored in checkpoints so a model can be re-paired
/// with the provider it was trained against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderDescriptor {
    pub name: String,
    pub dim: usize,
    pub deterministic: bool,
    pub max_sequence_length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
}

/// A frozen text-to-vector backbone. Batched so remote backends can amortise
/// round trips; vectors come back in input order.
pub trait EmbeddingProvider: Send + Sync {
    fn descriptor(&self) -> ProviderDescriptor;
    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError>;
    fn embed_joined(&self, seqs: &[&JoinedSequence]) -> Result<Vec<Vec<f64>>, EmbeddingError>;
}

type CacheKey = [u8; 32];

/// Shared provider handle plus a content-addressed cache.
pub struct Embedder {
    provider: Arc<dyn EmbeddingProvider>,
    descriptor: ProviderDescriptor,
    join: JoinConfig,
    cache: Option<RwLock<HashMap<CacheKey, Arc<Array1<f64>>>>>,
}

impl Embedder {
    pub fn new(provider: Arc<dyn EmbeddingProvider>) -> Self {
        let descriptor = provider.descriptor();
        let join = JoinConfig::new(descriptor.max_sequence_length);
        Embedder {
            provider,
            descriptor,
            join,
            cache: Some(RwLock::new(HashMap::new())),
        }
    }

    pub fn uncached(provider: Arc<dyn EmbeddingProvider>) -> Self {
        Embedder {
            cache: None,
            ..Embedder::new(provider)
        }
    }

    pub fn hash(dim: usize) -> Result<Self, EmbeddingError> {
        Ok(Embedder::new(Arc::new(HashEmbedder::new(dim)?)))
    }

    pub fn with_join_config(mut self, join: JoinConfig) -> Self {
        self.join = join;
        self
    }

    pub fn descriptor(&self) -> &ProviderDescriptor {
        &self.descriptor
    }

    pub fn dim(&self) -> usize {
        self.descriptor.dim
    }

    pub fn join_config(&self) -> &JoinConfig {
        &self.join
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.as_ref().map_or(0, |c| c.read().len())
    }

    fn key(&self, kind: u8, content: &str) -> CacheKey {
        let mut h = Sha256::new();
        h.update(self.descriptor.name.as_bytes());
        h.update([0, kind]);
        h.update(content.as_bytes());
        h.finalize().into()
    }

    fn check(&self, v: Vec<f64>) -> Result<Array1<f64>, EmbeddingError> {
        if v.len() != self.descriptor.dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.descriptor.dim,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(Array1::from(v))
    }

    /// Look up each item, send the misses to the provider in one batch, and
    /// return results in input order.
    fn cached_batch<T>(
        &self,
        kind: u8,
        items: &[T],
        content: impl Fn(&T) -> String,
        fetch: impl FnOnce(&[&T]) -> Result<Vec<Vec<f64>>, EmbeddingError>,
    ) -> Result<Vec<Arc<Array1<f64>>>, EmbeddingError> {
        let Some(cache) = &self.cache else {
            let refs: Vec<&T> = items.iter().collect();
            return fetch(&refs)?
                .into_iter()
                .map(|v| self.check(v).map(Arc::new))
                .collect();
        };
        let keys: Vec<CacheKey> = items.iter().map(|it| self.key(kind, &content(it))).collect();
        let mut out: Vec<Option<Arc<Array1<f64>>>> = {
            let read = cache.read();
            keys.iter().map(|k| read.get(k).cloned()).collect()
        };
        let miss: Vec<usize> = (0..items.len()).filter(|&i| out[i].is_none()).collect();
        if !miss.is_empty() {
            let refs: Vec<&T> = miss.iter().map(|&i| &items[i]).collect();
            let fetched = fetch(&refs)?;
            if fetched.len() != miss.len() {
                return Err(EmbeddingError::Protocol(format!(
                    "requested {} embeddings, got {}",
                    miss.len(),
                    fetched.len()
                )));
            }
            let mut write = cache.write();
            for (&i, v) in miss.iter().zip(fetched) {
                let v = write.entry(keys[i]).or_insert(Arc::new(self.check(v)?)).clone();
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled above")).collect())
    }

    pub fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Arc<Array1<f64>>>, EmbeddingError> {
        self.cached_batch(
            b't',
            texts,
            |t| (*t).to_owned(),
            |miss| {
                let m: Vec<&str> = miss.iter().map(|t| **t).collect();
                self.provider.embed_texts(&m)
            },
        )
    }

    pub fn embed_text(&self, text: &str) -> Result<Arc<Array1<f64>>, EmbeddingError> {
        Ok(self.embed_texts(&[text])?.remove(0))
    }

    pub fn embed_joined_batch(
        &self,
        seqs: &[&JoinedSequence],
    ) -> Result<Vec<Arc<Array1<f64>>>, EmbeddingError> {
        self.cached_batch(
            b'j',
            seqs,
            |s| s.render(),
            |miss| {
                let m: Vec<&JoinedSequence> = miss.iter().map(|s| **s).collect();
                self.provider.embed_joined(&m)
            },
        )
    }

    pub fn embed_joined(&self, seq: &JoinedSequence) -> Result<Arc<Array1<f64>>, EmbeddingError> {
        Ok(self.embed_joined_batch(&[seq])?.remove(0))
    }

    pub fn join<S: AsRef<str>>(&self, target: &str, window: &[S]) -> JoinedSequence {
        join_texts(target, window, &self.join)
    }
}

/// Mean of equally sized vectors. Panics on an empty slice.
pub fn mean_vector(vs: &[&Array1<f64>]) -> Array1<f64> {
    let mut acc = Array1::zeros(vs[0].len());
    for v in vs {
        acc += *v;
    }
    acc / vs.len() as f64
}

/// Trainable linear maps from backbone space into the retrieval space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionParams {
    /// d_model x d_backbone
    pub w_comment: Array2<f64>,
    /// d_model x d_backbone
    pub w_window: Array2<f64>,
}

impl ProjectionParams {
    /// Identity-shaped start with uniform noise in `[-noise, noise]`.
    pub fn init<R: Rng>(d_model: usize, d_backbone: usize, noise: f64, rng: &mut R) -> Self {
        let eye = |rng: &mut R| {
            Array2::from_shape_fn((d_model, d_backbone), |(i, j)| {
                let base = if i == j { 1.0 } else { 0.0 };
                base + if noise > 0.0 { rng.random_range(-noise..=noise) } else { 0.0 }
            })
        };
        let w_comment = eye(rng);
        let w_window = eye(rng);
        ProjectionParams { w_comment, w_window }
    }

    pub fn d_model(&self) -> usize {
        self.w_comment.nrows()
    }

    pub fn d_backbone(&self) -> usize {
        self.w_comment.ncols()
    }

    pub fn project_comment(&self, backbone: &Array1<f64>) -> Result<Array1<f64>, EmbeddingError> {
        project(&self.w_comment, backbone)
    }

    pub fn project_window(&self, mean: &Array1<f64>) -> Result<Array1<f64>, EmbeddingError> {
        project(&self.w_window, mean)
    }

    /// `W_comment * backbone(text)`
    pub fn embed_comment(&self, embedder: &Embedder, text: &str) -> Result<Array1<f64>, EmbeddingError> {
        self.project_comment(&*embedder.embed_text(text)?)
    }

    /// `W_window * mean(backbone(member) for member in window)`
    pub fn embed_window<S: AsRef<str>>(
        &self,
        embedder: &Embedder,
        window_texts: &[S],
    ) -> Result<Array1<f64>, EmbeddingError> {
        if window_texts.is_empty() {
            return Err(EmbeddingError::EmptyWindow);
        }
        let texts: Vec<&str> = window_texts.iter().map(AsRef::as_ref).collect();
        let vs = embedder.embed_texts(&texts)?;
        let refs: Vec<&Array1<f64>> = vs.iter().map(Arc::as_ref).collect();
        self.project_window(&mean_vector(&refs))
    }
}

fn project(w: &Array2<f64>, v: &Array1<f64>) -> Result<Array1<f64>, EmbeddingError> {
    if w.ncols() != v.len() {
        return Err(EmbeddingError::DimensionMismatch {
            expected: w.ncols(),
            got: v.len(),
        });
    }
    Ok(crate::linalg::matvec(w, v))
}
