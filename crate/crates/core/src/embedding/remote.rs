//! Client for an external embedding sidecar speaking the `/embed` protocol.

use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::join::JoinedSequence;
use super::{EmbeddingError, EmbeddingProvider, ProviderDescriptor};

pub const REMOTE_PROVIDER_NAME: &str = "remote";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub url: String,
    pub timeout_ms: u64,
    pub retries: u32,
    pub max_batch: usize,
    pub max_sequence_length: usize,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        RemoteConfig {
            url: url.into(),
            timeout_ms: 30_000,
            retries: 2,
            max_batch: 32,
            max_sequence_length: 512,
        }
    }
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct HealthResponse {
    status: String,
    dim: usize,
}

pub struct RemoteProvider {
    cfg: RemoteConfig,
    dim: usize,
    client: reqwest::blocking::Client,
}

impl RemoteProvider {
    /// Connect and read the service dimension from `GET /health`.
    pub fn connect(cfg: RemoteConfig) -> Result<Self, EmbeddingError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| EmbeddingError::ProviderUnavailable(e.to_string()))?;
        let mut provider = RemoteProvider { cfg, dim: 0, client };
        let health: HealthResponse = provider.with_retries(|p| {
            let resp = p
                .client
                .get(p.endpoint("health"))
                .send()
                .map_err(|e| EmbeddingError::ProviderUnavailable(e.to_string()))?;
            if !resp.status().is_success() {
                return Err(EmbeddingError::ProviderUnavailable(format!(
                    "health check returned {}",
                    resp.status()
                )));
            }
            resp.json().map_err(|e| EmbeddingError::Protocol(e.to_string()))
        })?;
        if health.status != "ok" || health.dim == 0 {
            return Err(EmbeddingError::ProviderUnavailable(format!(
                "service not ready (status '{}', dim {})",
                health.status, health.dim
            )));
        }
        provider.dim = health.dim;
        Ok(provider)
    }

    fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.cfg.url.trim_end_matches('/'), path)
    }

    fn with_retries<T>(
        &self,
        mut f: impl FnMut(&Self) -> Result<T, EmbeddingError>,
    ) -> Result<T, EmbeddingError> {
        let mut attempt = 0;
        loop {
            match f(self) {
                Err(EmbeddingError::ProviderUnavailable(msg)) if attempt < self.cfg.retries => {
                    attempt += 1;
                    log::warn!("embedding service unavailable ({msg}); retry {attempt}");
                    thread::sleep(Duration::from_millis(100 * u64::from(attempt)));
                }
                other => return other,
            }
        }
    }

    fn post_batch(&self, path: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let resp: EmbedResponse = self.with_retries(|p| {
            let resp = p
                .client
                .post(p.endpoint(path))
                .json(&EmbedRequest { texts })
                .send()
                .map_err(|e| EmbeddingError::ProviderUnavailable(e.to_string()))?;
            let status = resp.status();
            if status.is_server_error() {
                return Err(EmbeddingError::ProviderUnavailable(format!("{path} returned {status}")));
            }
            if !status.is_success() {
                return Err(EmbeddingError::Protocol(format!("{path} returned {status}")));
            }
            resp.json().map_err(|e| EmbeddingError::Protocol(e.to_string()))
        })?;
        if resp.dim != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dim,
                got: resp.dim,
            });
        }
        if resp.vectors.len() != texts.len() {
            return Err(EmbeddingError::Protocol(format!(
                "sent {} texts, received {} vectors",
                texts.len(),
                resp.vectors.len()
            )));
        }
        if let Some(bad) = resp.vectors.iter().find(|v| v.len() != self.dim) {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dim,
                got: bad.len(),
            });
        }
        Ok(resp.vectors)
    }

    fn post_all(&self, path: &str, texts: Vec<String>) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.cfg.max_batch.max(1)) {
            out.extend(self.post_batch(path, chunk)?);
        }
        Ok(out)
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn descriptor(&self) -> ProviderDescriptor {
        ProviderDescriptor {
            name: REMOTE_PROVIDER_NAME.into(),
            dim: self.dim,
            deterministic: true,
            max_sequence_length: self.cfg.max_sequence_length,
            url: Some(self.cfg.url.clone()),
        }
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        self.post_all("embed", texts.iter().map(|t| (*t).to_owned()).collect())
    }

    fn embed_joined(&self, seqs: &[&JoinedSequence]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        self.post_all("embed_joined", seqs.iter().map(|s| s.render()).collect())
    }
}
