//! Embedding vectors, cosine similarity, and the embedder front-end.
//!
//! Texts are embedded either through a remote HTTP endpoint or by the
//! deterministic local bag-of-words embedder. Either way results are cached
//! by content hash of (model id, normalized text), so identical text never
//! hits the backend twice and repeated runs see bit-identical vectors.

mod cache;
mod local;
mod remote;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use cache::EmbeddingCache;
pub use local::local_deterministic_embed;
pub(crate) use local::fnv1a_64;

use crate::bank::normalize_whitespace;
use crate::error::{Error, Result};

/// A fixed-dimension real vector tagged with the model that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub model_id: String,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Which embedding backend to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedderKind {
    Remote,
    LocalDeterministic,
}

/// Embedder configuration. The model itself is configuration, not code: a
/// remote endpoint serving any sentence-embedding model, or the local
/// deterministic stand-in for offline runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    pub model_id: String,
    pub dim: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Environment variable holding the bearer token for the remote endpoint.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
}

fn default_timeout_secs() -> u64 {
    30
}

fn default_max_retries() -> u32 {
    3
}

fn default_api_key_env() -> String {
    "EMBEDDING_API_KEY".to_string()
}

impl EmbedderConfig {
    /// A local deterministic embedder with the given dimension.
    pub fn local(dim: usize) -> Self {
        EmbedderConfig {
            kind: EmbedderKind::LocalDeterministic,
            endpoint_url: None,
            model_id: format!("hashed-bow-{dim}"),
            dim,
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            api_key_env: default_api_key_env(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Validation("embedder dim must be positive".into()));
        }
        if self.kind == EmbedderKind::Remote && self.endpoint_url.is_none() {
            return Err(Error::Validation(
                "remote embedder requires endpoint_url".into(),
            ));
        }
        if self.kind == EmbedderKind::LocalDeterministic && self.dim < 8 {
            return Err(Error::Validation(
                "local deterministic embedder requires dim >= 8".into(),
            ));
        }
        Ok(())
    }
}

/// Embeds texts according to an [`EmbedderConfig`], consulting the cache
/// per element.
pub struct Embedder {
    cfg: EmbedderConfig,
    cache: Option<EmbeddingCache>,
    remote: Option<remote::RemoteEmbedder>,
}

impl Embedder {
    pub fn new(cfg: EmbedderConfig) -> Result<Self> {
        cfg.validate()?;
        let remote = match cfg.kind {
            EmbedderKind::Remote => Some(remote::RemoteEmbedder::new(&cfg)?),
            EmbedderKind::LocalDeterministic => None,
        };
        Ok(Embedder {
            cfg,
            cache: None,
            remote,
        })
    }

    /// Attach an on-disk cache rooted at `dir`.
    pub fn with_cache_dir(mut self, dir: &Path) -> Result<Self> {
        self.cache = Some(EmbeddingCache::open(dir)?);
        Ok(self)
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.cfg
    }

    /// Embed one text. Identical (text, model_id) pairs always yield
    /// identical vectors.
    pub fn embed_text(&self, text: &str) -> Result<EmbeddingVector> {
        let normalized = normalize_whitespace(text);
        if normalized.is_empty() {
            return Err(Error::EmptyText);
        }
        if let Some(cache) = &self.cache {
            if let Some(vector) = cache.get(&self.cfg.model_id, &normalized) {
                if vector.dim() != self.cfg.dim {
                    return Err(Error::Validation(format!(
                        "cached vector for model {:?} has dim {} but config says {}",
                        self.cfg.model_id,
                        vector.dim(),
                        self.cfg.dim
                    )));
                }
                return Ok(vector);
            }
        }
        let vector = self.embed_uncached(&normalized)?;
        if let Some(cache) = &self.cache {
            cache.put(&self.cfg.model_id, &normalized, &vector)?;
        }
        Ok(vector)
    }

    /// Embed a batch, preserving order. Any element failure aborts the batch
    /// naming the failing index.
    pub fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let mut vectors = Vec::with_capacity(texts.len());
        for (idx, text) in texts.iter().enumerate() {
            let vector = self.embed_text(text).map_err(|e| match e {
                Error::EmptyText => {
                    Error::Validation(format!("batch element {idx} is empty after normalization"))
                }
                other => other,
            })?;
            vectors.push(vector);
        }
        Ok(vectors)
    }

    fn embed_uncached(&self, normalized: &str) -> Result<EmbeddingVector> {
        let vector = match self.cfg.kind {
            EmbedderKind::LocalDeterministic => {
                let mut v = local_deterministic_embed(normalized, self.cfg.dim)?;
                v.model_id = self.cfg.model_id.clone();
                v
            }
            EmbedderKind::Remote => self
                .remote
                .as_ref()
                .expect("remote embedder constructed for remote kind")
                .embed(normalized)?,
        };
        if vector.dim() != self.cfg.dim {
            return Err(Error::DimensionMismatch {
                left: vector.dim(),
                right: self.cfg.dim,
            });
        }
        if vector.is_zero() {
            return Err(Error::DegenerateEmbedding(format!(
                "all-zero vector for text {normalized:?}"
            )));
        }
        Ok(vector)
    }
}

/// Cosine similarity of two non-zero vectors of equal dimension, computed in
/// double precision and clamped to [-1, 1].
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let mut dot = 0.0f64;
    let mut norm_a = 0.0f64;
    let mut norm_b = 0.0f64;
    for (&x, &y) in a.values.iter().zip(&b.values) {
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(Error::DegenerateEmbedding(
            "cosine similarity of a zero-norm vector is undefined".into(),
        ));
    }
    // identical vectors are maximally similar by definition; the quotient
    // below can round a hair under 1.0
    if a.values == b.values {
        return Ok(1.0);
    }
    Ok((dot / (norm_a.sqrt() * norm_b.sqrt())).clamp(-1.0, 1.0))
}
