//! Sentence-embedding backends.
//!
//! `hash` is a deterministic, dependency-free embedder for offline runs and
//! tests. `remote` talks JSON over HTTP to an embedding service:
//!
//! ```text
//! POST /v1/embed   {"model": "<id>", "texts": [...]}
//!             200  {"model": "<id>", "dim": <int>, "vectors": [[...], ...]}
//!         4xx/5xx  {"error": "<message>"}
//! GET  /v1/health  {"status": "ok", "models": ["<id>", ...]}
//! ```

mod cache;
pub mod mock;
mod remote;

use std::fmt;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::exec::{self, Execution};

pub use cache::EmbeddingCache;
pub use remote::{Health, RemoteClient, RetryPolicy};

/// Smallest dimension the hash backend accepts.
pub const MIN_HASH_DIM: usize = 8;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("invalid backend spec: {0}")]
    InvalidSpec(String),
    #[error("embedding service unavailable after {attempts} attempts: {last_error}")]
    ServiceUnavailable { attempts: u32, last_error: String },
    #[error("embedding service answered {status}: {message}")]
    ServiceError { status: u16, message: String },
    #[error("expected {expected}-dimensional vectors, service returned {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("embedding cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Hash,
    Remote,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Hash => "hash",
            BackendKind::Remote => "remote",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBackendSpec {
    pub kind: BackendKind,
    pub dim: usize,
    /// Remote model identity, e.g. `xlmr`, `mbert`, `distilmbert`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub max_batch: usize,
    /// Seed of the hash backend; ignored by remote backends.
    pub seed: u64,
}

impl EmbeddingBackendSpec {
    pub fn hash(dim: usize, seed: u64) -> Self {
        EmbeddingBackendSpec {
            kind: BackendKind::Hash,
            dim,
            model_id: None,
            endpoint: None,
            timeout_ms: 30_000,
            max_batch: 64,
            seed,
        }
    }

    pub fn remote(endpoint: impl Into<String>, model_id: impl Into<String>, dim: usize) -> Self {
        EmbeddingBackendSpec {
            kind: BackendKind::Remote,
            dim,
            model_id: Some(model_id.into()),
            endpoint: Some(endpoint.into()),
            timeout_ms: 30_000,
            max_batch: 32,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), EmbedError> {
        let bad = |m: &str| Err(EmbedError::InvalidSpec(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.timeout_ms == 0 || self.max_batch == 0 {
            return bad("timeout_ms and max_batch must be positive");
        }
        match self.kind {
            BackendKind::Hash if self.dim < MIN_HASH_DIM => {
                bad(&format!("hash backend needs dim >= {MIN_HASH_DIM}"))
            }
            BackendKind::Remote if self.endpoint.as_deref().is_none_or(str::is_empty) => {
                bad("remote backend needs an endpoint")
            }
            BackendKind::Remote if self.model_id.as_deref().is_none_or(str::is_empty) => {
                bad("remote backend needs a model_id")
            }
            _ => Ok(()),
        }
    }

    /// Identity recorded in trained models; predicting requires a match.
    pub fn id(&self) -> String {
        match self.kind {
            BackendKind::Hash => format!("hash/d{}/s{}", self.dim, self.seed),
            BackendKind::Remote => {
                format!(
                    "remote/{}/d{}",
                    self.model_id.as_deref().unwrap_or(""),
                    self.dim
                )
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TextVector {
    pub values: Vec<f64>,
}

fn token_seed(token: &str, seed: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(token.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Deterministic embedding: each whitespace token seeds a ChaCha stream that
/// yields a uniform `[-1, 1)` vector; token vectors are averaged and the mean
/// is L2-normalised. Text without tokens maps to the zero vector.
pub fn hash_embed(text: &str, dim: usize, seed: u64) -> TextVector {
    let mut sum = vec![0.0f64; dim];
    let mut n = 0usize;
    for token in text.split_whitespace() {
        let mut rng = ChaCha8Rng::seed_from_u64(token_seed(token, seed));
        for x in sum.iter_mut() {
            *x += rng.gen_range(-1.0..1.0);
        }
        n += 1;
    }
    if n == 0 {
        return TextVector { values: sum };
    }
    let norm = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        sum.iter_mut().for_each(|x| *x /= norm);
    }
    TextVector { values: sum }
}

/// A configured backend, optionally fronted by an on-disk cache.
pub struct Embedder {
    spec: EmbeddingBackendSpec,
    remote: Option<RemoteClient>,
    cache: Option<EmbeddingCache>,
    exec: Execution,
}

impl fmt::Debug for Embedder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Embedder")
            .field("spec", &self.spec)
            .field("exec", &self.exec)
            .finish()
    }
}

impl Embedder {
    pub fn new(spec: EmbeddingBackendSpec) -> Result<Self, EmbedError> {
        spec.validate()?;
        let remote = match spec.kind {
            BackendKind::Remote => Some(RemoteClient::from_spec(&spec)?),
            BackendKind::Hash => None,
        };
        Ok(Embedder {
            spec,
            remote,
            cache: None,
            exec: Execution::default(),
        })
    }

    pub fn with_cache(mut self, path: impl Into<PathBuf>) -> Result<Self, EmbedError> {
        self.cache = Some(EmbeddingCache::open(path, &self.spec)?);
        Ok(self)
    }

    pub fn with_execution(mut self, exec: Execution) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_retry(mut self, policy: RetryPolicy) -> Self {
        if let Some(r) = self.remote.as_mut() {
            r.retry = policy;
        }
        self
    }

    pub fn spec(&self) -> &EmbeddingBackendSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn id(&self) -> String {
        self.spec.id()
    }

    pub fn remote(&self) -> Option<&RemoteClient> {
        self.remote.as_ref()
    }

    /// One vector per text, in input order.
    pub fn embed_batch<S: AsRef<str> + Sync>(
        &self,
        texts: &[S],
    ) -> Result<Vec<TextVector>, EmbedError> {
        let Some(cache) = &self.cache else {
            return self.embed_uncached(texts);
        };
        let (hits, misses) = cache.lookup(texts);
        let miss_texts: Vec<&str> = misses.iter().map(|&i| texts[i].as_ref()).collect();
        let fresh = if miss_texts.is_empty() {
            Vec::new()
        } else {
            self.embed_uncached(&miss_texts)?
        };
        cache.store(&miss_texts, &fresh);
        let mut out = hits;
        for (i, v) in misses.into_iter().zip(fresh) {
            out[i] = Some(v);
        }
        Ok(out
            .into_iter()
            .map(|v| v.expect("every slot is a hit or was embedded"))
            .collect())
    }

    fn embed_uncached<S: AsRef<str> + Sync>(
        &self,
        texts: &[S],
    ) -> Result<Vec<TextVector>, EmbedError> {
        match &self.remote {
            Some(client) => client.embed_batch(texts),
            None => Ok(exec::map(self.exec, texts, |t| {
                hash_embed(t.as_ref(), self.spec.dim, self.spec.seed)
            })),
        }
    }

    /// Persists newly embedded texts when a cache is attached.
    pub fn flush_cache(&self) -> Result<(), EmbedError> {
        match &self.cache {
            Some(c) => c.flush(),
            None => Ok(()),
        }
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_embed_is_deterministic_and_unit_norm() {
        let a = hash_embed("jeetega bharat", 16, 7);
        assert_eq!(a, hash_embed("jeetega bharat", 16, 7));
        let norm = a.values.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        assert!((cosine(&a.values, &a.values) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hash_embed_empty_text_is_zero() {
        assert_eq!(hash_embed("", 8, 1).values, vec![0.0; 8]);
        assert_eq!(hash_embed("   ", 8, 1).values, vec![0.0; 8]);
    }

    #[test]
    fn seeds_change_vectors() {
        assert_ne!(hash_embed("modi", 8, 1), hash_embed("modi", 8, 2));
    }

    #[test]
    fn hash_batch_is_composition() {
        let e = Embedder::new(EmbeddingBackendSpec::hash(8, 3)).unwrap();
        let out = e.embed_batch(&["a", "b"]).unwrap();
        assert_eq!(out, vec![hash_embed("a", 8, 3), hash_embed("b", 8, 3)]);
    }

    #[test]
    fn spec_validation() {
        assert!(EmbeddingBackendSpec::hash(4, 0).validate().is_err());
        let mut r = EmbeddingBackendSpec::remote("http://x", "xlmr", 8);
        assert!(r.validate().is_ok());
        r.endpoint = None;
        assert!(matches!(r.validate(), Err(EmbedError::InvalidSpec(_))));
        let mut r = EmbeddingBackendSpec::remote("http://x", "", 8);
        assert!(r.validate().is_err());
        r.model_id = Some("mbert".into());
        r.max_batch = 0;
        assert!(r.validate().is_err());
    }
}
