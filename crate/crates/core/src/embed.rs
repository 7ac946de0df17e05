//! Text embeddings for retrieval.
//!
//! The default backend is a signed feature-hashing embedder: lowercase the
//! text, split on non-alphanumerics, hash every word and every character
//! trigram of `^word$` into one of [`EMBED_DIM`] buckets with a ±1 sign,
//! accumulate and L2-normalize. Text with no tokens maps to `e_0`.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EMBED_DIM: usize = 256;
/// Seed of the hashing embedder; embeddings are part of persisted state.
pub const HASH_SEED: u64 = 0x5EED;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("embedding backend failed: {message}")]
    Backend { message: String, retryable: bool },
    #[error("embedding backend returned dimension {0}, expected {EMBED_DIM}")]
    Dimension(usize),
    #[error("unknown embedding backend `{0}` (expected `hashing` or `external:<url>`)")]
    UnknownBackend(String),
}

impl EmbedError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, EmbedError::Backend { retryable: true, .. })
    }
}

/// Unit-norm vector of length [`EMBED_DIM`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    /// Normalizes `values`; an all-zero input becomes `e_0`.
    pub fn normalized(mut values: Vec<f32>) -> Result<Self, EmbedError> {
        if values.len() != EMBED_DIM {
            return Err(EmbedError::Dimension(values.len()));
        }
        let norm = values.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            values.iter_mut().for_each(|x| *x = 0.0);
            values[0] = 1.0;
        } else {
            values.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn cosine(&self, other: &Embedding) -> f32 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Embedding, EmbedError>;

    fn describe(&self) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    seed: u64,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self { seed: HASH_SEED }
    }
}

impl HashingEmbedder {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn hash(&self, kind: u8, token: &str) -> u64 {
        // FNV-1a over seed, token kind and token bytes, then a splitmix
        // finalizer so the bucket and sign bits are well mixed.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let feed = |h: &mut u64, b: u8| {
            *h ^= b as u64;
            *h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for b in self.seed.to_le_bytes() {
            feed(&mut h, b);
        }
        feed(&mut h, kind);
        for b in token.bytes() {
            feed(&mut h, b);
        }
        h ^= h >> 30;
        h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 27;
        h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^ (h >> 31)
    }

    fn accumulate(&self, acc: &mut [f32], kind: u8, token: &str) {
        let h = self.hash(kind, token);
        let bucket = (h % EMBED_DIM as u64) as usize;
        acc[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }
}

/// Lowercased alphanumeric words.
pub fn words(text: &str) -> Vec<String> {
    text.to_lowercase().split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_string).collect()
}

impl Embedder for HashingEmbedder {
    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        let mut acc = vec![0.0f32; EMBED_DIM];
        for word in words(text) {
            self.accumulate(&mut acc, b'w', &word);
            let padded: Vec<char> = std::iter::once('^').chain(word.chars()).chain(std::iter::once('$')).collect();
            for tri in padded.windows(3) {
                self.accumulate(&mut acc, b't', &tri.iter().collect::<String>());
            }
        }
        Embedding::normalized(acc)
    }

    fn describe(&self) -> String {
        format!("hashing(seed={:#x})", self.seed)
    }
}

/// Client for an embedding service: `POST <url>` with `{"text": ...}`,
/// expecting `{"embedding": [f32; 256]}`. The result is re-normalized.
pub struct ExternalEmbedder {
    url: String,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f32>,
}

impl ExternalEmbedder {
    pub fn new(url: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(Duration::from_secs(10))).build().into();
        Self { url: url.into(), agent }
    }
}

impl Embedder for ExternalEmbedder {
    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        let mut resp = self.agent.post(&self.url).send_json(EmbedRequest { text }).map_err(|e| {
            let retryable = !matches!(e, ureq::Error::StatusCode(code) if (400..500).contains(&code));
            EmbedError::Backend { message: e.to_string(), retryable }
        })?;
        let body: EmbedResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| EmbedError::Backend { message: format!("bad response: {e}"), retryable: false })?;
        Embedding::normalized(body.embedding)
    }

    fn describe(&self) -> String {
        format!("external({})", self.url)
    }
}

/// Resolves a backend spec: `hashing` or `external:<url>`.
pub fn embedder_from_spec(spec: &str) -> Result<Arc<dyn Embedder>, EmbedError> {
    match spec.trim() {
        "" | "hashing" => Ok(Arc::new(HashingEmbedder::default())),
        s => match s.strip_prefix("external:") {
            Some(url) if !url.is_empty() => Ok(Arc::new(ExternalEmbedder::new(url))),
            _ => Err(EmbedError::UnknownBackend(s.to_string())),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_unit() {
        let e = HashingEmbedder::default();
        let a = e.embed("Count the connected components").unwrap();
        let b = e.embed("Count the connected components").unwrap();
        assert_eq!(a, b);
        let norm: f32 = a.values().iter().map(|x| x * x).sum();
        assert!((norm - 1.0).abs() < 1e-5);
    }

    #[test]
    fn empty_text_is_e0() {
        let e = HashingEmbedder::default().embed("").unwrap();
        assert_eq!(e.values()[0], 1.0);
        assert!(e.values()[1..].iter().all(|&x| x == 0.0));
        assert_eq!(HashingEmbedder::default().embed("  ?! ").unwrap(), e);
    }

    #[test]
    fn related_text_is_closer() {
        let e = HashingEmbedder::default();
        let sp = e.embed("shortest path").unwrap();
        let csp = e.embed("compute the shortest path").unwrap();
        let tox = e.embed("toxicity prediction").unwrap();
        assert!(sp.cosine(&csp) > sp.cosine(&tox));
    }

    #[test]
    fn seed_changes_embedding() {
        let a = HashingEmbedder::with_seed(1).embed("graph").unwrap();
        let b = HashingEmbedder::with_seed(2).embed("graph").unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn backend_specs() {
        assert!(embedder_from_spec("hashing").unwrap().describe().starts_with("hashing"));
        assert!(embedder_from_spec("external:http://127.0.0.1:9/embed").is_ok());
        assert!(matches!(embedder_from_spec("llm"), Err(EmbedError::UnknownBackend(_))));
        assert!(Embedding::normalized(vec![1.0; 3]).is_err());
    }

    #[test]
    fn unreachable_service_is_retryable() {
        let e = ExternalEmbedder::new("http://127.0.0.1:9/embed");
        let err = e.embed("x").unwrap_err();
        assert!(err.is_retryable(), "{err:?}");
    }
}
