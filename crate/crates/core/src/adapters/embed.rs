//! Text embedders.
//!
//! [`HashedNgramEmbedder`] is the deterministic test embedder: character
//! trigrams of the lowercased, space-padded text are hashed (FNV-1a, 64 bit)
//! into `dimension` buckets with a hash-derived sign, then L2-normalized.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::AdapterError;

pub type EmbeddingVector = Vec<f64>;

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, AdapterError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderKind {
    DeterministicTest,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub kind: EmbedderKind,
    pub dimension: usize,
    /// Remote kind only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

pub const DEFAULT_EMBEDDING_DIM: usize = 512;

impl Default for EmbedderSpec {
    fn default() -> Self {
        Self::test(DEFAULT_EMBEDDING_DIM)
    }
}

impl EmbedderSpec {
    pub fn test(dimension: usize) -> Self {
        Self { kind: EmbedderKind::DeterministicTest, dimension, endpoint: None }
    }

    pub fn remote(endpoint: impl Into<String>, dimension: usize) -> Self {
        Self { kind: EmbedderKind::Remote, dimension, endpoint: Some(endpoint.into()) }
    }

    pub fn build(&self) -> Result<Box<dyn Embedder>, AdapterError> {
        match self.kind {
            EmbedderKind::DeterministicTest => Ok(Box::new(HashedNgramEmbedder::new(self.dimension))),
            EmbedderKind::Remote => {
                let endpoint = self
                    .endpoint
                    .clone()
                    .ok_or_else(|| AdapterError::Protocol("remote embedder without endpoint".into()))?;
                Ok(Box::new(RemoteEmbedder::new(endpoint, self.dimension)))
            }
        }
    }
}

/// Embeds `text` with a freshly built embedder for `spec`.
pub fn embed(spec: &EmbedderSpec, text: &str) -> Result<EmbeddingVector, AdapterError> {
    spec.build()?.embed(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedNgramEmbedder {
    dimension: usize,
}

impl Default for HashedNgramEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_EMBEDDING_DIM)
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

impl HashedNgramEmbedder {
    pub const NGRAM: usize = 3;

    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    /// Infallible form of [`Embedder::embed`].
    pub fn vector(&self, text: &str) -> EmbeddingVector {
        let mut v = vec![0.0; self.dimension];
        let normalized = crate::text::tokenize(text).join(" ");
        if normalized.is_empty() {
            return v;
        }
        let chars: Vec<char> = format!(" {normalized} ").chars().collect();
        let mut buf = [0u8; 4 * Self::NGRAM];
        for gram in chars.windows(Self::NGRAM) {
            let mut len = 0;
            for c in gram {
                len += c.encode_utf8(&mut buf[len..]).len();
            }
            let h = fnv1a(&buf[..len]);
            let bucket = (h % self.dimension as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Embedder for HashedNgramEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, AdapterError> {
        Ok(self.vector(text))
    }
}

/// `POST {"input": text}` → `{"embedding": [..]}`.
#[derive(Debug)]
pub struct RemoteEmbedder {
    endpoint: String,
    dimension: usize,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embedding: Vec<f64>,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, dimension: usize) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(30)).build();
        Self { endpoint: endpoint.into(), dimension, agent }
    }
}

impl Embedder for RemoteEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, AdapterError> {
        let body = serde_json::to_string(&EmbedRequest { input: text }).map_err(|e| AdapterError::Protocol(e.to_string()))?;
        let resp = self
            .agent
            .post(&self.endpoint)
            .set("Content-Type", "application/json")
            .send_string(&body)
            .map_err(|e| match e {
                ureq::Error::Status(status, r) => AdapterError::Status { status, body: r.into_string().unwrap_or_default() },
                ureq::Error::Transport(t) => AdapterError::Transport(t.to_string()),
            })?;
        let text = resp.into_string().map_err(|e| AdapterError::Transport(e.to_string()))?;
        let parsed: EmbedResponse = serde_json::from_str(&text).map_err(|e| AdapterError::Protocol(e.to_string()))?;
        if parsed.embedding.len() != self.dimension || parsed.embedding.iter().any(|x| !x.is_finite()) {
            return Err(AdapterError::Protocol(format!(
                "expected {} finite components, got {}",
                self.dimension,
                parsed.embedding.len()
            )));
        }
        Ok(parsed.embedding)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let e = HashedNgramEmbedder::default();
        let a = e.vector("Where exactly is the pain located?");
        let b = e.vector("Where exactly is the pain located?");
        assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert!((dot(&a, &a).sqrt() - 1.0).abs() < 1e-9);
        assert_eq!(a.len(), DEFAULT_EMBEDDING_DIM);
    }

    #[test]
    fn empty_text_is_zero() {
        assert!(HashedNgramEmbedder::new(16).vector("  ?! ").iter().all(|&x| x == 0.0));
    }

    #[test]
    fn case_and_punctuation_insensitive() {
        let e = HashedNgramEmbedder::default();
        assert_eq!(e.vector("Does it HURT?"), e.vector("does it hurt"));
    }

    #[test]
    fn spec_builds_test_embedder() {
        let spec = EmbedderSpec::test(64);
        assert_eq!(embed(&spec, "headache").unwrap(), HashedNgramEmbedder::new(64).vector("headache"));
        assert!(EmbedderSpec { endpoint: None, ..EmbedderSpec::remote("x", 4) }.build().is_err());
    }
}
