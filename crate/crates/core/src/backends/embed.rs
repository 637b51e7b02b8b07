//! Text embeddings for profile matching.

use super::BackendError;

pub const DEFAULT_DIMENSION: usize = 256;

pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;

    /// Unit-norm embedding of `text`.
    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError>;
}

/// Signed feature hashing of character 3-grams, L2-normalized.
///
/// Offline and deterministic; good enough to separate domain profiles that
/// share little vocabulary.
#[derive(Debug, Clone)]
pub struct LocalHashEmbedder {
    dimension: usize,
}

impl LocalHashEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }
}

impl Default for LocalHashEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIMENSION)
    }
}

// FNV-1a, 64 bit
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Embedder for LocalHashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let normalized: Vec<char> = text
            .split_whitespace()
            .flat_map(|w| std::iter::once(' ').chain(w.chars().flat_map(char::to_lowercase)))
            .chain(std::iter::once(' '))
            .collect();
        if normalized.len() <= 1 {
            return Err(BackendError::EmptyText);
        }
        let mut v = vec![0.0; self.dimension];
        let mut buf = String::new();
        for gram in normalized.windows(3) {
            buf.clear();
            buf.extend(gram);
            let h = fnv1a(buf.as_bytes());
            let bucket = (h % self.dimension as u64) as usize;
            let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        normalize(v)
    }
}

/// L2-normalizes in place; fails on the zero vector.
pub fn normalize(mut v: Vec<f64>) -> Result<Vec<f64>, BackendError> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(BackendError::MalformedResponse("zero or non-finite embedding".into()));
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Ok(v)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(feature = "http")]
pub use endpoint::EndpointEmbedder;

#[cfg(feature = "http")]
mod endpoint {
    use serde::Deserialize;
    use serde_json::json;

    use super::{normalize, Embedder};
    use crate::backends::http::{post_json, Endpoint};
    use crate::backends::BackendError;

    /// OpenAI-style `/embeddings` client.
    #[derive(Debug, Clone)]
    pub struct EndpointEmbedder {
        pub endpoint: Endpoint,
        pub model: String,
        pub dimension: usize,
    }

    #[derive(Deserialize)]
    struct EmbeddingResponse {
        data: Vec<EmbeddingDatum>,
    }

    #[derive(Deserialize)]
    struct EmbeddingDatum {
        embedding: Vec<f64>,
    }

    impl Embedder for EndpointEmbedder {
        fn dimension(&self) -> usize {
            self.dimension
        }

        fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
            if text.trim().is_empty() {
                return Err(BackendError::EmptyText);
            }
            let body = json!({ "model": self.model, "input": [text] });
            let value = post_json(&self.endpoint, "embeddings", &body).map_err(|e| match e {
                BackendError::MalformedResponse(_) => e,
                other => BackendError::EndpointUnreachable(other.to_string()),
            })?;
            let resp: EmbeddingResponse =
                serde_json::from_value(value).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
            let v = resp
                .data
                .into_iter()
                .next()
                .ok_or_else(|| BackendError::MalformedResponse("empty data array".into()))?
                .embedding;
            if v.len() != self.dimension {
                return Err(BackendError::MalformedResponse(format!(
                    "expected dimension {}, got {}",
                    self.dimension,
                    v.len()
                )));
            }
            normalize(v)
        }
    }
}
