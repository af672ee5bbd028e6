//! Sentence embedders: a deterministic hashing fallback and an HTTP client
//! for the model-serving sidecar.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::word_tokens;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("embedding backend failed: {0}")]
    Backend(String),
    #[error("embedding response malformed: {0}")]
    Malformed(String),
}

/// Maps texts to unit-norm vectors of a fixed dimension.
pub trait Embedder: Send + Sync {
    fn descriptor(&self) -> String;
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;

    fn embed_one(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        self.embed(&[text.to_string()])?
            .pop()
            .ok_or_else(|| EmbedError::Malformed("no vector returned".into()))
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

/// 64-bit FNV-1a. Stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Bag-of-words token counts hashed into a fixed number of buckets, then
/// L2-normalized. Text without tokens maps to the first basis vector.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl HashingEmbedder {
    pub const DEFAULT_DIMENSION: usize = 256;

    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        HashingEmbedder { dimension }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a(token.as_bytes()) % self.dimension as u64) as usize
    }

    fn vector(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dimension];
        for token in word_tokens(text) {
            v[self.bucket(&token)] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            v[0] = 1.0;
        } else {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder::new(Self::DEFAULT_DIMENSION)
    }
}

impl Embedder for HashingEmbedder {
    fn descriptor(&self) -> String {
        format!("hashing-bow-{}", self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

#[derive(Debug, Serialize)]
pub struct EmbedRequest<'a> {
    pub texts: &'a [String],
}

#[derive(Debug, Deserialize)]
pub struct EmbedResponse {
    pub dimension: usize,
    pub vectors: Vec<Vec<f64>>,
}

/// Client for `POST {base_url}/embed` on the model-serving sidecar.
pub struct HttpEmbedder {
    base_url: String,
    client: reqwest::blocking::Client,
    dimension: usize,
    batch_size: usize,
}

impl HttpEmbedder {
    pub const MAX_BATCH: usize = 128;

    /// Connects lazily; the dimension is learned from a probe request.
    pub fn connect(base_url: &str, timeout: Duration) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbedError::Backend(e.to_string()))?;
        let mut embedder = HttpEmbedder {
            base_url: base_url.trim_end_matches('/').to_string(),
            client,
            dimension: 0,
            batch_size: Self::MAX_BATCH,
        };
        let probe = embedder.request(&["probe".to_string()])?;
        embedder.dimension = probe.dimension;
        Ok(embedder)
    }

    fn request(&self, texts: &[String]) -> Result<EmbedResponse, EmbedError> {
        let resp = self
            .client
            .post(format!("{}/embed", self.base_url))
            .json(&EmbedRequest { texts })
            .send()
            .map_err(|e| EmbedError::Backend(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| EmbedError::Backend(e.to_string()))?;
        if !status.is_success() {
            return Err(EmbedError::Backend(format!("status {status}: {body}")));
        }
        let parsed: EmbedResponse =
            serde_json::from_str(&body).map_err(|e| EmbedError::Malformed(e.to_string()))?;
        validate_embed_response(texts.len(), &parsed)?;
        Ok(parsed)
    }
}

/// Check the sidecar contract: aligned lengths, fixed dimension, unit norm within 1e-6.
pub fn validate_embed_response(expected: usize, resp: &EmbedResponse) -> Result<(), EmbedError> {
    if resp.vectors.len() != expected {
        return Err(EmbedError::Malformed(format!(
            "expected {expected} vectors, got {}",
            resp.vectors.len()
        )));
    }
    for (i, v) in resp.vectors.iter().enumerate() {
        if v.len() != resp.dimension {
            return Err(EmbedError::Malformed(format!(
                "vector {i} has length {}, expected {}",
                v.len(),
                resp.dimension
            )));
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(EmbedError::Malformed(format!("vector {i} has norm {norm}")));
        }
    }
    Ok(())
}

impl Embedder for HttpEmbedder {
    fn descriptor(&self) -> String {
        format!("sidecar:{}", self.base_url)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            let resp = self.request(chunk)?;
            if resp.dimension != self.dimension {
                return Err(EmbedError::Malformed(format!(
                    "dimension changed from {} to {}",
                    self.dimension, resp.dimension
                )));
            }
            out.extend(resp.vectors);
        }
        Ok(out)
    }
}
