//! Text embeddings: a deterministic hashed bag-of-words, or a remote service.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{analyze, SearchError};

pub const DEFAULT_DIM: usize = 256;

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub(crate) fn normalize(v: &mut [f32]) -> bool {
    let norm = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return false;
    }
    for x in v.iter_mut() {
        *x = (*x as f64 / norm) as f32;
    }
    true
}

#[derive(Debug, Clone, Serialize)]
struct EmbedRequest<'a> {
    texts: Vec<&'a str>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// Client for a `POST /embed` service, with a text-hash keyed cache.
#[derive(Debug)]
pub struct ExternalEmbedder {
    url: String,
    dim: usize,
    client: reqwest::blocking::Client,
    cache: RwLock<HashMap<[u8; 32], Arc<Vec<f32>>>>,
}

impl ExternalEmbedder {
    /// `base_url` is the service root; requests go to `{base_url}/embed`.
    pub fn new(base_url: impl Into<String>, dim: usize) -> Result<Self, SearchError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| SearchError::EmbeddingServiceUnavailable(e.to_string()))?;
        Ok(ExternalEmbedder {
            url: base_url.into().trim_end_matches('/').to_string(),
            dim,
            client,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn key(text: &str) -> [u8; 32] {
        let digest = Sha256::digest(text.as_bytes());
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        key
    }

    pub fn cached(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    pub fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, SearchError> {
        let mut out: Vec<Option<Vec<f32>>> = Vec::with_capacity(texts.len());
        let mut missing = Vec::new();
        {
            let cache = self.cache.read().expect("cache lock");
            for (i, t) in texts.iter().enumerate() {
                match cache.get(&Self::key(t)) {
                    Some(v) => out.push(Some(v.as_ref().clone())),
                    None => {
                        out.push(None);
                        missing.push(i);
                    }
                }
            }
        }
        if !missing.is_empty() {
            let body = EmbedRequest {
                texts: missing.iter().map(|&i| texts[i]).collect(),
            };
            let resp = self
                .client
                .post(format!("{}/embed", self.url))
                .json(&body)
                .send()
                .and_then(|r| r.error_for_status())
                .map_err(|e| SearchError::EmbeddingServiceUnavailable(e.to_string()))?;
            let parsed: EmbedResponse = resp
                .json()
                .map_err(|e| SearchError::EmbeddingServiceUnavailable(e.to_string()))?;
            if parsed.vectors.len() != missing.len() {
                return Err(SearchError::EmbeddingServiceUnavailable(format!(
                    "asked for {} vectors, got {}",
                    missing.len(),
                    parsed.vectors.len()
                )));
            }
            let mut cache = self.cache.write().expect("cache lock");
            for (&i, mut v) in missing.iter().zip(parsed.vectors) {
                if v.len() != self.dim {
                    return Err(SearchError::EmbeddingServiceUnavailable(format!(
                        "expected dimension {}, got {}",
                        self.dim,
                        v.len()
                    )));
                }
                if !normalize(&mut v) {
                    return Err(SearchError::EmptyText);
                }
                cache.insert(Self::key(texts[i]), Arc::new(v.clone()));
                out[i] = Some(v);
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled")).collect())
    }
}

/// Where embeddings come from.
#[derive(Debug, Clone)]
pub enum EmbeddingProvider {
    /// Lowercased analyzer tokens hashed into `dim` buckets with raw term
    /// frequency weights, then L2-normalized.
    HashedBow { dim: usize },
    External(Arc<ExternalEmbedder>),
}

impl Default for EmbeddingProvider {
    fn default() -> Self {
        EmbeddingProvider::HashedBow { dim: DEFAULT_DIM }
    }
}

impl EmbeddingProvider {
    pub fn dim(&self) -> usize {
        match self {
            EmbeddingProvider::HashedBow { dim } => *dim,
            EmbeddingProvider::External(e) => e.dim,
        }
    }

    pub fn bucket(token: &str, dim: usize) -> usize {
        (fnv1a(token.as_bytes()) % dim as u64) as usize
    }

    /// Unit-norm embedding; `EmptyText` when the text has no indexable token.
    pub fn embed(&self, text: &str) -> Result<Vec<f32>, SearchError> {
        match self {
            EmbeddingProvider::HashedBow { dim } => {
                let mut v = vec![0.0f32; *dim];
                for t in analyze(text) {
                    v[Self::bucket(&t, *dim)] += 1.0;
                }
                if !normalize(&mut v) {
                    return Err(SearchError::EmptyText);
                }
                Ok(v)
            }
            EmbeddingProvider::External(e) => {
                if analyze(text).is_empty() {
                    return Err(SearchError::EmptyText);
                }
                Ok(e.embed_batch(&[text])?.remove(0))
            }
        }
    }

    /// Embeds many texts; texts with nothing to embed become zero vectors.
    pub fn embed_many(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, SearchError> {
        match self {
            EmbeddingProvider::HashedBow { dim } => Ok(texts
                .iter()
                .map(|t| self.embed(t).unwrap_or_else(|_| vec![0.0; *dim]))
                .collect()),
            EmbeddingProvider::External(e) => {
                let live: Vec<usize> = (0..texts.len())
                    .filter(|&i| !analyze(texts[i]).is_empty())
                    .collect();
                let vecs = e.embed_batch(&live.iter().map(|&i| texts[i]).collect::<Vec<_>>())?;
                let mut out = vec![vec![0.0; e.dim]; texts.len()];
                for (i, v) in live.into_iter().zip(vecs) {
                    out[i] = v;
                }
                Ok(out)
            }
        }
    }
}
