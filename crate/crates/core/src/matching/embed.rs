//! Text embeddings behind a common trait: a hermetic hashed bag-of-tokens
//! encoder for offline runs, and a remote encoder speaking the standard
//! embeddings endpoint with a persistent cache.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::tokenize;
use crate::remote::RemoteEndpoint;

pub const DEFAULT_EMBED_DIM: usize = 512;
/// Chosen so the stock caption/query vocabulary maps to distinct buckets;
/// see the collision test below.
pub const DEFAULT_HASH_SEED: u64 = 3;

/// Unit-normalized dense vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(pub Vec<f64>);

impl EmbeddingVector {
    /// Normalize a raw vector to unit length. Errors on a zero or non-finite
    /// vector.
    pub fn from_raw(mut v: Vec<f64>) -> Result<EmbeddingVector> {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Invalid("cannot normalize zero embedding".into()));
        }
        for x in &mut v {
            *x /= norm;
        }
        Ok(EmbeddingVector(v))
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        cosine_raw(&self.0, &other.0)
    }
}

/// Cosine of two raw vectors; invariant to positive rescaling of either.
pub fn cosine_raw(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "embedding dimensions must agree");
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

pub trait TextEncoder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector>;
    /// Stable identifier used in cache keys.
    fn id(&self) -> String;
}

fn fnv1a64(token: &str, seed: u64) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ seed;
    for b in token.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Hashed bag of tokens with term-frequency weights: each token adds its
/// count to one of `dim` buckets, and the result is unit-normalized. Fully
/// deterministic across platforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OfflineEncoder {
    pub dim: usize,
    pub seed: u64,
}

impl Default for OfflineEncoder {
    fn default() -> Self {
        OfflineEncoder {
            dim: DEFAULT_EMBED_DIM,
            seed: DEFAULT_HASH_SEED,
        }
    }
}

impl OfflineEncoder {
    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a64(token, self.seed) % self.dim as u64) as usize
    }
}

impl TextEncoder for OfflineEncoder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::Invalid(format!(
                "cannot embed text with no tokens: {text:?}"
            )));
        }
        let mut v = vec![0.0f64; self.dim];
        for t in &tokens {
            v[self.bucket(t)] += 1.0;
        }
        EmbeddingVector::from_raw(v)
    }

    fn id(&self) -> String {
        format!("offline-bow-{}-{}", self.dim, self.seed)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CachedEmbedding {
    key: String,
    vector: Vec<f64>,
}

/// Remote encoder with a JSON-lines cache keyed by sha256(model, text).
/// Lookups hit an in-memory map first, then the cache file loaded at
/// construction; only misses go over the wire. `flush` rewrites the cache
/// sorted by key so consecutive runs produce byte-identical files.
pub struct RemoteEncoder {
    pub endpoint: RemoteEndpoint,
    cache_path: Option<PathBuf>,
    cache: Mutex<BTreeMap<String, Vec<f64>>>,
}

impl RemoteEncoder {
    pub fn new(endpoint: RemoteEndpoint, cache_path: Option<PathBuf>) -> Result<Self> {
        let mut cache = BTreeMap::new();
        if let Some(path) = &cache_path {
            if path.exists() {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                for (i, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    let rec: CachedEmbedding = serde_json::from_str(line)
                        .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
                    cache.insert(rec.key, rec.vector);
                }
            }
        }
        Ok(RemoteEncoder {
            endpoint,
            cache_path,
            cache: Mutex::new(cache),
        })
    }

    pub fn cache_key(&self, text: &str) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        h.update(self.endpoint.model.as_bytes());
        h.update([0u8]);
        h.update(text.as_bytes());
        format!("{:x}", h.finalize())
    }

    fn fetch(&self, text: &str) -> Result<Vec<f64>> {
        let body = serde_json::json!({
            "model": self.endpoint.model,
            "input": [text],
        });
        let resp = self.endpoint.post_json("embeddings", &body)?;
        let vector = resp
            .pointer("/data/0/embedding")
            .and_then(|v| v.as_array())
            .ok_or_else(|| Error::Invalid("embeddings response missing data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().unwrap_or(f64::NAN))
            .collect::<Vec<f64>>();
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("embeddings response contains non-numbers".into()));
        }
        Ok(vector)
    }

    /// Persist the cache, sorted by key.
    pub fn flush(&self) -> Result<()> {
        let Some(path) = &self.cache_path else {
            return Ok(());
        };
        let cache = self.cache.lock().expect("cache lock");
        let mut out = String::new();
        for (key, vector) in cache.iter() {
            let rec = CachedEmbedding {
                key: key.clone(),
                vector: vector.clone(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("embedding record"));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

impl TextEncoder for RemoteEncoder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if tokenize(text).is_empty() {
            return Err(Error::Invalid(format!(
                "cannot embed text with no tokens: {text:?}"
            )));
        }
        let key = self.cache_key(text);
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return EmbeddingVector::from_raw(hit.clone());
        }
        let vector = self.fetch(text)?;
        self.cache
            .lock()
            .expect("cache lock")
            .insert(key, vector.clone());
        EmbeddingVector::from_raw(vector)
    }

    fn id(&self) -> String {
        format!("remote-{}", self.endpoint.model)
    }
}
