//! Text embedders producing fixed-width document vectors.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub trait TextEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// What to do when a precomputed table has no vector for a text.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissPolicy {
    #[default]
    Error,
    /// Substitute a zero vector and count the miss.
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    Hashing { dim: usize, seed: u64 },
    Precomputed {
        path: PathBuf,
        #[serde(default)]
        on_miss: MissPolicy,
    },
}

impl EmbedderSpec {
    pub fn hashing(dim: usize) -> Self {
        EmbedderSpec::Hashing { dim, seed: 0 }
    }

    pub fn build(&self) -> Result<Box<dyn TextEmbedder>> {
        match self {
            EmbedderSpec::Hashing { dim, seed } => Ok(Box::new(HashingEmbedder::new(*dim, *seed)?)),
            EmbedderSpec::Precomputed { path, on_miss } => {
                Ok(Box::new(PrecomputedEmbedder::load(path, *on_miss)?))
            }
        }
    }
}

pub fn embed_text(text: &str, embedder: &dyn TextEmbedder) -> Result<Vec<f64>> {
    embedder.embed(text)
}

/// Lowercased maximal runs of alphanumeric characters.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Signed feature hashing into `dim` buckets followed by L2 normalisation.
#[derive(Clone, Debug)]
pub struct HashingEmbedder {
    dim: usize,
    seed: u64,
}

impl HashingEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        Ok(Self { dim, seed })
    }

    fn hash(&self, token: &str) -> u64 {
        const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = FNV_OFFSET;
        for b in self.seed.to_le_bytes().iter().chain(token.as_bytes()) {
            h ^= u64::from(*b);
            h = h.wrapping_mul(FNV_PRIME);
        }
        // splitmix64 finaliser
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^ (h >> 31)
    }
}

impl TextEmbedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let mut v = vec![0.0; self.dim];
        for token in tokenize(text) {
            let h = self.hash(&token);
            let bucket = ((h >> 1) % self.dim as u64) as usize;
            v[bucket] += if h & 1 == 0 { 1.0 } else { -1.0 };
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Ok(v)
    }
}

/// Hex SHA-256 of the UTF-8 text, the lookup key of precomputed tables.
pub fn content_key(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Exact lookup of externally computed vectors keyed by [`content_key`].
#[derive(Debug)]
pub struct PrecomputedEmbedder {
    table: HashMap<String, Vec<f64>>,
    dim: usize,
    on_miss: MissPolicy,
    misses: AtomicUsize,
}

impl PrecomputedEmbedder {
    pub fn from_table(table: HashMap<String, Vec<f64>>, on_miss: MissPolicy) -> Result<Self> {
        let mut dims = table.values().map(Vec::len);
        let dim = dims
            .next()
            .ok_or_else(|| Error::Input("precomputed embedding table is empty".into()))?;
        if dim == 0 || dims.any(|d| d != dim) {
            return Err(Error::Input("precomputed vectors must share one positive length".into()));
        }
        Ok(Self {
            table,
            dim,
            on_miss,
            misses: AtomicUsize::new(0),
        })
    }

    pub fn load(path: &Path, on_miss: MissPolicy) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table: HashMap<String, Vec<f64>> = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::from_table(table, on_miss)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }
}

impl TextEmbedder for PrecomputedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let key = content_key(text);
        match self.table.get(&key) {
            Some(v) => Ok(v.clone()),
            None => match self.on_miss {
                MissPolicy::Error => Err(Error::Input(format!("no precomputed embedding for key {key}"))),
                MissPolicy::Zero => {
                    self.misses.fetch_add(1, Ordering::Relaxed);
                    log::warn!("no precomputed embedding for key {key}; using zeros");
                    Ok(vec![0.0; self.dim])
                }
            },
        }
    }
}
