//! Key sets: synthetic distributions and SOSD-style binary files.
//!
//! A key file is an 8-byte little-endian count followed by that many
//! little-endian `u64` keys.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use kanva::Key;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// Uniform over `[lo, hi]`.
    Uniform { lo: Key, hi: Key },
    /// Normal, rounded and clamped to the key domain.
    Normal { mean: f64, std_dev: f64 },
    /// `floor(scale * X)` with `ln X ~ N(mu, sigma²)`.
    Lognormal { mu: f64, sigma: f64, scale: f64 },
    File(PathBuf),
}

impl Source {
    pub fn uniform() -> Self {
        Source::Uniform { lo: 0, hi: Key::MAX >> 1 }
    }

    pub fn normal() -> Self {
        Source::Normal {
            mean: (1u64 << 62) as f64,
            std_dev: (1u64 << 58) as f64,
        }
    }

    pub fn lognormal() -> Self {
        Source::Lognormal {
            mu: 0.0,
            sigma: 2.0,
            scale: 1e9,
        }
    }
}

impl FromStr for Source {
    type Err = String;

    /// `uniform`, `normal`, `lognormal` or `file:PATH`.
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(Source::uniform()),
            "normal" => Ok(Source::normal()),
            "lognormal" => Ok(Source::lognormal()),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(Source::File(p.into())),
                _ => Err(format!("unknown dataset `{s}` (uniform|normal|lognormal|file:PATH)")),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub source: Source,
    /// Number of distinct keys. For files, 0 keeps every key and a smaller
    /// size keeps an evenly strided subset.
    pub size: usize,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: file is {len} bytes, too short for the 8-byte count header")]
    MissingHeader { path: PathBuf, len: usize },
    #[error("{path}: header declares {declared} keys but {actual_bytes} payload bytes follow")]
    LengthMismatch {
        path: PathBuf,
        declared: u64,
        actual_bytes: usize,
    },
}

/// Sorted, duplicate-free keys for `spec`. Deterministic under the seed.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<Key>, DatasetError> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let keys = match &spec.source {
        Source::Uniform { lo, hi } => {
            let (lo, hi) = (*lo, *hi);
            distinct(spec.size, || rng.random_range(lo..=hi))
        }
        Source::Normal { mean, std_dev } => {
            let d = Normal::new(*mean, *std_dev).expect("finite normal parameters");
            distinct(spec.size, || to_key(d.sample(&mut rng)))
        }
        Source::Lognormal { mu, sigma, scale } => {
            let d = LogNormal::new(*mu, *sigma).expect("finite lognormal parameters");
            let scale = *scale;
            distinct(spec.size, || to_key(scale * d.sample(&mut rng)))
        }
        Source::File(path) => {
            let mut keys = read_keys(path)?;
            keys.sort_unstable();
            keys.dedup();
            if spec.size > 0 && spec.size < keys.len() {
                let n = keys.len();
                keys = (0..spec.size).map(|i| keys[i * n / spec.size]).collect();
            }
            keys
        }
    };
    Ok(keys)
}

fn to_key(x: f64) -> Key {
    // `as` saturates: negatives to 0, overflow to MAX.
    x.round() as Key
}

/// Draws until `n` distinct values are collected, giving up after a bounded
/// number of rounds when the distribution has too few distinct keys.
fn distinct(n: usize, mut draw: impl FnMut() -> Key) -> Vec<Key> {
    let mut keys: Vec<Key> = (0..n).map(|_| draw()).collect();
    keys.sort_unstable();
    keys.dedup();
    for _ in 0..64 {
        if keys.len() >= n {
            break;
        }
        let missing = n - keys.len();
        keys.extend((0..missing).map(|_| draw()));
        keys.sort_unstable();
        keys.dedup();
    }
    keys
}

/// Reads a key file without sorting it.
pub fn read_keys(path: &Path) -> Result<Vec<Key>, DatasetError> {
    let bytes = fs::read(path).map_err(|source| DatasetError::Io {
        path: path.into(),
        source,
    })?;
    let Some((head, body)) = bytes.split_first_chunk::<8>() else {
        return Err(DatasetError::MissingHeader {
            path: path.into(),
            len: bytes.len(),
        });
    };
    let declared = u64::from_le_bytes(*head);
    if declared.checked_mul(8) != Some(body.len() as u64) {
        return Err(DatasetError::LengthMismatch {
            path: path.into(),
            declared,
            actual_bytes: body.len(),
        });
    }
    Ok(body
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_keys(path: &Path, keys: &[Key]) -> io::Result<()> {
    let mut bytes = Vec::with_capacity(8 * (keys.len() + 1));
    bytes.extend_from_slice(&(keys.len() as u64).to_le_bytes());
    for k in keys {
        bytes.extend_from_slice(&k.to_le_bytes());
    }
    fs::write(path, bytes)
}
