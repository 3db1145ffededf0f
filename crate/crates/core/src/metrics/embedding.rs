//! Phrase embedding providers used by the semantic-similarity metrics.
//!
//! Embedding file layout (little-endian):
//!
//! ```text
//! "EMB1" | u32 dimension | u32 count | count × (u16 key_len | key utf-8 | dimension × f32)
//! ```

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use super::text::normalized_tokens;

pub const EMBEDDING_MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("no embedding for phrase {0:?}")]
    MissingKey(String),
    #[error("bad embedding file: {0}")]
    Format(String),
    #[error("embedding for {0:?} has zero norm")]
    ZeroNorm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Maps a phrase to a unit-norm vector. Implementations must be
/// deterministic and safe to share between threads.
pub trait EmbeddingProvider: Send + Sync {
    /// Label recorded in reports.
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError>;
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Cosine similarity of two phrases; identical strings score exactly 1.
pub fn phrase_similarity(provider: &dyn EmbeddingProvider, a: &str, b: &str) -> Result<f64, EmbeddingError> {
    if a == b {
        return Ok(1.0);
    }
    Ok(cosine(&provider.embed(a)?, &provider.embed(b)?))
}

fn normalize(key: &str, v: &mut [f64]) -> Result<(), EmbeddingError> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 || !n.is_finite() {
        return Err(EmbeddingError::ZeroNorm(key.to_string()));
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(())
}

/// Precomputed vectors keyed by exact phrase string.
#[derive(Debug, Clone, Default)]
pub struct FileEmbeddings {
    dimension: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl FileEmbeddings {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EmbeddingError> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != EMBEDDING_MAGIC {
            return Err(EmbeddingError::Format("missing EMB1 magic".into()));
        }
        let dimension = r.u32()? as usize;
        let count = r.u32()? as usize;
        if dimension == 0 {
            return Err(EmbeddingError::Format("dimension must be positive".into()));
        }
        let mut vectors = HashMap::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let klen = r.u16()? as usize;
            let key = std::str::from_utf8(r.take(klen)?)
                .map_err(|e| EmbeddingError::Format(format!("key is not utf-8: {e}")))?
                .to_string();
            let raw = r.take(dimension.checked_mul(4).ok_or_else(|| EmbeddingError::Format("dimension overflow".into()))?)?;
            let mut v: Vec<f64> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            normalize(&key, &mut v)?;
            if vectors.insert(key.clone(), v).is_some() {
                return Err(EmbeddingError::Format(format!("duplicate key {key:?}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(EmbeddingError::Format("trailing bytes".into()));
        }
        Ok(Self { dimension, vectors })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for FileEmbeddings {
    fn name(&self) -> &str {
        "file"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        self.vectors
            .get(text)
            .cloned()
            .ok_or_else(|| EmbeddingError::MissingKey(text.to_string()))
    }
}

/// Writes an embedding file; vectors are stored as f32.
pub fn write_embeddings<'a, W: Write>(
    mut w: W,
    dimension: usize,
    entries: impl IntoIterator<Item = (&'a str, &'a [f32])>,
) -> Result<(), EmbeddingError> {
    let entries: Vec<_> = entries.into_iter().collect();
    w.write_all(EMBEDDING_MAGIC)?;
    w.write_all(&(dimension as u32).to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (key, v) in entries {
        if v.len() != dimension {
            return Err(EmbeddingError::Format(format!("vector for {key:?} has wrong dimension")));
        }
        let klen = u16::try_from(key.len()).map_err(|_| EmbeddingError::Format("key too long".into()))?;
        w.write_all(&klen.to_le_bytes())?;
        w.write_all(key.as_bytes())?;
        for x in v {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EmbeddingError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| EmbeddingError::Format("truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, EmbeddingError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, EmbeddingError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Deterministic stand-in: averages seeded pseudo-random token vectors.
///
/// Scores computed with it are not comparable to sentence-encoder numbers.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbeddings {
    dimension: usize,
    seed: u64,
}

pub const HASH_FALLBACK_NAME: &str = "hash-fallback";

impl HashEmbeddings {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self { dimension, seed }
    }

    fn token_vector(&self, token: &str, acc: &mut [f64]) {
        let mut state = fnv1a(token.as_bytes()) ^ self.seed;
        for x in acc.iter_mut() {
            let r = splitmix64(&mut state);
            // uniform in [-1, 1)
            *x += (r >> 11) as f64 / (1u64 << 52) as f64 - 1.0;
        }
    }
}

impl Default for HashEmbeddings {
    fn default() -> Self {
        Self::new(64, 0x5eed)
    }
}

impl EmbeddingProvider for HashEmbeddings {
    fn name(&self) -> &str {
        HASH_FALLBACK_NAME
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbeddingError> {
        let mut v = vec![0.0; self.dimension];
        let tokens = normalized_tokens(text);
        if tokens.is_empty() {
            self.token_vector(text, &mut v);
        }
        for t in &tokens {
            self.token_vector(t, &mut v);
        }
        if normalize(text, &mut v).is_err() {
            v.iter_mut().for_each(|x| *x = 0.0);
            v[0] = 1.0;
        }
        Ok(v)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf29ce484222325, |h, &b| (h ^ b as u64).wrapping_mul(0x100000001b3))
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn hash_provider_is_unit_and_deterministic() {
        let p = HashEmbeddings::default();
        for text in ["a red chair", "", "!!!", "Chair"] {
            let a = p.embed(text).unwrap();
            assert_eq!(a.len(), 64);
            assert!((norm(&a) - 1.0).abs() < 1e-6);
            assert_eq!(a, p.embed(text).unwrap());
        }
        // case and punctuation do not matter
        assert_eq!(p.embed("The Chair.").unwrap(), p.embed("the chair").unwrap());
    }

    #[test]
    fn file_roundtrip_and_lookup() {
        let mut buf = Vec::new();
        let a = [3.0f32, 4.0];
        let b = [0.0f32, 2.0];
        write_embeddings(&mut buf, 2, [("table", &a[..]), ("coffee table", &b[..])]).unwrap();
        let f = FileEmbeddings::from_bytes(&buf).unwrap();
        assert_eq!(f.dimension(), 2);
        assert_eq!(f.embed("table").unwrap(), vec![0.6, 0.8]);
        assert!((phrase_similarity(&f, "table", "coffee table").unwrap() - 0.8).abs() < 1e-12);
        assert!(matches!(f.embed("chair"), Err(EmbeddingError::MissingKey(_))));
    }

    #[test]
    fn file_rejects_garbage() {
        assert!(FileEmbeddings::from_bytes(b"EMB0").is_err());
        assert!(FileEmbeddings::from_bytes(b"EMB1\x02\0\0\0\x01\0\0\0\x01\0a").is_err());
        let mut buf = Vec::new();
        write_embeddings(&mut buf, 1, [("z", &[0.0f32][..])]).unwrap();
        assert!(matches!(FileEmbeddings::from_bytes(&buf), Err(EmbeddingError::ZeroNorm(_))));
        let mut buf = Vec::new();
        write_embeddings(&mut buf, 1, [("z", &[1.0f32][..])]).unwrap();
        buf.push(0);
        assert!(FileEmbeddings::from_bytes(&buf).is_err());
    }
}
