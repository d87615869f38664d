//! Token embedding providers.
//!
//! Precomputed embedding files have this layout:
//!
//! ```text
//! magic      8 bytes  "WETEMB\0\x01"
//! endianness 1 byte   0 = little, 1 = big (applies to everything below)
//! reserved   3 bytes  zero
//! dim        u32
//! count      u32
//! count times:
//!   id_len   u32
//!   id       id_len bytes of UTF-8
//!   rows     u32
//!   values   rows * dim f64, row-major
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use super::text::tokenize;
use crate::branches::EmbeddedSequence;
use crate::error::{Result, WetError};
use crate::numerics::Tensor;

pub const EMBEDDING_MAGIC: &[u8; 8] = b"WETEMB\0\x01";

/// Deterministic unit-norm token vectors keyed by a hash of the token.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoHash {
    pub dim: usize,
    pub seed: u64,
}

impl PseudoHash {
    pub fn new(dim: usize, seed: u64) -> Self {
        PseudoHash { dim, seed }
    }

    pub fn vector(&self, token: &str) -> Vec<f64> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        let seed: [u8; 32] = h.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(seed);
        loop {
            let v: Vec<f64> = (0..self.dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

/// Per-record embedding matrices keyed by record id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrecomputedEmbeddings {
    pub dim: usize,
    pub entries: BTreeMap<String, Tensor>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    big_endian: bool,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| {
            WetError::Parse(format!("embedding file truncated at byte {}", self.pos))
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b: [u8; 4] = self.take(4)?.try_into().expect("4 bytes");
        Ok(if self.big_endian {
            u32::from_be_bytes(b)
        } else {
            u32::from_le_bytes(b)
        })
    }

    fn f64(&mut self) -> Result<f64> {
        let b: [u8; 8] = self.take(8)?.try_into().expect("8 bytes");
        Ok(if self.big_endian {
            f64::from_be_bytes(b)
        } else {
            f64::from_le_bytes(b)
        })
    }
}

impl PrecomputedEmbeddings {
    pub fn new(dim: usize) -> Self {
        PrecomputedEmbeddings {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: impl Into<String>, matrix: Tensor) -> Result<()> {
        if matrix.ndim() != 2 || matrix.cols() != self.dim {
            return Err(WetError::dim(
                "PrecomputedEmbeddings",
                format!("{:?} does not have width {}", matrix.shape(), self.dim),
            ));
        }
        self.entries.insert(id.into(), matrix);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&Tensor> {
        self.entries
            .get(id)
            .ok_or_else(|| WetError::Lookup(format!("no precomputed embedding for record '{id}'")))
    }

    /// Serialises little-endian, entries in id order.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_bytes_with(false)
    }

    pub fn to_bytes_with(&self, big_endian: bool) -> Vec<u8> {
        let u32b = |v: u32| {
            if big_endian {
                v.to_be_bytes()
            } else {
                v.to_le_bytes()
            }
        };
        let mut out = EMBEDDING_MAGIC.to_vec();
        out.extend_from_slice(&[big_endian as u8, 0, 0, 0]);
        out.extend_from_slice(&u32b(self.dim as u32));
        out.extend_from_slice(&u32b(self.entries.len() as u32));
        for (id, m) in &self.entries {
            out.extend_from_slice(&u32b(id.len() as u32));
            out.extend_from_slice(id.as_bytes());
            out.extend_from_slice(&u32b(m.rows() as u32));
            for v in m.data() {
                out.extend_from_slice(&if big_endian {
                    v.to_be_bytes()
                } else {
                    v.to_le_bytes()
                });
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != EMBEDDING_MAGIC {
            return Err(WetError::Parse("not an embedding file (bad magic)".into()));
        }
        let big_endian = match bytes[8] {
            0 => false,
            1 => true,
            b => return Err(WetError::Parse(format!("unknown endianness flag {b}"))),
        };
        let mut r = Reader {
            bytes,
            pos: 12,
            big_endian,
        };
        let dim = r.u32()? as usize;
        let count = r.u32()? as usize;
        let mut out = PrecomputedEmbeddings::new(dim);
        for _ in 0..count {
            let len = r.u32()? as usize;
            let id = std::str::from_utf8(r.take(len)?)
                .map_err(|e| WetError::Parse(format!("embedding id is not UTF-8: {e}")))?
                .to_string();
            let rows = r.u32()? as usize;
            let n = rows
                .checked_mul(dim)
                .ok_or_else(|| WetError::Parse("embedding matrix too large".into()))?;
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            out.insert(id, Tensor::new(&[rows, dim], data)?)?;
        }
        if r.pos != bytes.len() {
            return Err(WetError::Parse(format!(
                "{} trailing bytes in embedding file",
                bytes.len() - r.pos
            )));
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| WetError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| WetError::io(path, e))?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EmbeddingProvider {
    PseudoHash(PseudoHash),
    Precomputed(PrecomputedEmbeddings),
}

/// Placeholder token used when a text has no usable words.
pub const EMPTY_TOKEN: &str = "<empty>";

/// Tokens fed to the embedder: stop words removed (kept if that would
/// leave nothing), truncated to `max_len`.
pub fn content_tokens(text: &str, stopwords: &[String], max_len: usize) -> Vec<String> {
    let all = tokenize(text);
    let mut kept: Vec<String> = all
        .iter()
        .filter(|t| !stopwords.contains(t))
        .cloned()
        .collect();
    if kept.is_empty() {
        kept = all;
    }
    if kept.is_empty() {
        kept.push(EMPTY_TOKEN.to_string());
    }
    kept.truncate(max_len);
    kept
}

impl EmbeddingProvider {
    pub fn dim(&self) -> usize {
        match self {
            EmbeddingProvider::PseudoHash(p) => p.dim,
            EmbeddingProvider::Precomputed(p) => p.dim,
        }
    }

    pub fn embed(
        &self,
        id: &str,
        text: &str,
        stopwords: &[String],
        max_len: usize,
    ) -> Result<EmbeddedSequence> {
        let tokens = match self {
            EmbeddingProvider::PseudoHash(p) => {
                let toks = content_tokens(text, stopwords, max_len);
                let data: Vec<f64> = toks.iter().flat_map(|t| p.vector(t)).collect();
                Tensor::new(&[toks.len(), p.dim], data)?
            }
            EmbeddingProvider::Precomputed(p) => {
                let m = p.get(id)?;
                let rows = m.rows().min(max_len);
                if rows == 0 {
                    return Err(WetError::invalid(format!(
                        "precomputed embedding for '{id}' has no rows"
                    )));
                }
                Tensor::new(&[rows, p.dim], m.data()[..rows * p.dim].to_vec())?
            }
        };
        EmbeddedSequence::unpadded(tokens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pseudo_hash_is_stable_and_unit() {
        let p = PseudoHash::new(16, 3);
        assert_eq!(p.vector("hope"), p.vector("hope"));
        assert_ne!(p.vector("hope"), p.vector("hopes"));
        assert_ne!(p.vector("hope"), PseudoHash::new(16, 4).vector("hope"));
        for t in ["a", "hope", "suicide", "", "\u{1F600}"] {
            let n: f64 = p.vector(t).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn binary_round_trip_both_endiannesses() {
        let mut e = PrecomputedEmbeddings::new(3);
        e.insert(
            "b",
            Tensor::new(&[2, 3], vec![0.1, -2.0, 3.5, f64::MIN_POSITIVE, 0.0, -0.0]).unwrap(),
        )
        .unwrap();
        e.insert(
            "a",
            Tensor::new(&[1, 3], vec![1.0 / 3.0, 1e-300, 7.0]).unwrap(),
        )
        .unwrap();
        for be in [false, true] {
            let back = PrecomputedEmbeddings::from_bytes(&e.to_bytes_with(be)).unwrap();
            for (id, m) in &e.entries {
                let b = &back.entries[id];
                assert_eq!(m.shape(), b.shape());
                assert!(m
                    .data()
                    .iter()
                    .zip(b.data())
                    .all(|(x, y)| x.to_bits() == y.to_bits()));
            }
        }
        let bytes = e.to_bytes();
        assert!(PrecomputedEmbeddings::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(PrecomputedEmbeddings::from_bytes(b"NOTMAGIC0000").is_err());
    }

    #[test]
    fn missing_id_is_a_lookup_error() {
        let provider = EmbeddingProvider::Precomputed(PrecomputedEmbeddings::new(4));
        assert!(matches!(
            provider.embed("zz", "text", &[], 8),
            Err(WetError::Lookup(_))
        ));
    }

    #[test]
    fn stopwords_and_truncation() {
        let stop = vec!["the".to_string(), "a".to_string()];
        assert_eq!(
            content_tokens("the cat a hat", &stop, 10),
            vec!["cat", "hat"]
        );
        assert_eq!(content_tokens("the a", &stop, 10), vec!["the", "a"]);
        assert_eq!(content_tokens("!!!", &stop, 10), vec![EMPTY_TOKEN]);
        assert_eq!(content_tokens("one two three", &stop, 2).len(), 2);
        let p = EmbeddingProvider::PseudoHash(PseudoHash::new(8, 0));
        let seq = p.embed("x", "hello there world", &stop, 64).unwrap();
        assert_eq!(seq.tokens.shape(), &[3, 8]);
    }
}
