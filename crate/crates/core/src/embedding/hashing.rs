//! Feature-hashing backbone.
//!
//! Each token and each adjacent token pair is hashed with 64-bit FNV-1a; the
//! low bits pick a bucket (`h % dim`) and the top bit picks the sign. The
//! summed vector is L2-normalised, and an input with no tokens maps to zero.

use super::join::{tokenize, JoinedSequence};
use super::{EmbeddingError, EmbeddingProvider, ProviderDescriptor};

pub const HASH_PROVIDER_NAME: &str = "hash";
pub const DEFAULT_HASH_DIM: usize = 512;
pub const HASH_MAX_SEQUENCE_LENGTH: usize = 512;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::InvalidConfig("hash dimension must be positive".into()));
        }
        Ok(HashEmbedder { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn add_feature(&self, out: &mut [f64], feature: &str) {
        let h = fnv1a(feature.as_bytes());
        let bucket = (h % self.dim as u64) as usize;
        out[bucket] += if h >> 63 == 0 { 1.0 } else { -1.0 };
    }

    /// Hash an already tokenised sequence.
    pub fn embed_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for t in tokens {
            self.add_feature(&mut out, t.as_ref());
        }
        let mut pair = String::new();
        for w in tokens.windows(2) {
            pair.clear();
            pair.push_str(w[0].as_ref());
            pair.push(' ');
            pair.push_str(w[1].as_ref());
            self.add_feature(&mut out, &pair);
        }
        let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            out.iter_mut().for_each(|v| *v /= norm);
        }
        out
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn descriptor(&self) -> ProviderDescriptor {
        ProviderDescriptor {
            name: HASH_PROVIDER_NAME.into(),
            dim: self.dim,
            deterministic: true,
            max_sequence_length: HASH_MAX_SEQUENCE_LENGTH,
            url: None,
        }
    }

    fn embed_texts(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        Ok(texts.iter().map(|t| self.embed_tokens(&tokenize(t))).collect())
    }

    fn embed_joined(&self, seqs: &[&JoinedSequence]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
        Ok(seqs
            .iter()
            .map(|s| {
                let toks: Vec<&str> = s.tokens.iter().map(|t| t.as_str()).collect();
                self.embed_tokens(&toks)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::join::{join_texts, JoinConfig};
    use std::collections::HashMap;

    // Independent restatement of the hashing formula: counts per feature
    // string first, then buckets.
    fn oracle(dim: usize, tokens: &[&str]) -> Vec<f64> {
        let mut counts: HashMap<String, f64> = HashMap::new();
        for t in tokens {
            *counts.entry((*t).to_string()).or_default() += 1.0;
        }
        for i in 1..tokens.len() {
            *counts.entry(format!("{} {}", tokens[i - 1], tokens[i])).or_default() += 1.0;
        }
        let mut v = vec![0.0; dim];
        for (feat, n) in counts {
            let mut h: u64 = 14695981039346656037;
            for b in feat.bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(1099511628211);
            }
            let sign = if h & (1 << 63) != 0 { -1.0 } else { 1.0 };
            v[(h % dim as u64) as usize] += sign * n;
        }
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            for x in &mut v {
                *x /= n;
            }
        }
        v
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn empty_text_is_zero() {
        let h = HashEmbedder::new(64).unwrap();
        let v = h.embed_texts(&[""]).unwrap();
        assert!(v[0].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let h = HashEmbedder::new(64).unwrap();
        let s = "The quick brown fox jumps over the lazy dog";
        let v = h.embed_texts(&[s, s]).unwrap();
        assert_eq!(v[0], v[1]);
        let norm: f64 = v[0].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_formula_oracle() {
        let h = HashEmbedder::new(64).unwrap();
        for s in ["a b a b a", "Some words, some REPEATED words", "x"] {
            let toks = tokenize(s);
            let toks: Vec<&str> = toks.iter().map(String::as_str).collect();
            let got = h.embed_texts(&[s]).unwrap().remove(0);
            let want = oracle(64, &toks);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn joined_sequence_hashes_markers_too() {
        let h = HashEmbedder::new(64).unwrap();
        let j = join_texts("target words", &["first reply", "second"], &JoinConfig::new(512));
        let got = h.embed_joined(&[&j]).unwrap().remove(0);
        let toks = ["[CLS]", "target", "words", "[SEP]", "first", "reply", "[SEP]", "second", "[SEP]"];
        let want = oracle(64, &toks);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
        let again = h.embed_joined(&[&j]).unwrap().remove(0);
        assert_eq!(got, again);
    }

    #[test]
    fn zero_dim_rejected() {
        assert!(HashEmbedder::new(0).is_err());
    }
}
