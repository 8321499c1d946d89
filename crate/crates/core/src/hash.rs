//! Keyed context hashing and green-set partitioning.
//!
//! The context hash folds the SplitMix64 finalizer over the key and then
//! each context token, oldest first:
//!
//! ```text
//! GOLDEN = 0x9E3779B97F4A7C15
//! fmix(x) = x ^= x >> 30; x *= 0xBF58476D1CE4E5B9;
//!           x ^= x >> 27; x *= 0x94D049BB133111EB;
//!           x ^= x >> 31
//! h_0     = fmix(key + GOLDEN)
//! h_{k+1} = fmix((h_k ^ t_k) + GOLDEN)
//! ```
//!
//! All arithmetic is wrapping on `u64`. Test vectors live in
//! `tests/fixtures/context_hash_vectors.txt`, produced by
//! `tools/hash_vectors.py`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

pub const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output finalizer.
#[inline]
pub fn fmix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Secret key plus the number of preceding tokens that seed each green set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatermarkKey {
    pub key: u64,
    pub context_len: usize,
}

impl WatermarkKey {
    pub fn new(key: u64, context_len: usize) -> Self {
        Self { key, context_len }
    }
}

pub fn context_hash(tokens: &[u32], key: u64) -> u64 {
    tokens
        .iter()
        .fold(fmix64(key.wrapping_add(GOLDEN)), |h, &t| {
            fmix64((h ^ u64::from(t)).wrapping_add(GOLDEN))
        })
}

/// The `len` symbols preceding position `pos` in `seq`, oldest first. Missing
/// positions before the start are filled with `sentinel` (conventionally the
/// alphabet size, which no real symbol can take).
pub fn context_window(seq: &[u32], pos: usize, len: usize, sentinel: u32) -> Vec<u32> {
    (0..len)
        .map(|k| {
            let back = len - k;
            if pos >= back {
                seq[pos - back]
            } else {
                sentinel
            }
        })
        .collect()
}

/// Number of green members `⌊γ·V⌋`. A 1e-9 slack absorbs binary round-off
/// such as `0.29·100 = 28.999…`.
pub fn green_size(vocab_size: usize, gamma: f64) -> Result<usize> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(param(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if vocab_size < 2 {
        return Err(param("vocabulary needs at least two entries"));
    }
    let k = (gamma * vocab_size as f64 + 1e-9).floor() as usize;
    if k == 0 {
        return Err(param(format!("gamma {gamma} leaves an empty green set for |V| = {vocab_size}")));
    }
    Ok(k)
}

/// Membership mask of a keyed pseudo-random subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreenSet {
    mask: Vec<bool>,
    size: usize,
}

impl GreenSet {
    pub fn contains(&self, token: u32) -> bool {
        self.mask.get(token as usize).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn vocab_size(&self) -> usize {
        self.mask.len()
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn members(&self) -> Vec<u32> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &g)| g.then_some(i as u32))
            .collect()
    }
}

/// Draws `⌊γ·V⌋` distinct indices with a partial Fisher–Yates shuffle driven
/// by ChaCha8 seeded from `seed`.
pub fn green_set(seed: u64, vocab_size: usize, gamma: f64) -> Result<GreenSet> {
    let size = green_size(vocab_size, gamma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<u32> = (0..vocab_size as u32).collect();
    let (chosen, _) = idx.partial_shuffle(&mut rng, size);
    let mut mask = vec![false; vocab_size];
    for &t in chosen.iter() {
        mask[t as usize] = true;
    }
    Ok(GreenSet { mask, size })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        assert_eq!(context_hash(&[5, 9], 3), context_hash(&[5, 9], 3));
        assert_ne!(context_hash(&[5], 0), context_hash(&[5], 1));
    }

    #[test]
    fn empty_context_is_key_only() {
        assert_eq!(context_hash(&[], 77), fmix64(77u64.wrapping_add(GOLDEN)));
    }

    #[test]
    fn window_pads_with_sentinel() {
        let seq = [4, 8, 15];
        assert_eq!(context_window(&seq, 0, 2, 99), vec![99, 99]);
        assert_eq!(context_window(&seq, 1, 2, 99), vec![99, 4]);
        assert_eq!(context_window(&seq, 2, 2, 99), vec![4, 8]);
        assert!(context_window(&seq, 2, 0, 99).is_empty());
    }

    #[test]
    fn green_set_size_is_floor() {
        let g = green_set(1, 16, 0.25).unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.members().len(), 4);
        assert_eq!(green_size(100, 0.29).unwrap(), 29);
    }

    #[test]
    fn green_set_rejects_bad_gamma() {
        for g in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(green_set(0, 16, g).is_err());
        }
        assert!(green_set(0, 1, 0.5).is_err());
        assert!(green_set(0, 2, 0.1).is_err());
    }

    #[test]
    fn green_and_red_partition_vocab() {
        for seed in 0..50 {
            let g = green_set(seed, 37, 0.3).unwrap();
            let red = (0..37u32).filter(|&t| !g.contains(t)).count();
            assert_eq!(g.len() + red, 37);
        }
    }

    #[test]
    fn marginal_inclusion_is_uniform() {
        let runs = 10_000;
        let mut hits = [0usize; 8];
        for seed in 0..runs {
            for t in green_set(fmix64(seed), 8, 0.5).unwrap().members() {
                hits[t as usize] += 1;
            }
        }
        for h in hits {
            let f = h as f64 / runs as f64;
            assert!((f - 0.5).abs() < 0.02, "frequency {f}");
        }
    }
}
