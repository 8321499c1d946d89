//! KGW-style green-list watermark on raster-ordered token maps.
//!
//! At position `i` the green set is `green_set(context_hash(window), |A|, γ)`
//! where `window` holds the alphabet symbols of the previous `l` tokens
//! (sentinel `|A|` before the start). Embedding adds `δ` to the scaled
//! logits of every token whose symbol is green. Detection recomputes the
//! sets and counts hits over positions `l..T`; the first `l` positions have
//! no full context and are not scored. The null green probability is
//! `⌊γ|A|⌋ / |A|`.
//!
//! Plain KGW uses the token itself as its symbol; ClusterMark reuses this
//! machinery with cluster ids as symbols.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::hash::{context_hash, context_window, green_set, green_size, GreenSet, WatermarkKey};
use crate::schemes::model::ToyARModel;
use crate::stats::{DetectionReport, DEFAULT_FPR_LEVELS};
use crate::tokens::TokenMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KgwParams {
    pub key: WatermarkKey,
    pub gamma: f64,
    pub delta: f64,
}

impl KgwParams {
    pub fn new(key: WatermarkKey, gamma: f64, delta: f64) -> Self {
        Self { key, gamma, delta }
    }
}

/// Green sets memoized by context hash.
pub(crate) struct GreenSets {
    key: WatermarkKey,
    gamma: f64,
    alphabet: usize,
    cache: HashMap<u64, GreenSet>,
}

impl GreenSets {
    pub(crate) fn new(key: WatermarkKey, gamma: f64, alphabet: usize) -> Result<Self> {
        green_size(alphabet, gamma)?;
        Ok(Self {
            key,
            gamma,
            alphabet,
            cache: HashMap::new(),
        })
    }

    pub(crate) fn null_gamma(&self) -> f64 {
        green_size(self.alphabet, self.gamma).unwrap_or(0) as f64 / self.alphabet as f64
    }

    /// Green set for position `pos` of the symbol sequence.
    pub(crate) fn at(&mut self, symbols: &[u32], pos: usize) -> &GreenSet {
        let window = context_window(symbols, pos, self.key.context_len, self.alphabet as u32);
        let h = context_hash(&window, self.key.key);
        let (alphabet, gamma) = (self.alphabet, self.gamma);
        self.cache
            .entry(h)
            .or_insert_with(|| green_set(h, alphabet, gamma).expect("gamma validated at construction"))
    }

    /// `(trials, green)` over positions `l..len`.
    pub(crate) fn count(&mut self, symbols: &[u32]) -> (u64, u64) {
        let l = self.key.context_len;
        let mut green = 0;
        for i in l..symbols.len() {
            if self.at(symbols, i).contains(symbols[i]) {
                green += 1;
            }
        }
        ((symbols.len() - l) as u64, green)
    }
}

/// Samples `len` tokens with `δ` added to tokens whose symbol is green.
/// Returns the tokens and the green set used at every position.
pub(crate) fn embed_symbols(
    model: &ToyARModel,
    sets: &mut GreenSets,
    symbol_of: &[u32],
    delta: f64,
    len: usize,
    rng_seed: u64,
) -> Result<(Vec<u32>, Vec<GreenSet>)> {
    if delta.is_nan() || delta < 0.0 {
        return Err(param("delta must be nonnegative"));
    }
    let mut used = Vec::with_capacity(len);
    let mut symbols: Vec<u32> = Vec::with_capacity(len);
    let tokens = model.sample_with(len, rng_seed, |prefix, logits| {
        if let Some(&t) = prefix.last() {
            symbols.push(symbol_of[t as usize]);
        }
        let g = sets.at(&symbols, prefix.len()).clone();
        if delta > 0.0 {
            for (tok, l) in logits.iter_mut().enumerate() {
                if g.contains(symbol_of[tok]) {
                    *l += delta;
                }
            }
        }
        used.push(g);
    });
    Ok((tokens, used))
}

fn identity(vocab: usize) -> Vec<u32> {
    (0..vocab as u32).collect()
}

pub fn embed_kgw(model: &ToyARModel, params: &KgwParams, height: usize, width: usize, rng_seed: u64) -> Result<TokenMap> {
    Ok(embed_kgw_traced(model, params, height, width, rng_seed)?.0)
}

/// As [`embed_kgw`], also returning the green set applied at each position.
pub fn embed_kgw_traced(
    model: &ToyARModel,
    params: &KgwParams,
    height: usize,
    width: usize,
    rng_seed: u64,
) -> Result<(TokenMap, Vec<GreenSet>)> {
    let v = model.vocab_size();
    let mut sets = GreenSets::new(params.key, params.gamma, v)?;
    let (tokens, used) = embed_symbols(model, &mut sets, &identity(v), params.delta, height * width, rng_seed)?;
    Ok((TokenMap::new(height, width, v, tokens)?, used))
}

/// Green sets a detector recomputes at every position of `tokens`.
pub fn kgw_green_sets(tokens: &TokenMap, key: &WatermarkKey, gamma: f64) -> Result<Vec<GreenSet>> {
    let mut sets = GreenSets::new(*key, gamma, tokens.vocab_size())?;
    let seq = tokens.indices();
    Ok((0..seq.len()).map(|i| sets.at(seq, i).clone()).collect())
}

pub fn detect_kgw(tokens: &TokenMap, key: &WatermarkKey, gamma: f64) -> Result<DetectionReport> {
    if tokens.len() <= key.context_len {
        return Err(param(format!(
            "token map of length {} has nothing to score with context length {}",
            tokens.len(),
            key.context_len
        )));
    }
    let mut sets = GreenSets::new(*key, gamma, tokens.vocab_size())?;
    let (trials, green) = sets.count(tokens.indices());
    DetectionReport::from_counts(trials, green, sets.null_gamma(), &DEFAULT_FPR_LEVELS)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> WatermarkKey {
        WatermarkKey::new(42, 1)
    }

    #[test]
    fn zero_delta_matches_plain_sampling() {
        let m = ToyARModel::new(1, 64, 1.0).unwrap();
        let wm = embed_kgw(&m, &KgwParams::new(key(), 0.25, 0.0), 8, 8, 5).unwrap();
        let plain = crate::schemes::model::sample_tokens(&m, 8, 8, 5).unwrap();
        assert_eq!(wm, plain);
    }

    #[test]
    fn infinite_delta_makes_everything_green() {
        let m = ToyARModel::new(1, 64, 1.0).unwrap();
        let wm = embed_kgw(&m, &KgwParams::new(key(), 0.25, f64::INFINITY), 8, 8, 5).unwrap();
        let r = detect_kgw(&wm, &key(), 0.25).unwrap();
        assert_eq!(r.trials, 63);
        assert_eq!(r.green, r.trials);
    }

    #[test]
    fn detector_sees_embedder_sets() {
        let m = ToyARModel::new(2, 32, 1.0).unwrap();
        for l in 0..3 {
            let k = WatermarkKey::new(7, l);
            let (t, used) = embed_kgw_traced(&m, &KgwParams::new(k, 0.25, 2.0), 4, 5, 3).unwrap();
            assert_eq!(kgw_green_sets(&t, &k, 0.25).unwrap(), used);
        }
    }

    #[test]
    fn too_short_to_score() {
        let t = TokenMap::new(1, 1, 4, vec![0]).unwrap();
        assert!(detect_kgw(&t, &key(), 0.25).is_err());
        assert!(detect_kgw(&t, &WatermarkKey::new(1, 0), 0.25).is_ok());
    }

    #[test]
    fn negative_delta_rejected() {
        let m = ToyARModel::uniform(8).unwrap();
        assert!(embed_kgw(&m, &KgwParams::new(key(), 0.25, -1.0), 2, 2, 0).is_err());
    }
}
