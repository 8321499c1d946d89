//! Pair-based index watermark.
//!
//! The codebook is matched greedily: all index pairs are sorted by distance
//! (ties by lower first index, then lower second index) and accepted while
//! both members are unpaired. One member of every pair is green, chosen by
//! a keyed coin. Embedding replaces each red token by its green partner.
//! Detection counts green members among paired tokens against
//! `Binomial(T, ½)`; a leftover index (odd `|V|`) is never scored.

use serde::{Deserialize, Serialize};

use crate::codebook::{sq_dist, Codebook};
use crate::error::{param, Result};
use crate::hash::fmix64;
use crate::stats::{DetectionReport, DEFAULT_FPR_LEVELS};
use crate::tokens::TokenMap;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenPairing {
    /// `(green, red)` members of every pair, in matching order.
    pairs: Vec<(u32, u32)>,
    leftover: Option<u32>,
    vocab: usize,
}

impl TokenPairing {
    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn leftover(&self) -> Option<u32> {
        self.leftover
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn tables(&self) -> (Vec<Option<u32>>, Vec<bool>) {
        let mut partner = vec![None; self.vocab];
        let mut green = vec![false; self.vocab];
        for &(g, r) in &self.pairs {
            partner[g as usize] = Some(r);
            partner[r as usize] = Some(g);
            green[g as usize] = true;
        }
        (partner, green)
    }

    pub fn partner(&self, token: u32) -> Option<u32> {
        self.pairs.iter().find_map(|&(g, r)| {
            if g == token {
                Some(r)
            } else if r == token {
                Some(g)
            } else {
                None
            }
        })
    }

    pub fn is_green(&self, token: u32) -> bool {
        self.pairs.iter().any(|&(g, _)| g == token)
    }
}

pub fn build_pairing(codebook: &Codebook, key: u64) -> TokenPairing {
    let n = codebook.size();
    let mut cand: Vec<(f64, u32, u32)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            cand.push((sq_dist(codebook.vector(i), codebook.vector(j)), i as u32, j as u32));
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used = vec![false; n];
    let mut pairs = Vec::with_capacity(n / 2);
    for (_, i, j) in cand {
        if used[i as usize] || used[j as usize] {
            continue;
        }
        used[i as usize] = true;
        used[j as usize] = true;
        let coin = fmix64(key ^ fmix64(u64::from(i) << 32 | u64::from(j))) & 1;
        pairs.push(if coin == 0 { (i, j) } else { (j, i) });
        if pairs.len() == n / 2 {
            break;
        }
    }
    let leftover = used.iter().position(|u| !u).map(|i| i as u32);
    TokenPairing { pairs, leftover, vocab: n }
}

fn check_vocab(tokens: &TokenMap, pairing: &TokenPairing) -> Result<()> {
    if tokens.vocab_size() != pairing.vocab {
        return Err(param(format!(
            "token vocabulary {} differs from pairing vocabulary {}",
            tokens.vocab_size(),
            pairing.vocab
        )));
    }
    Ok(())
}

pub fn embed_indexmark(tokens: &TokenMap, pairing: &TokenPairing) -> Result<TokenMap> {
    check_vocab(tokens, pairing)?;
    let (partner, green) = pairing.tables();
    let out = tokens
        .indices()
        .iter()
        .map(|&t| match partner[t as usize] {
            Some(p) if !green[t as usize] => p,
            _ => t,
        })
        .collect();
    tokens.with_indices(out)
}

pub fn indexmark_counts(tokens: &TokenMap, pairing: &TokenPairing) -> Result<(u64, u64)> {
    check_vocab(tokens, pairing)?;
    let (partner, green) = pairing.tables();
    let mut trials = 0;
    let mut hits = 0;
    for &t in tokens.indices() {
        if partner[t as usize].is_some() {
            trials += 1;
            hits += u64::from(green[t as usize]);
        }
    }
    Ok((trials, hits))
}

pub fn detect_indexmark(tokens: &TokenMap, pairing: &TokenPairing) -> Result<DetectionReport> {
    let (trials, hits) = indexmark_counts(tokens, pairing)?;
    if trials == 0 {
        return Err(param("no paired tokens to score"));
    }
    DetectionReport::from_counts(trials, hits, 0.5, &DEFAULT_FPR_LEVELS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_tokens_form_one_pair() {
        let cb = Codebook::new(1, vec![0.3, -0.2]).unwrap();
        let p = build_pairing(&cb, 1);
        assert_eq!(p.pairs().len(), 1);
        let (g, r) = p.pairs()[0];
        assert_eq!(g + r, 1);
        assert_eq!(p.leftover(), None);
    }

    #[test]
    fn collinear_codes_pair_neighbours() {
        let cb = Codebook::new(1, vec![0.0, 0.1, 10.0, 10.1]).unwrap();
        let p = build_pairing(&cb, 3);
        let mut sets: Vec<(u32, u32)> = p.pairs().iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        sets.sort();
        assert_eq!(sets, vec![(0, 1), (2, 3)]);
    }

    #[test]
    fn odd_vocab_leaves_one_unscored() {
        let cb = Codebook::new(1, vec![0.0, 1.0, 5.0]).unwrap();
        let p = build_pairing(&cb, 0);
        assert_eq!(p.leftover(), Some(2));
        let t = TokenMap::new(1, 3, 3, vec![2, 2, 2]).unwrap();
        assert_eq!(embed_indexmark(&t, &p).unwrap(), t);
        assert!(detect_indexmark(&t, &p).is_err());
    }

    #[test]
    fn embedding_greens_everything() {
        let cb = crate::codebook::build_codebook(4, 16, 2).unwrap();
        let p = build_pairing(&cb, 9);
        let all: Vec<u32> = (0..16).collect();
        let t = TokenMap::new(4, 4, 16, all).unwrap();
        let e = embed_indexmark(&t, &p).unwrap();
        let r = detect_indexmark(&e, &p).unwrap();
        assert_eq!((r.trials, r.green), (16, 16));
        let reds: Vec<u32> = p.pairs().iter().map(|&(_, r)| r).collect();
        let red_map = TokenMap::new(1, 8, 16, reds.clone()).unwrap();
        let swapped = embed_indexmark(&red_map, &p).unwrap();
        for (a, b) in reds.iter().zip(swapped.indices()) {
            assert_eq!(p.partner(*a), Some(*b));
            assert!(p.is_green(*b));
        }
        let greens = embed_indexmark(&swapped, &p).unwrap();
        assert_eq!(greens, swapped);
    }
}
