//! A stationary toy autoregressive token model.
//!
//! The next-token logits depend on the previous token only (raster order,
//! with the sentinel `|V|` before the first token). The `(|V| + 1) × |V|`
//! logit table holds standard normal draws from ChaCha8 seeded by the model
//! seed, so the model is reproducible and has non-trivial context dependence.
//! Sampling draws from `softmax(logits / temperature + bias)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{param, Result};
use crate::tokens::TokenMap;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyARModel {
    seed: u64,
    vocab: usize,
    temperature: f64,
    table: Vec<f64>,
}

impl ToyARModel {
    pub fn new(seed: u64, vocab_size: usize, temperature: f64) -> Result<Self> {
        check(vocab_size, temperature)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = (0..(vocab_size + 1) * vocab_size)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(Self {
            seed,
            vocab: vocab_size,
            temperature,
            table,
        })
    }

    /// Every context gets all-zero logits, i.e. a uniform next-token law.
    pub fn uniform(vocab_size: usize) -> Result<Self> {
        check(vocab_size, 1.0)?;
        Ok(Self {
            seed: 0,
            vocab: vocab_size,
            temperature: 1.0,
            table: vec![0.0; (vocab_size + 1) * vocab_size],
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Raw logits after `prev` (pass `vocab_size` for the first position).
    pub fn logits(&self, prev: u32) -> &[f64] {
        let p = prev as usize;
        &self.table[p * self.vocab..(p + 1) * self.vocab]
    }

    /// Temperature-scaled logits written into `out`.
    pub fn scaled_logits(&self, prev: u32, out: &mut [f64]) {
        for (o, l) in out.iter_mut().zip(self.logits(prev)) {
            *o = l / self.temperature;
        }
    }

    /// Next-token probabilities after `prev` with no watermark bias.
    pub fn probabilities(&self, prev: u32) -> Vec<f64> {
        let mut l = vec![0.0; self.vocab];
        self.scaled_logits(prev, &mut l);
        softmax(&mut l);
        l
    }

    /// Ancestral sampling of `len` tokens; `bias(prefix, logits)` may edit the
    /// scaled logits of each step before the draw.
    pub fn sample_with<F>(&self, len: usize, rng_seed: u64, mut bias: F) -> Vec<u32>
    where
        F: FnMut(&[u32], &mut [f64]),
    {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut seq: Vec<u32> = Vec::with_capacity(len);
        let mut logits = vec![0.0; self.vocab];
        for _ in 0..len {
            let prev = seq.last().copied().unwrap_or(self.vocab as u32);
            self.scaled_logits(prev, &mut logits);
            bias(&seq, &mut logits);
            seq.push(draw(&mut logits, &mut rng));
        }
        seq
    }
}

fn check(vocab: usize, temperature: f64) -> Result<()> {
    if vocab < 2 || vocab > u32::MAX as usize - 1 {
        return Err(param("vocabulary needs at least two tokens"));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(param("temperature must be positive"));
    }
    Ok(())
}

/// In-place softmax with max subtraction.
pub fn softmax(logits: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for l in logits.iter_mut() {
        *l = if m == f64::INFINITY {
            if *l == f64::INFINITY { 1.0 } else { 0.0 }
        } else {
            (*l - m).exp()
        };
        s += *l;
    }
    logits.iter_mut().for_each(|l| *l /= s);
}

/// Inverse-CDF draw from `softmax(logits)`; consumes one uniform.
fn draw(logits: &mut [f64], rng: &mut ChaCha8Rng) -> u32 {
    softmax(logits);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in logits.iter().enumerate() {
        acc += p;
        if u < acc {
            return k as u32;
        }
    }
    // round-off left u above the final partial sum
    logits.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u32
}

/// Unwatermarked raster-order sample of an `h × w` token map.
pub fn sample_tokens(model: &ToyARModel, height: usize, width: usize, rng_seed: u64) -> Result<TokenMap> {
    let seq = model.sample_with(height * width, rng_seed, |_, _| {});
    TokenMap::new(height, width, model.vocab_size(), seq)
}

/// Uniformly random token map, independent of any model.
pub fn random_tokens(height: usize, width: usize, vocab_size: usize, rng_seed: u64) -> Result<TokenMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let idx = (0..height * width).map(|_| rng.random_range(0..vocab_size as u32)).collect();
    TokenMap::new(height, width, vocab_size, idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seeds_same_sequence() {
        let m = ToyARModel::new(3, 32, 1.0).unwrap();
        assert_eq!(sample_tokens(&m, 4, 4, 9).unwrap(), sample_tokens(&m, 4, 4, 9).unwrap());
        assert_ne!(sample_tokens(&m, 4, 4, 9).unwrap(), sample_tokens(&m, 4, 4, 10).unwrap());
    }

    #[test]
    fn cold_sampling_is_argmax() {
        let m = ToyARModel::new(5, 16, 1e-9).unwrap();
        let seq = m.sample_with(20, 1, |_, _| {});
        let mut prev = 16u32;
        for &t in &seq {
            let l = m.logits(prev);
            let best = (0..16).max_by(|&a, &b| l[a].total_cmp(&l[b])).unwrap();
            assert_eq!(t as usize, best);
            prev = t;
        }
        assert_eq!(seq, m.sample_with(20, 2, |_, _| {}));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ToyARModel::new(0, 1, 1.0).is_err());
        assert!(ToyARModel::new(0, 4, 0.0).is_err());
    }

    #[test]
    fn softmax_handles_infinite_logit() {
        let mut l = vec![0.0, f64::INFINITY, 1.0];
        softmax(&mut l);
        assert_eq!(l, vec![0.0, 1.0, 0.0]);
    }
}
