//! Bitwise multi-scale watermark over a residual pyramid.
//!
//! A latent `z` of shape `d × H × W` is decomposed along a schedule of
//! resolutions `(h_1, w_1) … (h_K, w_K) = (H, W)`:
//!
//! ```text
//! r ← z
//! for i in 1..=K:
//!     ẽ_i = resize(r, h_i, w_i)          unquantized residual
//!     u_i = s_i · sign(ẽ_i)              quantized residual (sign(0) = −1)
//!     r  ← r − resize(u_i, H, W)
//! ```
//!
//! Scale `i` contributes the bits `[ẽ_i > 0]` in latent storage order
//! (channel, row, column). Green n-grams of length `l + 1` are counted inside
//! each scale only, and the first `l` bits of a scale are never scored.
//!
//! When every ratio `H/h_i`, `W/w_i` is an odd integer, resizing down is
//! point sampling at cell centers and `resize(resize(u, H, W), h_i, w_i) = u`.
//! With `s_i = 2^{-i}` each constant exceeds the sum of all finer ones, so a
//! latent built as `Σ_i resize(u_i, H, W)` decomposes back into exactly the
//! same bits. The default schedule keeps all ratios odd.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, shape, Result};
use crate::image::Image;
use crate::latent::Latent;
use crate::resize::{bilinear_resize, bilinear_resize_adjoint};
use crate::stats::{DetectionReport, DEFAULT_FPR_LEVELS};
use crate::tokens::BitSeq;
use crate::vae::EncoderProfile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSchedule {
    sizes: Vec<(usize, usize)>,
    constants: Vec<f64>,
}

impl ScaleSchedule {
    /// Schedule with the default constants `s_i = 2^{-i}`.
    pub fn new(sizes: Vec<(usize, usize)>) -> Result<Self> {
        let constants = (1..=sizes.len()).map(|i| 0.5f64.powi(i as i32)).collect();
        Self::with_constants(sizes, constants)
    }

    pub fn with_constants(sizes: Vec<(usize, usize)>, constants: Vec<f64>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(param("schedule needs at least one scale"));
        }
        if constants.len() != sizes.len() {
            return Err(param("one quantizer constant per scale is required"));
        }
        if sizes.iter().any(|&(h, w)| h == 0 || w == 0) {
            return Err(param("scale sizes must be positive"));
        }
        if sizes.windows(2).any(|p| p[1].0 < p[0].0 || p[1].1 < p[0].1) {
            return Err(param("scale sizes must be nondecreasing"));
        }
        if constants.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(param("quantizer constants must be positive"));
        }
        Ok(Self { sizes, constants })
    }

    /// `(1, 3, 7, 9, 21, 63)` square scales for a 63 × 63 latent.
    pub fn default_63() -> Self {
        Self::new([1, 3, 7, 9, 21, 63].iter().map(|&s| (s, s)).collect()).expect("static schedule")
    }

    pub fn sizes(&self) -> &[(usize, usize)] {
        &self.sizes
    }

    pub fn constants(&self) -> &[f64] {
        &self.constants
    }

    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn finest(&self) -> (usize, usize) {
        *self.sizes.last().expect("nonempty")
    }

    /// Bits per scale for `dim` channels.
    pub fn scale_lengths(&self, dim: usize) -> Vec<usize> {
        self.sizes.iter().map(|&(h, w)| h * w * dim).collect()
    }

    pub fn check_latent(&self, latent: &Latent) -> Result<()> {
        if (latent.height(), latent.width()) != self.finest() {
            return Err(shape(format!(
                "schedule ends at {:?} but latent is {}x{}",
                self.finest(),
                latent.height(),
                latent.width()
            )));
        }
        Ok(())
    }
}

/// Favoured bit n-grams of length `l + 1`. An n-gram is read oldest bit first
/// as a binary number, so `01` is 1 and `10` is 2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct GreenNGramSet {
    context: usize,
    members: Vec<bool>,
}

impl GreenNGramSet {
    pub fn new(context: usize, members: &[u32]) -> Result<Self> {
        if context > 16 {
            return Err(param("n-gram context longer than 16 bits"));
        }
        let total = 1usize << (context + 1);
        let mut mask = vec![false; total];
        for &m in members {
            let m = m as usize;
            if m >= total {
                return Err(param(format!("n-gram code {m} out of range for length {}", context + 1)));
            }
            mask[m] = true;
        }
        let count = mask.iter().filter(|&&g| g).count();
        if count == 0 || count == total {
            return Err(param("green n-gram set must be a nonempty proper subset"));
        }
        Ok(Self { context, members: mask })
    }

    /// The default bigram set `{01, 10}`.
    pub fn alternating() -> Self {
        Self::new(1, &[0b01, 0b10]).expect("static set")
    }

    /// Parses codes such as `["01", "10"]`; all must share one length.
    pub fn parse(codes: &[&str]) -> Result<Self> {
        let len = codes.first().map(|c| c.len()).ok_or_else(|| param("empty n-gram set"))?;
        if len == 0 || codes.iter().any(|c| c.len() != len) {
            return Err(param("n-gram codes must share one positive length"));
        }
        let values = codes
            .iter()
            .map(|c| u32::from_str_radix(c, 2).map_err(|_| param(format!("bad n-gram code {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(len - 1, &values)
    }

    pub fn context(&self) -> usize {
        self.context
    }

    pub fn codes(&self) -> Vec<String> {
        let n = self.context + 1;
        self.members
            .iter()
            .enumerate()
            .filter(|(_, &g)| g)
            .map(|(m, _)| format!("{m:0n$b}"))
            .collect()
    }

    pub fn contains_code(&self, code: usize) -> bool {
        self.members[code]
    }

    /// Whether the n-gram ending at `bits[j]` is green; needs `j ≥ l`.
    pub fn is_green_at(&self, bits: &[bool], j: usize) -> bool {
        self.members[code_at(bits, j, self.context)]
    }

    /// Null probability `|G| / 2^{l+1}`.
    pub fn null_gamma(&self) -> f64 {
        self.members.iter().filter(|&&g| g).count() as f64 / self.members.len() as f64
    }
}

fn code_at(bits: &[bool], j: usize, context: usize) -> usize {
    bits[j - context..=j].iter().fold(0, |acc, &b| (acc << 1) | usize::from(b))
}

impl TryFrom<Vec<String>> for GreenNGramSet {
    type Error = crate::error::Error;

    fn try_from(v: Vec<String>) -> Result<Self> {
        let refs: Vec<&str> = v.iter().map(String::as_str).collect();
        Self::parse(&refs)
    }
}

impl From<GreenNGramSet> for Vec<String> {
    fn from(g: GreenNGramSet) -> Self {
        g.codes()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleResidual {
    pub unquantized: Latent,
    pub quantized: Latent,
    pub bits: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPyramid {
    pub scales: Vec<ScaleResidual>,
    /// What is left after subtracting every upsampled quantized residual.
    pub remainder: Latent,
}

impl ResidualPyramid {
    pub fn bits(&self) -> BitSeq {
        BitSeq(self.scales.iter().flat_map(|s| s.bits.iter().copied()).collect())
    }

    pub fn scale_bits(&self) -> Vec<&[bool]> {
        self.scales.iter().map(|s| s.bits.as_slice()).collect()
    }

    /// `Σ_i resize(u_i, H, W)`.
    pub fn reconstruction(&self) -> Result<Latent> {
        let (d, h, w) = self.remainder.shape();
        let mut acc = Latent::zeros(d, h, w);
        for s in &self.scales {
            acc.add_assign(&bilinear_resize(&s.quantized, h, w)?)?;
        }
        Ok(acc)
    }
}

pub fn residual_decompose(latent: &Latent, schedule: &ScaleSchedule) -> Result<ResidualPyramid> {
    schedule.check_latent(latent)?;
    let (h, w) = (latent.height(), latent.width());
    let mut r = latent.clone();
    let mut scales = Vec::with_capacity(schedule.len());
    for (&(hi, wi), &s) in schedule.sizes().iter().zip(schedule.constants()) {
        let e = bilinear_resize(&r, hi, wi)?;
        let bits: Vec<bool> = e.data().iter().map(|&v| v > 0.0).collect();
        let mut u = e.clone();
        u.data_mut()
            .iter_mut()
            .zip(&bits)
            .for_each(|(v, &b)| *v = if b { s } else { -s });
        r.sub_assign(&bilinear_resize(&u, h, w)?)?;
        scales.push(ScaleResidual {
            unquantized: e,
            quantized: u,
            bits,
        });
    }
    Ok(ResidualPyramid { scales, remainder: r })
}

/// Latent `Σ_i resize(s_i·(2b − 1), H, W)` for per-scale bit patterns.
pub fn synthesize_latent(bits: &[bool], dim: usize, schedule: &ScaleSchedule) -> Result<Latent> {
    let lengths = schedule.scale_lengths(dim);
    if bits.len() != lengths.iter().sum::<usize>() {
        return Err(shape(format!(
            "{} bits do not fill a schedule needing {}",
            bits.len(),
            lengths.iter().sum::<usize>()
        )));
    }
    let (h, w) = schedule.finest();
    let mut acc = Latent::zeros(dim, h, w);
    let mut offset = 0;
    for ((&(hi, wi), &s), &n) in schedule.sizes().iter().zip(schedule.constants()).zip(&lengths) {
        let vals = bits[offset..offset + n].iter().map(|&b| if b { s } else { -s }).collect();
        acc.add_assign(&bilinear_resize(&Latent::new(dim, hi, wi, vals)?, h, w)?)?;
        offset += n;
    }
    Ok(acc)
}

/// Per-bit base logit for `1` before any watermark bias (0 is a fair coin).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ToyBitModel {
    pub logit_one: f64,
}

/// Samples a watermarked bit sequence for `dim` channels and assembles its latent.
///
/// Within each scale, bit `j ≥ l` gets `δ` added to the logit of whichever
/// value completes a green n-gram with the previous `l` bits of that scale.
pub fn sample_bitmark(
    model: &ToyBitModel,
    green: &GreenNGramSet,
    delta: f64,
    schedule: &ScaleSchedule,
    dim: usize,
    rng_seed: u64,
) -> Result<(Latent, BitSeq)> {
    if delta.is_nan() || delta < 0.0 {
        return Err(param("delta must be nonnegative"));
    }
    let l = green.context();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut all = Vec::new();
    for n in schedule.scale_lengths(dim) {
        let mut bits: Vec<bool> = Vec::with_capacity(n);
        for j in 0..n {
            let mut logit = model.logit_one;
            if j >= l && delta > 0.0 {
                let prefix = bits[j - l..j].iter().fold(0usize, |a, &b| (a << 1) | usize::from(b));
                let g1 = green.contains_code((prefix << 1) | 1);
                let g0 = green.contains_code(prefix << 1);
                match (g0, g1) {
                    (false, true) => logit += delta,
                    (true, false) => logit -= delta,
                    _ => {}
                }
            }
            let p1 = 1.0 / (1.0 + (-logit).exp());
            bits.push(rng.random::<f64>() < p1);
        }
        all.extend(bits);
    }
    let latent = synthesize_latent(&all, dim, schedule)?;
    Ok((latent, BitSeq(all)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreenCount {
    pub green: u64,
    pub trials: u64,
}

impl GreenCount {
    /// Green minus red n-grams.
    pub fn surplus(&self) -> i64 {
        2 * self.green as i64 - self.trials as i64
    }
}

/// Green n-grams within one scale's bits.
pub fn count_green(bits: &[bool], green: &GreenNGramSet) -> GreenCount {
    let l = green.context();
    if bits.len() <= l {
        return GreenCount { green: 0, trials: 0 };
    }
    let hits = (l..bits.len()).filter(|&j| green.is_green_at(bits, j)).count();
    GreenCount {
        green: hits as u64,
        trials: (bits.len() - l) as u64,
    }
}

/// Per-scale counts for a flat bit sequence split by `lengths`.
pub fn count_green_scales(bits: &BitSeq, lengths: &[usize], green: &GreenNGramSet) -> Result<Vec<GreenCount>> {
    if bits.len() != lengths.iter().sum::<usize>() {
        return Err(shape("bit sequence length does not match the scale lengths"));
    }
    let mut out = Vec::with_capacity(lengths.len());
    let mut offset = 0;
    for &n in lengths {
        out.push(count_green(&bits.bits()[offset..offset + n], green));
        offset += n;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitmarkReport {
    pub report: DetectionReport,
    pub per_scale: Vec<GreenCount>,
}

impl BitmarkReport {
    pub fn from_counts(per_scale: Vec<GreenCount>, green: &GreenNGramSet) -> Result<Self> {
        let trials = per_scale.iter().map(|c| c.trials).sum();
        let hits = per_scale.iter().map(|c| c.green).sum();
        Ok(Self {
            report: DetectionReport::from_counts(trials, hits, green.null_gamma(), &DEFAULT_FPR_LEVELS)?,
            per_scale,
        })
    }

    /// Whether the finest scale's surplus strictly exceeds every coarser one.
    pub fn finest_dominates(&self) -> bool {
        match self.per_scale.split_last() {
            Some((last, rest)) => rest.iter().all(|c| last.surplus() > c.surplus()),
            None => false,
        }
    }
}

pub fn detect_bitmark_latent(latent: &Latent, schedule: &ScaleSchedule, green: &GreenNGramSet) -> Result<BitmarkReport> {
    let pyr = residual_decompose(latent, schedule)?;
    let counts = pyr.scales.iter().map(|s| count_green(&s.bits, green)).collect();
    BitmarkReport::from_counts(counts, green)
}

pub fn detect_bitmark(
    image: &Image,
    profile: &EncoderProfile,
    schedule: &ScaleSchedule,
    green: &GreenNGramSet,
) -> Result<BitmarkReport> {
    detect_bitmark_latent(&profile.encode(image)?, schedule, green)
}

/// Gradient of `Σ_{(i,j)∈targets} |ẽ_i[j] + sign(ẽ_i[j])·μ|` with respect to
/// the full-resolution latent, treating every quantized residual as constant.
/// Returns the loss and the gradient.
pub fn flip_loss_gradient(
    pyramid: &ResidualPyramid,
    targets: &[(usize, usize)],
    margin: f64,
) -> Result<(f64, Latent)> {
    let (d, h, w) = pyramid.remainder.shape();
    let mut per_scale: Vec<Option<Latent>> = vec![None; pyramid.scales.len()];
    let mut loss = 0.0;
    for &(i, j) in targets {
        let e = &pyramid.scales[i].unquantized;
        let v = e.data()[j];
        let sgn = if v > 0.0 { 1.0 } else { -1.0 };
        loss += (v + sgn * margin).abs();
        let g = per_scale[i].get_or_insert_with(|| Latent::zeros(e.dim(), e.height(), e.width()));
        g.data_mut()[j] += sgn;
    }
    let mut grad = Latent::zeros(d, h, w);
    for g in per_scale.into_iter().flatten() {
        grad.add_assign(&bilinear_resize_adjoint(&g, h, w)?)?;
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_on_small_sequences() {
        let g = GreenNGramSet::alternating();
        let c = count_green(&[false, true, false, true], &g);
        assert_eq!((c.green, c.trials), (3, 3));
        let c = count_green(&[false; 5], &g);
        assert_eq!((c.green, c.trials), (0, 4));
        assert_eq!(g.null_gamma(), 0.5);
    }

    #[test]
    fn ngram_set_validation() {
        assert!(GreenNGramSet::new(1, &[]).is_err());
        assert!(GreenNGramSet::new(1, &[0, 1, 2, 3]).is_err());
        assert!(GreenNGramSet::new(1, &[4]).is_err());
        assert_eq!(GreenNGramSet::parse(&["01", "10"]).unwrap(), GreenNGramSet::alternating());
        assert_eq!(GreenNGramSet::alternating().codes(), vec!["01", "10"]);
        let s = serde_json::to_string(&GreenNGramSet::alternating()).unwrap();
        assert_eq!(s, r#"["01","10"]"#);
    }

    #[test]
    fn single_full_scale_gives_sign_pattern() {
        let z = Latent::new(1, 1, 3, vec![0.2, -0.1, 0.0]).unwrap();
        let s = ScaleSchedule::new(vec![(1, 3)]).unwrap();
        let p = residual_decompose(&z, &s).unwrap();
        assert_eq!(p.scales[0].unquantized, z);
        assert_eq!(p.scales[0].bits, vec![true, false, false]);
    }

    #[test]
    fn schedule_validation() {
        assert!(ScaleSchedule::new(vec![]).is_err());
        assert!(ScaleSchedule::new(vec![(3, 3), (1, 1)]).is_err());
        let s = ScaleSchedule::default_63();
        assert_eq!(s.scale_lengths(4).iter().sum::<usize>(), 4 * 4550);
        assert!(s.check_latent(&Latent::zeros(4, 62, 63)).is_err());
    }

    #[test]
    fn infinite_delta_alternates() {
        let s = ScaleSchedule::new(vec![(1, 1), (3, 3)]).unwrap();
        let (_, bits) = sample_bitmark(&ToyBitModel::default(), &GreenNGramSet::alternating(), f64::INFINITY, &s, 2, 4)
            .unwrap();
        let b = bits.bits();
        for w in b[2..].windows(2) {
            assert_ne!(w[0], w[1]);
        }
    }

    #[test]
    fn synthesized_latents_decompose_exactly() {
        let s = ScaleSchedule::new(vec![(1, 1), (3, 3), (9, 9)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let bits: Vec<bool> = (0..3 * 91).map(|_| rng.random()).collect();
            let z = synthesize_latent(&bits, 3, &s).unwrap();
            let p = residual_decompose(&z, &s).unwrap();
            assert_eq!(p.bits().0, bits);
            assert!(p.remainder.data().iter().all(|v| v.abs() < 1e-12));
        }
    }
}
