//! Binomial right-tail tests, z-scores, and TPR at a fixed FPR.
//!
//! `binom_p_right` evaluates `Pr(X ≥ N_g)` for `X ~ Binomial(T, γ)` by exact
//! log-space summation when `T ≤ EXACT_MAX_TRIALS`, and through the identity
//! `Pr(X ≥ k) = I_γ(k, T − k + 1)` otherwise, with the regularized incomplete
//! beta function evaluated by a modified-Lentz continued fraction.
//!
//! The z-score is the plain normal approximation without continuity
//! correction.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{param, Result};

pub const EXACT_MAX_TRIALS: u64 = 10_000;
/// Relative convergence tolerance of the continued fraction.
pub const CF_TOLERANCE: f64 = 1e-12;
const CF_MAX_ITER: usize = 200_000;

fn check(trials: u64, green: u64, gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(param(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    if green > trials {
        return Err(param(format!("green count {green} exceeds trials {trials}")));
    }
    Ok(())
}

/// Right-tailed binomial p-value `Pr(X ≥ green)`.
pub fn binom_p_right(trials: u64, green: u64, gamma: f64) -> Result<f64> {
    check(trials, green, gamma)?;
    if trials <= EXACT_MAX_TRIALS {
        binom_p_right_exact(trials, green, gamma)
    } else {
        binom_p_right_beta(trials, green, gamma)
    }
}

/// Exact summation of the upper tail in log space.
pub fn binom_p_right_exact(trials: u64, green: u64, gamma: f64) -> Result<f64> {
    check(trials, green, gamma)?;
    if green == 0 {
        return Ok(1.0);
    }
    let n = trials as f64;
    let k0 = green as f64;
    let lg = gamma.ln();
    let lq = (-gamma).ln_1p();
    let ratio = lg - lq;
    let mut log_term = ln_gamma(n + 1.0) - ln_gamma(k0 + 1.0) - ln_gamma(n - k0 + 1.0) + k0 * lg + (n - k0) * lq;
    let mut terms = Vec::with_capacity((trials - green + 1) as usize);
    terms.push(log_term);
    for k in green..trials {
        let kf = k as f64;
        log_term += ((n - kf) / (kf + 1.0)).ln() + ratio;
        terms.push(log_term);
    }
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    Ok((max + sum.ln()).exp().min(1.0))
}

/// Upper tail through the regularized incomplete beta function.
pub fn binom_p_right_beta(trials: u64, green: u64, gamma: f64) -> Result<f64> {
    check(trials, green, gamma)?;
    if green == 0 {
        return Ok(1.0);
    }
    Ok(regularized_beta(gamma, green as f64, (trials - green + 1) as f64).clamp(0.0, 1.0))
}

/// `I_x(a, b)` for `a, b > 0`, `x ∈ [0, 1]`.
pub fn regularized_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b));
    if x < (a + 1.0) / (a + b + 2.0) {
        (ln_front.exp() * beta_cf(x, a, b)) / a
    } else {
        1.0 - (ln_front.exp() * beta_cf(1.0 - x, b, a)) / b
    }
}

fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_TOLERANCE {
            break;
        }
    }
    h
}

/// `(N_g − Tγ) / sqrt(Tγ(1−γ))`; zero trials give `z = 0`.
pub fn zscore(trials: u64, green: u64, gamma: f64) -> Result<f64> {
    check(trials, green, gamma)?;
    if trials == 0 {
        return Ok(0.0);
    }
    let t = trials as f64;
    Ok((green as f64 - t * gamma) / (t * gamma * (1.0 - gamma)).sqrt())
}

/// Decision of a verifier at one false-positive level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FprDecision {
    pub fpr: f64,
    pub detected: bool,
}

/// Output of every verifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub trials: u64,
    pub green: u64,
    pub gamma: f64,
    pub z: f64,
    pub p: f64,
    pub detected_at: Vec<FprDecision>,
}

pub const DEFAULT_FPR_LEVELS: [f64; 3] = [0.001, 0.01, 0.05];

impl DetectionReport {
    pub fn from_counts(trials: u64, green: u64, gamma: f64, levels: &[f64]) -> Result<Self> {
        let p = binom_p_right(trials, green, gamma)?;
        let z = zscore(trials, green, gamma)?;
        Ok(Self {
            trials,
            green,
            gamma,
            z,
            p,
            detected_at: levels
                .iter()
                .map(|&fpr| FprDecision { fpr, detected: p < fpr })
                .collect(),
        })
    }

    pub fn green_fraction(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.green as f64 / self.trials as f64
        }
    }

    pub fn detected(&self, fpr: f64) -> bool {
        self.p < fpr
    }
}

/// How a detection threshold is chosen for a given FPR level.
#[derive(Debug, Clone, Copy)]
pub enum Threshold<'a> {
    /// Reject when `p < level`; the p-value is its own calibration.
    Analytic,
    /// Reject when `p` is below the empirical `level` quantile of the negatives.
    Empirical(&'a [f64]),
}

/// Largest threshold `τ` such that at most `⌊level·n⌋` negatives have `p < τ`.
pub fn empirical_threshold(negatives: &[f64], level: f64) -> Result<f64> {
    if negatives.is_empty() {
        return Err(param("empirical threshold needs at least one negative"));
    }
    let mut sorted = negatives.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = (level * sorted.len() as f64).floor() as usize;
    Ok(if k >= sorted.len() { f64::INFINITY } else { sorted[k] })
}

pub fn tpr_at_fpr(positives: &[f64], level: f64, threshold: Threshold<'_>) -> Result<f64> {
    if positives.is_empty() {
        return Err(param("TPR is undefined for an empty set of positives"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(param(format!("FPR level must lie in (0, 1), got {level}")));
    }
    let tau = match threshold {
        Threshold::Analytic => level,
        Threshold::Empirical(neg) => empirical_threshold(neg, level)?,
    };
    let hits = positives.iter().filter(|&&p| p < tau).count();
    Ok(hits as f64 / positives.len() as f64)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub positives: Vec<f64>,
    pub negatives: Vec<f64>,
    pub tpr_at_fpr: Vec<(f64, f64)>,
    pub median_p: f64,
}

impl RocSummary {
    /// Summarizes positive (and optionally negative) p-values. With
    /// negatives present, `empirical` selects quantile thresholds.
    pub fn new(positives: Vec<f64>, negatives: Vec<f64>, levels: &[f64], empirical: bool) -> Result<Self> {
        let mode = if empirical {
            Threshold::Empirical(&negatives)
        } else {
            Threshold::Analytic
        };
        let tpr = levels
            .iter()
            .map(|&l| tpr_at_fpr(&positives, l, mode).map(|r| (l, r)))
            .collect::<Result<Vec<_>>>()?;
        let median_p = median(&positives).unwrap_or(f64::NAN);
        Ok(Self {
            positives,
            negatives,
            tpr_at_fpr: tpr,
            median_p,
        })
    }
}
