//! White-box bit-flipping removal against the multi-scale bit watermark.
//!
//! Each step re-encodes the current image, rebuilds the residual pyramid and
//! stops as soon as the detector's p-value exceeds the stop level. Otherwise
//! it collects the centres of every `010` / `101` trigram in the targeted
//! scales and descends `Σ |ẽ_i[j] + sign(ẽ_i[j])·μ|`, which drives each
//! targeted residual through zero to the opposite side of the margin `μ`.
//! The sign factor is held constant, so the gradient with respect to `ẽ_i[j]`
//! is `sign(ẽ_i[j])`; it reaches the pixels through the adjoint resize and the
//! encoder pullback. Steps are plain gradient steps of size `α`, followed by
//! projection onto `‖x' − x‖∞ ≤ ε` and `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::attacks::budget::{project, Trace, TraceRow};
use crate::bitmark::{count_green, flip_loss_gradient, residual_decompose, BitmarkReport, GreenNGramSet, ResidualPyramid, ScaleSchedule};
use crate::error::{param, Result};
use crate::image::Image;
use crate::metrics::psnr;
use crate::vae::EncoderProfile;

/// Centres of `010` and `101` trigrams (0-based positions within one scale).
pub fn flip_targets_in(bits: &[bool]) -> Vec<usize> {
    if bits.len() < 3 {
        return Vec::new();
    }
    (1..bits.len() - 1)
        .filter(|&j| bits[j - 1] == bits[j + 1] && bits[j] != bits[j - 1])
        .collect()
}

/// `(scale, position)` targets over the selected scales (all when `scales` is empty).
pub fn find_flip_targets(pyramid: &ResidualPyramid, scales: &[usize]) -> Vec<(usize, usize)> {
    pyramid
        .scales
        .iter()
        .enumerate()
        .filter(|(i, _)| scales.is_empty() || scales.contains(i))
        .flat_map(|(i, s)| flip_targets_in(&s.bits).into_iter().map(move |j| (i, j)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BitOptConfig {
    /// Margin `μ` past zero that each targeted residual is pushed to.
    pub margin: f64,
    /// ℓ∞ budget `ε`.
    pub epsilon: f64,
    pub alpha: f64,
    pub steps: usize,
    /// Scale indices (0-based) whose bits are targeted; empty means all.
    pub target_scales: Vec<usize>,
    /// Detection p-value above which the attack stops.
    pub stop_p: f64,
}

impl Default for BitOptConfig {
    fn default() -> Self {
        Self {
            margin: 0.01,
            epsilon: 8.0 / 255.0,
            alpha: 5e-4,
            steps: 100,
            target_scales: Vec::new(),
            stop_p: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BitOptOutcome {
    pub image: Image,
    pub trace: Trace,
    pub steps_taken: usize,
    pub report: BitmarkReport,
    pub succeeded: bool,
}

fn report_of(pyr: &ResidualPyramid, green: &GreenNGramSet) -> Result<BitmarkReport> {
    BitmarkReport::from_counts(pyr.scales.iter().map(|s| count_green(&s.bits, green)).collect(), green)
}

pub fn bitopt_removal(
    image: &Image,
    profile: &EncoderProfile,
    schedule: &ScaleSchedule,
    green: &GreenNGramSet,
    config: &BitOptConfig,
) -> Result<BitOptOutcome> {
    if !(config.epsilon >= 0.0 && config.alpha > 0.0 && config.margin >= 0.0) {
        return Err(param("BitOpt needs ε ≥ 0, α > 0 and μ ≥ 0"));
    }
    if let Some(&bad) = config.target_scales.iter().find(|&&i| i >= schedule.len()) {
        return Err(param(format!("target scale {bad} beyond a {}-scale schedule", schedule.len())));
    }
    let mut trace = Trace::default();
    let mut x = image.clone();
    project(image, &mut x, config.epsilon);
    trace.check(image, &x, config.epsilon);
    let mut step = 0;
    loop {
        let pyr = residual_decompose(&profile.encode(&x)?, schedule)?;
        let report = report_of(&pyr, green)?;
        let targets = find_flip_targets(&pyr, &config.target_scales);
        let (loss, grad_z) = flip_loss_gradient(&pyr, &targets, config.margin)?;
        trace.rows.push(TraceRow {
            step,
            loss,
            z: Some(report.report.z),
            p: Some(report.report.p),
            psnr: psnr(image, &x)?,
            linf: image.linf_distance(&x)?,
        });
        let succeeded = report.report.p > config.stop_p;
        if succeeded || step == config.steps || targets.is_empty() {
            return Ok(BitOptOutcome {
                image: x,
                trace,
                steps_taken: step,
                report,
                succeeded,
            });
        }
        let grad_x = profile.encode_pullback(&x, &grad_z)?;
        for (v, g) in x.data_mut().iter_mut().zip(grad_x.data()) {
            *v -= config.alpha * g;
        }
        project(image, &mut x, config.epsilon);
        trace.check(image, &x, config.epsilon);
        step += 1;
    }
}

/// The BitOpt loss as a function of the image, for gradient checks.
pub fn bitopt_loss(
    image: &Image,
    profile: &EncoderProfile,
    schedule: &ScaleSchedule,
    targets: &[(usize, usize)],
    margin: f64,
    frozen: &ResidualPyramid,
) -> Result<f64> {
    // quantized residuals stay those of `frozen`; only ẽ is recomputed
    let z = profile.encode(image)?;
    let (h, w) = (z.height(), z.width());
    let mut r = z;
    let mut loss = 0.0;
    let mut per_scale = Vec::with_capacity(frozen.scales.len());
    for (s, &(hi, wi)) in frozen.scales.iter().zip(schedule.sizes()) {
        let e = crate::resize::bilinear_resize(&r, hi, wi)?;
        r.sub_assign(&crate::resize::bilinear_resize(&s.quantized, h, w)?)?;
        per_scale.push(e);
    }
    for &(i, j) in targets {
        let v = per_scale[i].data()[j];
        let frozen_sign = if frozen.scales[i].unquantized.data()[j] > 0.0 { 1.0 } else { -1.0 };
        loss += (v + frozen_sign * margin).abs();
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(s: &str) -> Vec<bool> {
        s.chars().map(|c| c == '1').collect()
    }

    #[test]
    fn trigram_targets() {
        assert_eq!(flip_targets_in(&bits("010")), vec![1]);
        assert!(flip_targets_in(&bits("0000")).is_empty());
        assert_eq!(flip_targets_in(&bits("01010")), vec![1, 2, 3]);
        assert!(flip_targets_in(&bits("01")).is_empty());
    }
}
