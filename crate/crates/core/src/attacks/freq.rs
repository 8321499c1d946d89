//! Fourier-domain forgery by fixed-magnitude, random-phase peaks.
//!
//! Coordinates are centered frequencies: for an `N × M` channel the DC term
//! sits at `(N/2, M/2)` after shifting, and a centered position `(u, v)` is
//! the frequency `(u − N/2, v − M/2)`. Candidate peaks lie on the two
//! diagonals of the right half-spectrum, `(c_y ∓ k·s, c_x + k·s)` for
//! `k = 1, 2, …`, ordered by `k` and then upper before lower. The first `n`
//! in-range candidates receive `A = α·e^{iφ}` with one uniform phase per
//! channel and peak, and the mirrored frequency receives `conj(A)`, so the
//! inverse transform is real. Peaks are added to the existing coefficients
//! unless `overwrite` is set. Requested peaks that fall outside the spectrum
//! are skipped and reported. Because `f_x < M/2`, no peak is its own mirror.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::image::{Image, CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqInjectConfig {
    pub spacing: usize,
    /// `ln α`.
    pub log_magnitude: f64,
    /// Number of peaks; `None` injects every in-range lattice point.
    pub bins: Option<usize>,
    pub seed: u64,
    #[serde(default)]
    pub overwrite: bool,
}

impl FreqInjectConfig {
    pub fn setting_a(seed: u64) -> Self {
        Self {
            spacing: 32,
            log_magnitude: 7.75,
            bins: Some(4),
            seed,
            overwrite: false,
        }
    }

    pub fn setting_b(seed: u64) -> Self {
        Self {
            log_magnitude: 8.0,
            ..Self::setting_a(seed)
        }
    }

    pub fn setting_c(seed: u64) -> Self {
        Self {
            bins: None,
            ..Self::setting_b(seed)
        }
    }

    pub fn magnitude(&self) -> f64 {
        self.log_magnitude.exp()
    }
}

/// Injected frequencies `(f_y, f_x)` and notes on skipped requests.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectOutcome {
    pub image: Image,
    /// Real part of the inverse transform before clamping.
    pub unclamped: Image,
    pub peaks: Vec<(i64, i64)>,
    pub notes: Vec<String>,
    /// `‖Im‖₂ / ‖Re‖₂` of the inverse transform.
    pub imag_residue: f64,
}

/// Centered-coordinate lattice `(f_y, f_x)` in request order and skip notes.
pub fn lattice_points(height: usize, width: usize, spacing: usize, bins: Option<usize>) -> (Vec<(i64, i64)>, Vec<String>) {
    let (cy, cx) = ((height / 2) as i64, (width / 2) as i64);
    let (h, w) = (height as i64, width as i64);
    let s = spacing as i64;
    let in_range = |fy: i64, fx: i64| cy + fy >= 0 && cy + fy < h && cx + fx < w;
    let mut out = Vec::new();
    let mut notes = Vec::new();
    let mut k = 1;
    loop {
        let mut any = false;
        for fy in [-k * s, k * s] {
            let fx = k * s;
            let wanted = bins.is_none_or(|n| out.len() < n);
            if !wanted {
                return (out, notes);
            }
            if !in_range(fy, fx) {
                continue;
            }
            any = true;
            out.push((fy, fx));
        }
        if !any {
            if let Some(n) = bins {
                if out.len() < n {
                    notes.push(format!(
                        "only {} of {n} requested peaks fit a {height}x{width} spectrum at spacing {spacing}",
                        out.len()
                    ));
                }
            }
            return (out, notes);
        }
        k += 1;
    }
}

/// Forward 2-D DFT (unnormalized) of one channel, row-major.
pub fn fft2(plane: &[Complex64], height: usize, width: usize, inverse: bool) -> Vec<Complex64> {
    let mut planner = FftPlanner::new();
    let row = if inverse { planner.plan_fft_inverse(width) } else { planner.plan_fft_forward(width) };
    let col = if inverse { planner.plan_fft_inverse(height) } else { planner.plan_fft_forward(height) };
    let mut data = plane.to_vec();
    for r in data.chunks_mut(width) {
        row.process(r);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            column[y] = data[y * width + x];
        }
        col.process(&mut column);
        for y in 0..height {
            data[y * width + x] = column[y];
        }
    }
    if inverse {
        let n = (height * width) as f64;
        data.iter_mut().for_each(|v| *v /= n);
    }
    data
}

/// Unshifted DFT of channel `c`.
pub fn channel_spectrum(image: &Image, c: usize) -> Vec<Complex64> {
    let (h, w) = image.dims();
    let plane: Vec<Complex64> = (0..h * w)
        .map(|i| Complex64::new(image.data()[i * CHANNELS + c], 0.0))
        .collect();
    fft2(&plane, h, w, false)
}

/// Array index of centered frequency `(f_y, f_x)` in an unshifted spectrum.
pub fn bin_index(height: usize, width: usize, fy: i64, fx: i64) -> usize {
    (fy.rem_euclid(height as i64) as usize) * width + fx.rem_euclid(width as i64) as usize
}

pub fn freq_inject(image: &Image, config: &FreqInjectConfig) -> Result<InjectOutcome> {
    if config.spacing == 0 {
        return Err(param("lattice spacing must be positive"));
    }
    if !config.log_magnitude.is_finite() {
        return Err(param("magnitude must be finite and positive"));
    }
    let (h, w) = image.dims();
    let (peaks, notes) = lattice_points(h, w, config.spacing, config.bins);
    let alpha = config.magnitude();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = vec![0.0; h * w * CHANNELS];
    let (mut im2, mut re2) = (0.0, 0.0);
    for c in 0..CHANNELS {
        let mut spec = channel_spectrum(image, c);
        for &(fy, fx) in &peaks {
            let phi: f64 = rng.random::<f64>() * TAU;
            let a = Complex64::from_polar(alpha, phi);
            let i = bin_index(h, w, fy, fx);
            let j = bin_index(h, w, -fy, -fx);
            if config.overwrite {
                spec[i] = a;
                spec[j] = a.conj();
            } else {
                spec[i] += a;
                spec[j] += a.conj();
            }
        }
        let back = fft2(&spec, h, w, true);
        for (k, v) in back.iter().enumerate() {
            out[k * CHANNELS + c] = v.re;
            im2 += v.im * v.im;
            re2 += v.re * v.re;
        }
    }
    let unclamped = Image::new(h, w, out)?;
    Ok(InjectOutcome {
        image: unclamped.clone().clamped(),
        unclamped,
        peaks,
        notes,
        imag_residue: if re2 > 0.0 { (im2 / re2).sqrt() } else { im2.sqrt() },
    })
}
