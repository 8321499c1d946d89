//! Image quality metrics.
//!
//! PSNR uses peak 1.0 and reports identical images as [`PSNR_CAP`] dB.
//! SSIM follows Wang et al. (2004): an 11×11 Gaussian window with σ = 1.5,
//! `C1 = (0.01)^2`, `C2 = (0.03)^2` for unit dynamic range, evaluated per
//! channel over all fully contained window positions and averaged. Images
//! smaller than the window use the largest window that fits.

use crate::error::Result;
use crate::image::{Image, CHANNELS};

pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    let n = a.data().len() as f64;
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m <= 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP))
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let k: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - c;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Valid-mode separable filtering of a single-channel plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let ow = w - n + 1;
    let oh = h - n + 1;
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.check_same_shape(b)?;
    let (h, w) = a.dims();
    let mut size = SSIM_WINDOW.min(h).min(w);
    if size % 2 == 0 {
        size -= 1;
    }
    let kernel = gaussian_kernel(size.max(1), SSIM_SIGMA);
    let mut total = 0.0;
    for c in 0..CHANNELS {
        let pa: Vec<f64> = (0..h * w).map(|i| a.data()[i * CHANNELS + c]).collect();
        let pb: Vec<f64> = (0..h * w).map(|i| b.data()[i * CHANNELS + c]).collect();
        let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let (mu_a, oh, ow) = filter_valid(&pa, h, w, &kernel);
        let (mu_b, ..) = filter_valid(&pb, h, w, &kernel);
        let (s_aa, ..) = filter_valid(&aa, h, w, &kernel);
        let (s_bb, ..) = filter_valid(&bb, h, w, &kernel);
        let (s_ab, ..) = filter_valid(&ab, h, w, &kernel);
        let mut acc = 0.0;
        for i in 0..oh * ow {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = s_aa[i] - ma * ma;
            let vb = s_bb[i] - mb * mb;
            let cov = s_ab[i] - ma * mb;
            acc += ((2.0 * ma * mb + C1) * (2.0 * cov + C2)) / ((ma * ma + mb * mb + C1) * (va + vb + C2));
        }
        total += acc / (oh * ow) as f64;
    }
    Ok(total / CHANNELS as f64)
}
