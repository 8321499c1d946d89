//! Classical image perturbations used as attack baselines.
//!
//! | kind | strength | effect |
//! |---|---|---|
//! | `gauss-noise` | σ | add i.i.d. `N(0, σ²)` per sample |
//! | `gauss-blur` | σ (pixels) | separable Gaussian, radius `⌈3σ⌉`, edge replication |
//! | `brightness` | b | add `b` |
//! | `contrast` | k | `0.5 + (1 + k)(x − 0.5)` |
//! | `dct-quantize` | q | orthonormal 8×8 block DCT, coefficients rounded to multiples of `q` |
//! | `rotate` | degrees | bilinear rotation about the center, edge replication |
//! | `center-crop-resize` | f ∈ [0, 1) | crop the central `(1 − f)` of each side, resize back |
//! | `hflip` | any > 0 | mirror left–right |
//!
//! Strength 0 is the identity for every kind. Outputs are clamped to `[0, 1]`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::image::{Image, CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbKind {
    GaussNoise,
    GaussBlur,
    Brightness,
    Contrast,
    DctQuantize,
    Rotate,
    CenterCropResize,
    Hflip,
}

impl PerturbKind {
    pub const ALL: [PerturbKind; 8] = [
        PerturbKind::GaussNoise,
        PerturbKind::GaussBlur,
        PerturbKind::Brightness,
        PerturbKind::Contrast,
        PerturbKind::DctQuantize,
        PerturbKind::Rotate,
        PerturbKind::CenterCropResize,
        PerturbKind::Hflip,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PerturbKind::GaussNoise => "gauss-noise",
            PerturbKind::GaussBlur => "gauss-blur",
            PerturbKind::Brightness => "brightness",
            PerturbKind::Contrast => "contrast",
            PerturbKind::DctQuantize => "dct-quantize",
            PerturbKind::Rotate => "rotate",
            PerturbKind::CenterCropResize => "center-crop-resize",
            PerturbKind::Hflip => "hflip",
        }
    }
}

impl fmt::Display for PerturbKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerturbKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| param(format!("unknown perturbation {s:?}")))
    }
}

pub fn perturb(image: &Image, kind: PerturbKind, strength: f64, seed: u64) -> Result<Image> {
    if !strength.is_finite() {
        return Err(param("perturbation strength must be finite"));
    }
    if strength == 0.0 {
        return Ok(image.clone());
    }
    let out = match kind {
        PerturbKind::GaussNoise => {
            if strength < 0.0 {
                return Err(param("noise σ must be nonnegative"));
            }
            let n = Normal::new(0.0, strength).map_err(|e| param(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = image.clone();
            out.data_mut().iter_mut().for_each(|v| *v += n.sample(&mut rng));
            out
        }
        PerturbKind::GaussBlur => {
            if strength < 0.0 {
                return Err(param("blur σ must be nonnegative"));
            }
            gaussian_blur(image, strength)
        }
        PerturbKind::Brightness => {
            let mut out = image.clone();
            out.data_mut().iter_mut().for_each(|v| *v += strength);
            out
        }
        PerturbKind::Contrast => {
            let mut out = image.clone();
            out.data_mut().iter_mut().for_each(|v| *v = 0.5 + (1.0 + strength) * (*v - 0.5));
            out
        }
        PerturbKind::DctQuantize => {
            if strength < 0.0 {
                return Err(param("quantizer step must be nonnegative"));
            }
            dct_quantize(image, strength)
        }
        PerturbKind::Rotate => rotate(image, strength),
        PerturbKind::CenterCropResize => {
            if !(0.0..1.0).contains(&strength) {
                return Err(param("crop fraction must lie in [0, 1)"));
            }
            let (h, w) = image.dims();
            let ch = ((h as f64) * (1.0 - strength)).round().max(1.0) as usize;
            let cw = ((w as f64) * (1.0 - strength)).round().max(1.0) as usize;
            let (y0, x0) = ((h - ch) / 2, (w - cw) / 2);
            Image::from_fn(ch, cw, |y, x, c| image.get(y0 + y, x0 + x, c)).resized(h, w)?
        }
        PerturbKind::Hflip => {
            let w = image.width();
            Image::from_fn(image.height(), w, |y, x, c| image.get(y, w - 1 - x, c))
        }
    };
    Ok(out.clamped())
}

fn gaussian_blur(image: &Image, sigma: f64) -> Image {
    let r = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    let k: Vec<f64> = k.into_iter().map(|v| v / s).collect();
    let (h, w) = image.dims();
    let clampi = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let rows = Image::from_fn(h, w, |y, x, c| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| kv * image.get(y, clampi(x as i64 + i as i64 - r, w), c))
            .sum()
    });
    Image::from_fn(h, w, |y, x, c| {
        k.iter()
            .enumerate()
            .map(|(i, kv)| kv * rows.get(clampi(y as i64 + i as i64 - r, h), x, c))
            .sum()
    })
}

/// Orthonormal DCT-II matrix of size `n`.
fn dct_matrix(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for k in 0..n {
        let a = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        for i in 0..n {
            m[k * n + i] = a * (PI * (i as f64 + 0.5) * k as f64 / n as f64).cos();
        }
    }
    m
}

/// Blocks are 8×8; blocks cut by the image border use their own smaller size.
fn dct_quantize(image: &Image, step: f64) -> Image {
    const B: usize = 8;
    let (h, w) = image.dims();
    let mut out = image.clone();
    for by in (0..h).step_by(B) {
        for bx in (0..w).step_by(B) {
            let (bh, bw) = (B.min(h - by), B.min(w - bx));
            let (my, mx) = (dct_matrix(bh), dct_matrix(bw));
            for c in 0..CHANNELS {
                let block: Vec<f64> = (0..bh * bw).map(|i| image.get(by + i / bw, bx + i % bw, c)).collect();
                // coefficients = My · block · Mxᵀ
                let mut tmp = vec![0.0; bh * bw];
                for u in 0..bh {
                    for x in 0..bw {
                        tmp[u * bw + x] = (0..bh).map(|y| my[u * bh + y] * block[y * bw + x]).sum();
                    }
                }
                let mut coef = vec![0.0; bh * bw];
                for u in 0..bh {
                    for v in 0..bw {
                        let val: f64 = (0..bw).map(|x| tmp[u * bw + x] * mx[v * bw + x]).sum();
                        coef[u * bw + v] = (val / step).round() * step;
                    }
                }
                // block = Myᵀ · coef · Mx
                for u in 0..bh {
                    for x in 0..bw {
                        tmp[u * bw + x] = (0..bw).map(|v| coef[u * bw + v] * mx[v * bw + x]).sum();
                    }
                }
                for y in 0..bh {
                    for x in 0..bw {
                        let v: f64 = (0..bh).map(|u| my[u * bh + y] * tmp[u * bw + x]).sum();
                        out.set(by + y, bx + x, c, v);
                    }
                }
            }
        }
    }
    out
}

fn rotate(image: &Image, degrees: f64) -> Image {
    let (h, w) = image.dims();
    let (s, c) = degrees.to_radians().sin_cos();
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    Image::from_fn(h, w, |y, x, ch| {
        let (dy, dx) = (y as f64 - cy, x as f64 - cx);
        // inverse rotation maps each output pixel back into the source
        let sx = (c * dx + s * dy + cx).clamp(0.0, (w - 1) as f64);
        let sy = (-s * dx + c * dy + cy).clamp(0.0, (h - 1) as f64);
        let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (tx, ty) = (sx - x0 as f64, sy - y0 as f64);
        let top = image.get(y0, x0, ch) * (1.0 - tx) + image.get(y0, x1, ch) * tx;
        let bot = image.get(y1, x0, ch) * (1.0 - tx) + image.get(y1, x1, ch) * tx;
        top * (1.0 - ty) + bot * ty
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;

    fn sample() -> Image {
        Image::from_fn(20, 24, |y, x, c| (0.2 + 0.03 * ((y * 5 + x * 3 + c * 7) % 20) as f64).min(1.0))
    }

    #[test]
    fn zero_strength_is_identity() {
        let img = sample();
        for k in PerturbKind::ALL {
            assert_eq!(perturb(&img, k, 0.0, 3).unwrap(), img, "{k}");
        }
    }

    #[test]
    fn hflip_twice_is_identity() {
        let img = sample();
        let once = perturb(&img, PerturbKind::Hflip, 1.0, 0).unwrap();
        assert_ne!(once, img);
        assert_eq!(perturb(&once, PerturbKind::Hflip, 1.0, 0).unwrap(), img);
    }

    #[test]
    fn noise_psnr_matches_sigma() {
        let img = Image::filled(128, 128, 0.5);
        let noisy = perturb(&img, PerturbKind::GaussNoise, 0.1, 7).unwrap();
        assert!((psnr(&img, &noisy).unwrap() - 20.0).abs() < 0.2);
    }

    #[test]
    fn fine_dct_step_is_near_identity() {
        let img = sample();
        let q = perturb(&img, PerturbKind::DctQuantize, 1e-9, 0).unwrap();
        assert!(q.linf_distance(&img).unwrap() < 1e-8);
        let coarse = perturb(&img, PerturbKind::DctQuantize, 0.5, 0).unwrap();
        assert!(coarse.linf_distance(&img).unwrap() > 1e-3);
    }

    #[test]
    fn names_round_trip() {
        for k in PerturbKind::ALL {
            assert_eq!(k.name().parse::<PerturbKind>().unwrap(), k);
        }
        assert!("jpeg".parse::<PerturbKind>().is_err());
    }
}
