//! Seeded synthetic "authentic" images.
//!
//! A cover is a per-channel base level in `[0.35, 0.65]`, a linear gradient
//! of at most ±0.05 across the frame, three low-frequency plane waves (at
//! most four cycles across the frame, amplitude up to 0.06 each) and
//! optional i.i.d. Gaussian texture. Without texture the content is smooth,
//! so every patch is nearly flat and its latent is small.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::image::{Image, CHANNELS};

pub fn synthetic_cover(height: usize, width: usize, texture: f64, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(CHANNELS);
    for _ in 0..CHANNELS {
        let base = rng.random_range(0.35..0.65);
        let gy = rng.random_range(-0.05..0.05);
        let gx = rng.random_range(-0.05..0.05);
        let waves: Vec<(f64, f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.random_range(0.0..0.06),
                    rng.random_range(-4.0..4.0),
                    rng.random_range(-4.0..4.0),
                    rng.random_range(0.0..TAU),
                )
            })
            .collect();
        layers.push((base, gy, gx, waves));
    }
    let noise = Normal::new(0.0, texture.max(0.0)).expect("finite σ");
    let (hf, wf) = (height as f64, width as f64);
    Image::from_fn(height, width, |y, x, c| {
        let (base, gy, gx, waves) = &layers[c];
        let (u, v) = (y as f64 / hf, x as f64 / wf);
        let mut val = base + gy * (2.0 * u - 1.0) + gx * (2.0 * v - 1.0);
        for (a, fy, fx, ph) in waves {
            val += a * (TAU * (fy * u + fx * v) + ph).sin();
        }
        if texture > 0.0 {
            val += noise.sample(&mut rng);
        }
        val.clamp(0.0, 1.0)
    })
}
