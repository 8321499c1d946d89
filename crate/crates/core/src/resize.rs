//! Channel-wise bilinear resampling of latents.
//!
//! Convention: half-pixel sample centers with the outer grid edges aligned.
//! Output cell `o` of an axis resized from `n` to `m` samples the input at
//! `s = (o + 0.5)·n/m − 0.5`, clamped to `[0, n−1]`, and linearly blends the
//! two neighbouring input cells `⌊s⌋` and `⌊s⌋+1`. Weights are nonnegative
//! and sum to one, so constants are preserved. For an odd integer ratio
//! `n = r·m` every sample position is an integer, so downsampling by an odd
//! ratio is exact point sampling at the cell centers, and downsampling an
//! upsampled grid by the same odd ratio returns the original grid.

use crate::error::{param, Result};
use crate::latent::Latent;

/// Per-output-cell `(i0, i1, t)`: value = `(1−t)·in[i0] + t·in[i1]`.
pub(crate) fn axis_weights(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    let last = (input - 1) as f64;
    (0..output)
        .map(|o| {
            let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Resizes every channel of `latent` to `height × width`. Linear in the input.
pub fn bilinear_resize(latent: &Latent, height: usize, width: usize) -> Result<Latent> {
    if height == 0 || width == 0 {
        return Err(param("resize target must be at least 1x1"));
    }
    let (d, h, w) = latent.shape();
    if h == height && w == width {
        return Ok(latent.clone());
    }
    let ys = axis_weights(h, height);
    let xs = axis_weights(w, width);
    let mut out = Latent::zeros(d, height, width);
    for c in 0..d {
        for (oy, &(y0, y1, ty)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, tx)) in xs.iter().enumerate() {
                let top = latent.get(c, y0, x0) * (1.0 - tx) + latent.get(c, y0, x1) * tx;
                let bot = latent.get(c, y1, x0) * (1.0 - tx) + latent.get(c, y1, x1) * tx;
                out.set(c, oy, ox, top * (1.0 - ty) + bot * ty);
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`bilinear_resize`] from `(h, w)` to `grad`'s shape: scatters
/// `grad` back onto the `h × w` input grid with the same weights.
pub fn bilinear_resize_adjoint(grad: &Latent, height: usize, width: usize) -> Result<Latent> {
    if height == 0 || width == 0 {
        return Err(param("resize source must be at least 1x1"));
    }
    let (d, oh, ow) = grad.shape();
    if oh == height && ow == width {
        return Ok(grad.clone());
    }
    let ys = axis_weights(height, oh);
    let xs = axis_weights(width, ow);
    let mut out = Latent::zeros(d, height, width);
    for c in 0..d {
        for (oy, &(y0, y1, ty)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, tx)) in xs.iter().enumerate() {
                let g = grad.get(c, oy, ox);
                let mut acc = |y: usize, x: usize, wgt: f64| {
                    let i = out.index(c, y, x);
                    out.data_mut()[i] += g * wgt;
                };
                acc(y0, x0, (1.0 - ty) * (1.0 - tx));
                acc(y0, x1, (1.0 - ty) * tx);
                acc(y1, x0, ty * (1.0 - tx));
                acc(y1, x1, ty * tx);
            }
        }
    }
    Ok(out)
}
