//! Deterministic toy VQ autoencoders.
//!
//! Images are cut into non-overlapping `p × p` patches; each patch is one
//! latent cell. A patch is flattened as `(row, column, color)` into a vector
//! of `n = 3p²` samples, and every map below acts on that vector.
//!
//! Both profile kinds share the decoder `x = 0.5 + Dᵀ z` (then clamped to
//! `[0, 1]`), where `D` is `d × n` with orthonormal rows that are also
//! orthogonal to the three per-color constant patches, so flat patches
//! encode to the zero latent. `D` is drawn from seeded Gaussian rows and
//! orthonormalized by two rounds of Gram–Schmidt.
//!
//! * `linear_orthonormal`: `z = D (x − 0.5)`. Encoding is the adjoint of
//!   decoding, so `encode(decode(z)) = z` whenever no sample clamps.
//! * `nonlinear`: each patch is mean-pooled to a `g × g` grid per color
//!   (`g = 2` for even `p`, else 1), centered at 0.5, and sent through
//!   `W2 · tanh(W1 f + b1) + b2` with a hidden width of [`HIDDEN`]. Weights are
//!   Gaussian: `W1 ~ N(0, 4/F)`, `b1 ~ N(0, 0.01)`, `W2 ~ N(0, 0.0225/H)`,
//!   `b2 ~ N(0, 0.0025)`.
//!
//! All weights derive from the profile seed through ChaCha8, so a profile
//! serializes as just `(kind, patch, dim, seed, codebook)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codebook::{sq_dist, Codebook};
use crate::error::{param, shape, Error, Result};
use crate::image::{Image, CHANNELS};
use crate::latent::Latent;
use crate::tokens::TokenMap;

pub const PIXEL_BIAS: f64 = 0.5;
pub const HIDDEN: usize = 16;

const DECODER_STREAM: u64 = 0xD0;
const ENCODER_STREAM: u64 = 0xE0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    LinearOrthonormal,
    Nonlinear,
}

/// Serializable description of a profile; weights are rebuilt from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDoc {
    pub kind: EncoderKind,
    pub patch: usize,
    pub dim: usize,
    pub seed: u64,
    pub codebook: Codebook,
}

#[derive(Debug, Clone)]
struct Mlp {
    pool: usize,
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EncoderProfile {
    doc: ProfileDoc,
    decoder: Vec<f64>,
    mlp: Option<Mlp>,
}

impl PartialEq for EncoderProfile {
    fn eq(&self, other: &Self) -> bool {
        self.doc == other.doc
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn orthonormal_rows(dim: usize, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ DECODER_STREAM.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut basis: Vec<Vec<f64>> = (0..CHANNELS)
        .map(|c| {
            let s = 1.0 / ((n / CHANNELS) as f64).sqrt();
            (0..n).map(|k| if k % CHANNELS == c { s } else { 0.0 }).collect()
        })
        .collect();
    let mut rows = Vec::with_capacity(dim * n);
    while basis.len() < CHANNELS + dim {
        let mut v: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        rows.extend_from_slice(&v);
        basis.push(v);
    }
    rows
}

impl EncoderProfile {
    pub fn new(kind: EncoderKind, patch: usize, dim: usize, seed: u64, codebook: Codebook) -> Result<Self> {
        Self::from_doc(ProfileDoc {
            kind,
            patch,
            dim,
            seed,
            codebook,
        })
    }

    pub fn from_doc(doc: ProfileDoc) -> Result<Self> {
        if doc.patch == 0 || doc.dim == 0 {
            return Err(param("patch and dim must be positive"));
        }
        let n = CHANNELS * doc.patch * doc.patch;
        if doc.dim + CHANNELS > n {
            return Err(param(format!(
                "dim {} too large for {}x{} patches (max {})",
                doc.dim,
                doc.patch,
                doc.patch,
                n - CHANNELS
            )));
        }
        if doc.codebook.dim() != doc.dim {
            return Err(shape(format!(
                "codebook dim {} differs from latent dim {}",
                doc.codebook.dim(),
                doc.dim
            )));
        }
        let decoder = orthonormal_rows(doc.dim, n, doc.seed);
        let mlp = match doc.kind {
            EncoderKind::LinearOrthonormal => None,
            EncoderKind::Nonlinear => Some(build_mlp(doc.patch, doc.dim, doc.seed)),
        };
        Ok(Self { doc, decoder, mlp })
    }

    pub fn doc(&self) -> &ProfileDoc {
        &self.doc
    }

    pub fn kind(&self) -> EncoderKind {
        self.doc.kind
    }

    pub fn patch(&self) -> usize {
        self.doc.patch
    }

    pub fn dim(&self) -> usize {
        self.doc.dim
    }

    pub fn seed(&self) -> u64 {
        self.doc.seed
    }

    pub fn codebook(&self) -> &Codebook {
        &self.doc.codebook
    }

    pub fn patch_len(&self) -> usize {
        CHANNELS * self.doc.patch * self.doc.patch
    }

    /// Row `c` of the decoder matrix.
    pub fn decoder_row(&self, c: usize) -> &[f64] {
        let n = self.patch_len();
        &self.decoder[c * n..(c + 1) * n]
    }

    /// Largest `Σ_c |D[c, k]|` over patch samples `k`: a decoded latent with
    /// `max |z_c| ≤ m` stays clamp-free when `m` times this is at most 0.5.
    pub fn max_pixel_gain(&self) -> f64 {
        (0..self.patch_len())
            .map(|k| (0..self.dim()).map(|c| self.decoder_row(c)[k].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.doc)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_doc(serde_json::from_str(s)?)
    }

    /// Latent grid for an image, or a shape error if `p` does not divide it.
    pub fn latent_dims(&self, image: &Image) -> Result<(usize, usize)> {
        let p = self.doc.patch;
        let (h, w) = image.dims();
        if h % p != 0 || w % p != 0 || h == 0 || w == 0 {
            return Err(shape(format!("image {h}x{w} is not divisible into {p}x{p} patches")));
        }
        Ok((h / p, w / p))
    }

    pub fn image_dims(&self, latent_h: usize, latent_w: usize) -> (usize, usize) {
        (latent_h * self.doc.patch, latent_w * self.doc.patch)
    }

    fn patch_vector(&self, image: &Image, cy: usize, cx: usize, out: &mut [f64]) {
        let p = self.doc.patch;
        let mut k = 0;
        for py in 0..p {
            let base = image.index(cy * p + py, cx * p, 0);
            let row = &image.data()[base..base + p * CHANNELS];
            for &v in row {
                out[k] = v - PIXEL_BIAS;
                k += 1;
            }
        }
    }

    pub fn encode(&self, image: &Image) -> Result<Latent> {
        let (lh, lw) = self.latent_dims(image)?;
        let d = self.dim();
        let n = self.patch_len();
        let mut out = Latent::zeros(d, lh, lw);
        let mut buf = vec![0.0; n];
        for cy in 0..lh {
            for cx in 0..lw {
                self.patch_vector(image, cy, cx, &mut buf);
                let z = match &self.mlp {
                    None => (0..d)
                        .map(|c| self.decoder_row(c).iter().zip(&buf).map(|(a, b)| a * b).sum())
                        .collect::<Vec<f64>>(),
                    Some(mlp) => mlp.forward(&buf, self.doc.patch, d).0,
                };
                out.set_cell(cy, cx, &z);
            }
        }
        Ok(out)
    }

    /// Decoded image before clamping (affine in the latent).
    pub fn decode_unclamped(&self, latent: &Latent) -> Result<Image> {
        if latent.dim() != self.dim() {
            return Err(shape(format!("latent dim {} vs profile dim {}", latent.dim(), self.dim())));
        }
        let p = self.doc.patch;
        let (lh, lw) = (latent.height(), latent.width());
        let (h, w) = self.image_dims(lh, lw);
        let n = self.patch_len();
        let mut data = vec![PIXEL_BIAS; h * w * CHANNELS];
        let mut patch = vec![0.0; n];
        for cy in 0..lh {
            for cx in 0..lw {
                patch.fill(0.0);
                for c in 0..self.dim() {
                    let zc = latent.get(c, cy, cx);
                    if zc != 0.0 {
                        patch.iter_mut().zip(self.decoder_row(c)).for_each(|(a, r)| *a += zc * r);
                    }
                }
                let span = p * CHANNELS;
                for py in 0..p {
                    let base = ((cy * p + py) * w + cx * p) * CHANNELS;
                    for (dst, v) in data[base..base + span].iter_mut().zip(&patch[py * span..(py + 1) * span]) {
                        *dst += v;
                    }
                }
            }
        }
        Image::new(h, w, data)
    }

    pub fn decode(&self, latent: &Latent) -> Result<Image> {
        Ok(self.decode_unclamped(latent)?.clamped())
    }

    /// Vector–Jacobian product of `encode` at `image` with `grad` on the latent.
    pub fn encode_pullback(&self, image: &Image, grad: &Latent) -> Result<Image> {
        let (lh, lw) = self.latent_dims(image)?;
        if grad.shape() != (self.dim(), lh, lw) {
            return Err(shape(format!(
                "upstream gradient {:?} does not match latent {:?}",
                grad.shape(),
                (self.dim(), lh, lw)
            )));
        }
        match &self.mlp {
            None => {
                let mut g = self.decode_unclamped(grad)?;
                g.data_mut().iter_mut().for_each(|v| *v -= PIXEL_BIAS);
                Ok(g)
            }
            Some(mlp) => {
                let p = self.doc.patch;
                let (h, w) = image.dims();
                let mut out = vec![0.0; h * w * CHANNELS];
                let mut buf = vec![0.0; self.patch_len()];
                for cy in 0..lh {
                    for cx in 0..lw {
                        let g = grad.cell(cy, cx);
                        if g.iter().all(|&v| v == 0.0) {
                            continue;
                        }
                        self.patch_vector(image, cy, cx, &mut buf);
                        let pix = mlp.backward(&buf, p, self.dim(), &g);
                        for py in 0..p {
                            let base = ((cy * p + py) * w + cx * p) * CHANNELS;
                            out[base..base + p * CHANNELS]
                                .copy_from_slice(&pix[py * p * CHANNELS..(py + 1) * p * CHANNELS]);
                        }
                    }
                }
                Image::new(h, w, out)
            }
        }
    }

    /// Seeded profile of the same kind and shape sharing this codebook.
    pub fn reseeded(&self, seed: u64) -> Result<Self> {
        Self::from_doc(ProfileDoc {
            seed,
            ..self.doc.clone()
        })
    }
}

fn build_mlp(patch: usize, dim: usize, seed: u64) -> Mlp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ENCODER_STREAM.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let pool = if patch % 2 == 0 { 2 } else { 1 };
    let f = CHANNELS * pool * pool;
    let s1 = 2.0 / (f as f64).sqrt();
    let w1 = (0..HIDDEN * f).map(|_| s1 * gaussian(&mut rng)).collect();
    let b1 = (0..HIDDEN).map(|_| 0.1 * gaussian(&mut rng)).collect();
    let s2 = 0.15 / (HIDDEN as f64).sqrt();
    let w2 = (0..dim * HIDDEN).map(|_| s2 * gaussian(&mut rng)).collect();
    let b2 = (0..dim).map(|_| 0.05 * gaussian(&mut rng)).collect();
    Mlp { pool, w1, b1, w2, b2 }
}

impl Mlp {
    /// Pooled features: `(gy, gx, color)` order, each the mean of a sub-block.
    fn features(&self, centered: &[f64], patch: usize) -> Vec<f64> {
        let g = self.pool;
        let sub = patch / g;
        let mut f = vec![0.0; CHANNELS * g * g];
        let inv = 1.0 / (sub * sub) as f64;
        for py in 0..patch {
            for px in 0..patch {
                for c in 0..CHANNELS {
                    let fi = ((py / sub) * g + px / sub) * CHANNELS + c;
                    f[fi] += centered[(py * patch + px) * CHANNELS + c] * inv;
                }
            }
        }
        f
    }

    fn forward(&self, centered: &[f64], patch: usize, dim: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let f = self.features(centered, patch);
        let nf = f.len();
        let hidden: Vec<f64> = (0..HIDDEN)
            .map(|j| {
                let a: f64 = self.b1[j] + (0..nf).map(|i| self.w1[j * nf + i] * f[i]).sum::<f64>();
                a.tanh()
            })
            .collect();
        let z = (0..dim)
            .map(|c| self.b2[c] + (0..HIDDEN).map(|j| self.w2[c * HIDDEN + j] * hidden[j]).sum::<f64>())
            .collect();
        (z, hidden, f)
    }

    fn backward(&self, centered: &[f64], patch: usize, dim: usize, grad: &[f64]) -> Vec<f64> {
        let (_, hidden, f) = self.forward(centered, patch, dim);
        let nf = f.len();
        let dpre: Vec<f64> = (0..HIDDEN)
            .map(|j| {
                let dh: f64 = (0..dim).map(|c| self.w2[c * HIDDEN + j] * grad[c]).sum();
                dh * (1.0 - hidden[j] * hidden[j])
            })
            .collect();
        let df: Vec<f64> = (0..nf)
            .map(|i| (0..HIDDEN).map(|j| self.w1[j * nf + i] * dpre[j]).sum())
            .collect();
        let g = self.pool;
        let sub = patch / g;
        let inv = 1.0 / (sub * sub) as f64;
        let mut out = vec![0.0; centered.len()];
        for py in 0..patch {
            for px in 0..patch {
                for c in 0..CHANNELS {
                    let fi = ((py / sub) * g + px / sub) * CHANNELS + c;
                    out[(py * patch + px) * CHANNELS + c] = df[fi] * inv;
                }
            }
        }
        out
    }
}

/// Tokens plus, per cell, every codebook index sorted by distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantization {
    pub tokens: TokenMap,
    ranking: Vec<u32>,
}

impl Quantization {
    /// Index of the `k`-th nearest codebook vector (1-based) at raster cell `cell`.
    pub fn ranked(&self, cell: usize, k: usize) -> u32 {
        let v = self.tokens.vocab_size();
        self.ranking[cell * v + k - 1]
    }

    pub fn cell_ranking(&self, cell: usize) -> &[u32] {
        let v = self.tokens.vocab_size();
        &self.ranking[cell * v..(cell + 1) * v]
    }
}

fn check_dims(latent: &Latent, codebook: &Codebook) -> Result<()> {
    if latent.dim() != codebook.dim() {
        return Err(shape(format!(
            "latent dim {} differs from codebook dim {}",
            latent.dim(),
            codebook.dim()
        )));
    }
    Ok(())
}

/// Nearest codebook index per cell (Euclidean, ties to the lower index).
pub fn nearest_tokens(latent: &Latent, codebook: &Codebook) -> Result<TokenMap> {
    check_dims(latent, codebook)?;
    let (h, w) = (latent.height(), latent.width());
    let idx = (0..h * w)
        .map(|i| codebook.nearest(&latent.cell(i / w, i % w)) as u32)
        .collect();
    TokenMap::new(h, w, codebook.size(), idx)
}

/// Nearest tokens together with the full per-cell distance ranking.
pub fn quantize(latent: &Latent, codebook: &Codebook) -> Result<Quantization> {
    check_dims(latent, codebook)?;
    let (h, w) = (latent.height(), latent.width());
    let mut ranking = Vec::with_capacity(h * w * codebook.size());
    let mut idx = Vec::with_capacity(h * w);
    for i in 0..h * w {
        let r = codebook.ranking(&latent.cell(i / w, i % w));
        idx.push(r[0]);
        ranking.extend(r);
    }
    Ok(Quantization {
        tokens: TokenMap::new(h, w, codebook.size(), idx)?,
        ranking,
    })
}

pub fn lookup(tokens: &TokenMap, codebook: &Codebook) -> Result<Latent> {
    if tokens.vocab_size() > codebook.size() {
        if let Some(&bad) = tokens.indices().iter().find(|&&t| t as usize >= codebook.size()) {
            return Err(Error::TokenRange {
                index: bad as usize,
                vocab: codebook.size(),
            });
        }
    }
    let (h, w) = (tokens.height(), tokens.width());
    let mut out = Latent::zeros(codebook.dim(), h, w);
    for (i, &t) in tokens.indices().iter().enumerate() {
        out.set_cell(i / w, i % w, codebook.vector(t as usize));
    }
    Ok(out)
}

/// Attacker's access to the verifier's encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoxSetting {
    #[default]
    White,
    Grey,
    Black,
}

impl BoxSetting {
    /// White: identical profile. Grey: same kind, patch and dim with a
    /// different seed. Black: anything else.
    pub fn classify(attacker: &EncoderProfile, verifier: &EncoderProfile) -> Self {
        if attacker == verifier {
            BoxSetting::White
        } else if attacker.kind() == verifier.kind()
            && attacker.patch() == verifier.patch()
            && attacker.dim() == verifier.dim()
            && attacker.seed() != verifier.seed()
        {
            BoxSetting::Grey
        } else {
            BoxSetting::Black
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BoxSetting::White => "white",
            BoxSetting::Grey => "grey",
            BoxSetting::Black => "black",
        }
    }
}

/// Squared distance from each cell of `latent` to its assigned codebook vector.
pub fn quantization_error(latent: &Latent, tokens: &TokenMap, codebook: &Codebook) -> Result<f64> {
    check_dims(latent, codebook)?;
    let w = latent.width();
    Ok(tokens
        .indices()
        .iter()
        .enumerate()
        .map(|(i, &t)| sq_dist(&latent.cell(i / w, i % w), codebook.vector(t as usize)))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::CodebookSpec;

    fn profile(kind: EncoderKind, seed: u64) -> EncoderProfile {
        let cb = CodebookSpec::new(64, 4, 5).build().unwrap();
        EncoderProfile::new(kind, 4, 4, seed, cb).unwrap()
    }

    fn test_image(h: usize, w: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(h, w, |_, _, _| rng.random_range(0.1..0.9))
    }

    #[test]
    fn decoder_rows_orthonormal_and_zero_mean_per_color() {
        let p = profile(EncoderKind::LinearOrthonormal, 1);
        let n = p.patch_len();
        for a in 0..4 {
            for b in 0..4 {
                let d: f64 = p.decoder_row(a).iter().zip(p.decoder_row(b)).map(|(x, y)| x * y).sum();
                assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
            for c in 0..CHANNELS {
                let s: f64 = (0..n).filter(|k| k % CHANNELS == c).map(|k| p.decoder_row(a)[k]).sum();
                assert!(s.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_contracts() {
        let p = profile(EncoderKind::LinearOrthonormal, 1);
        assert!(p.encode(&Image::filled(10, 8, 0.5)).is_err());
        let z = Latent::zeros(4, 3, 5);
        let img = p.decode(&z).unwrap();
        assert_eq!(img.dims(), (12, 20));
        assert!(img.data().iter().all(|&v| v == PIXEL_BIAS));
        assert!(p.decode(&Latent::zeros(3, 1, 1)).is_err());
    }

    #[test]
    fn black_image_maps_to_bias_response() {
        // rows are orthogonal to flat color patches, so any flat image encodes to zero
        let p = profile(EncoderKind::LinearOrthonormal, 1);
        let z = p.encode(&Image::filled(8, 8, 0.0)).unwrap();
        assert!(z.data().iter().all(|v| v.abs() < 1e-12));
        let q = profile(EncoderKind::Nonlinear, 1);
        let zq = q.encode(&Image::filled(8, 8, 0.0)).unwrap();
        let mlp = q.mlp.as_ref().unwrap();
        let (expected, ..) = mlp.forward(&vec![-PIXEL_BIAS; q.patch_len()], 4, 4);
        for y in 0..2 {
            for x in 0..2 {
                assert_eq!(zq.cell(y, x), expected);
            }
        }
    }

    #[test]
    fn different_seeds_give_different_latents() {
        let img = test_image(8, 8, 3);
        for kind in [EncoderKind::LinearOrthonormal, EncoderKind::Nonlinear] {
            let a = profile(kind, 1).encode(&img).unwrap();
            let b = profile(kind, 2).encode(&img).unwrap();
            assert_ne!(a, b);
        }
    }

    #[test]
    fn linear_encode_inverts_decode() {
        let p = profile(EncoderKind::LinearOrthonormal, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = Latent::new(4, 3, 3, (0..36).map(|_| rng.random_range(-0.2..0.2)).collect()).unwrap();
        let back = p.encode(&p.decode_unclamped(&z).unwrap()).unwrap();
        for (a, b) in back.data().iter().zip(z.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn quantize_small_cases() {
        let cb = Codebook::new(1, vec![0.0, 1.0]).unwrap();
        let z = Latent::new(1, 1, 1, vec![0.4]).unwrap();
        let q = quantize(&z, &cb).unwrap();
        assert_eq!(q.tokens.indices(), &[0]);
        assert_eq!(q.cell_ranking(0), &[0, 1]);
        assert_eq!(q.ranked(0, 2), 1);
        let cb = build_cb();
        let t = TokenMap::new(1, 1, cb.size(), vec![9]).unwrap();
        assert_eq!(lookup(&t, &cb).unwrap().data(), cb.vector(9));
    }

    fn build_cb() -> Codebook {
        CodebookSpec::new(16, 4, 1).build().unwrap()
    }

    #[test]
    fn lookup_rejects_out_of_range() {
        let cb = Codebook::new(1, vec![0.0, 1.0]).unwrap();
        let t = TokenMap::new(1, 2, 5, vec![0, 4]).unwrap();
        assert!(matches!(lookup(&t, &cb), Err(Error::TokenRange { .. })));
    }

    #[test]
    fn json_round_trip_rebuilds_weights() {
        let p = profile(EncoderKind::Nonlinear, 11);
        let q = EncoderProfile::from_json(&p.to_json().unwrap()).unwrap();
        let img = test_image(8, 4, 2);
        assert_eq!(p.encode(&img).unwrap(), q.encode(&img).unwrap());
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        for kind in [EncoderKind::LinearOrthonormal, EncoderKind::Nonlinear] {
            let p = profile(kind, 3);
            let img = test_image(8, 8, 5);
            let g = p.encode_pullback(&img, &Latent::zeros(4, 2, 2)).unwrap();
            assert!(g.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn linear_pullback_is_input_independent() {
        let p = profile(EncoderKind::LinearOrthonormal, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = Latent::new(4, 2, 2, (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let a = p.encode_pullback(&test_image(8, 8, 1), &g).unwrap();
        let b = p.encode_pullback(&test_image(8, 8, 2), &g).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn box_settings() {
        let v = profile(EncoderKind::LinearOrthonormal, 1);
        assert_eq!(BoxSetting::classify(&v, &v.clone()), BoxSetting::White);
        assert_eq!(BoxSetting::classify(&v.reseeded(2).unwrap(), &v), BoxSetting::Grey);
        assert_eq!(BoxSetting::classify(&profile(EncoderKind::Nonlinear, 1), &v), BoxSetting::Black);
    }
}
