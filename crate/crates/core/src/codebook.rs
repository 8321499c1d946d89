//! Codebooks: `|V|` distinct vectors of dimension `d`.
//!
//! Seeded construction draws candidates uniformly from the cube `[-r, r]^d`
//! and rejects any candidate closer than a floor to an accepted vector.
//! The floor for the dispersed layout is `0.3 · 2r / |V|^{1/d}`, i.e. 30% of
//! the side of the cube share each vector would get on a regular grid. Each
//! vector gets [`RETRY_BUDGET`] attempts before construction fails.
//!
//! The twinned layout places `|V|/2` centers the same way (floor computed
//! for `|V|/2` points) and splits each into two vectors `center ± (g/2)·u`
//! along a random unit direction `u`, with gap `g` = a quarter of the center
//! floor. Every vector's unique nearest neighbour is then its twin. An odd
//! `|V|` leaves one untwinned center.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param, shape, Error, Result};

pub const RETRY_BUDGET: usize = 2_000;
pub const DEFAULT_RADIUS: f64 = 0.15;
const FLOOR_FRACTION: f64 = 0.3;
const TWIN_GAP_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CodebookRepr", into = "CodebookRepr")]
pub struct Codebook {
    dim: usize,
    vectors: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CodebookRepr {
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl TryFrom<CodebookRepr> for Codebook {
    type Error = Error;

    fn try_from(r: CodebookRepr) -> Result<Self> {
        if r.vectors.iter().any(|v| v.len() != r.dim) {
            return Err(shape("codebook vector length differs from dim"));
        }
        Codebook::new(r.dim, r.vectors.concat())
    }
}

impl From<Codebook> for CodebookRepr {
    fn from(c: Codebook) -> Self {
        CodebookRepr {
            dim: c.dim,
            vectors: c.vectors.chunks(c.dim).map(<[f64]>::to_vec).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CodebookLayout {
    #[default]
    Dispersed,
    Twinned,
}

/// Recipe for a seeded codebook.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CodebookSpec {
    pub size: usize,
    pub dim: usize,
    pub seed: u64,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default)]
    pub layout: CodebookLayout,
}

fn default_radius() -> f64 {
    DEFAULT_RADIUS
}

impl CodebookSpec {
    pub fn new(size: usize, dim: usize, seed: u64) -> Self {
        Self {
            size,
            dim,
            seed,
            radius: DEFAULT_RADIUS,
            layout: CodebookLayout::Dispersed,
        }
    }

    pub fn twinned(mut self) -> Self {
        self.layout = CodebookLayout::Twinned;
        self
    }

    pub fn with_radius(mut self, radius: f64) -> Self {
        self.radius = radius;
        self
    }

    /// Guaranteed minimum pairwise distance of the built codebook.
    pub fn floor(&self) -> f64 {
        match self.layout {
            CodebookLayout::Dispersed => dispersed_floor(self.size, self.dim, self.radius),
            CodebookLayout::Twinned => {
                TWIN_GAP_FRACTION * dispersed_floor(self.size.div_ceil(2), self.dim, self.radius)
            }
        }
    }

    pub fn build(&self) -> Result<Codebook> {
        if self.size < 2 {
            return Err(param("codebook needs at least two vectors"));
        }
        if self.dim == 0 {
            return Err(param("codebook dimension must be positive"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(param("codebook radius must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match self.layout {
            CodebookLayout::Dispersed => {
                let floor = dispersed_floor(self.size, self.dim, self.radius);
                let v = scatter(&mut rng, self.size, self.dim, self.radius, floor)?;
                Codebook::new(self.dim, v)
            }
            CodebookLayout::Twinned => {
                let centers_n = self.size.div_ceil(2);
                let floor = dispersed_floor(centers_n, self.dim, self.radius);
                let centers = scatter(&mut rng, centers_n, self.dim, self.radius, floor)?;
                let half_gap = 0.5 * TWIN_GAP_FRACTION * floor;
                let mut out = Vec::with_capacity(self.size * self.dim);
                for (i, c) in centers.chunks(self.dim).enumerate() {
                    if 2 * i + 1 == self.size {
                        out.extend_from_slice(c);
                        break;
                    }
                    let u = unit_vector(&mut rng, self.dim);
                    out.extend(c.iter().zip(&u).map(|(a, b)| a + half_gap * b));
                    out.extend(c.iter().zip(&u).map(|(a, b)| a - half_gap * b));
                }
                Codebook::new(self.dim, out)
            }
        }
    }
}

fn dispersed_floor(size: usize, dim: usize, radius: f64) -> f64 {
    FLOOR_FRACTION * 2.0 * radius / (size as f64).powf(1.0 / dim as f64)
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn scatter(rng: &mut ChaCha8Rng, n: usize, dim: usize, radius: f64, floor: f64) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = Vec::with_capacity(n * dim);
    let floor2 = floor * floor;
    for k in 0..n {
        let mut placed = false;
        for _ in 0..RETRY_BUDGET {
            let cand: Vec<f64> = (0..dim).map(|_| rng.random_range(-radius..=radius)).collect();
            let ok = out.chunks(dim).all(|v| sq_dist(v, &cand) >= floor2);
            if ok {
                out.extend(cand);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Construction(format!(
                "could not place vector {k} of {n} at distance floor {floor:.4} within {RETRY_BUDGET} attempts"
            )));
        }
    }
    Ok(out)
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Seeded codebook in the dispersed layout with the default radius.
pub fn build_codebook(seed: u64, size: usize, dim: usize) -> Result<Codebook> {
    CodebookSpec::new(size, dim, seed).build()
}

impl Codebook {
    pub fn new(dim: usize, vectors: Vec<f64>) -> Result<Self> {
        if dim == 0 || vectors.len() % dim != 0 {
            return Err(shape("codebook storage is not a whole number of vectors"));
        }
        if vectors.len() / dim < 2 {
            return Err(param("codebook needs at least two vectors"));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(param("codebook values must be finite"));
        }
        Ok(Self { dim, vectors })
    }

    pub fn size(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.dim..(k + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.vectors.chunks(self.dim)
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        let n = self.size();
        let mut best = f64::INFINITY;
        for i in 0..n {
            for j in i + 1..n {
                best = best.min(sq_dist(self.vector(i), self.vector(j)));
            }
        }
        best.sqrt()
    }

    /// Index of the nearest vector to `v`; ties go to the lower index.
    pub fn nearest(&self, v: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, c) in self.iter().enumerate() {
            let d = sq_dist(c, v);
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }

    /// All indices sorted by distance to `v` (stable, so ties keep index order).
    pub fn ranking(&self, v: &[f64]) -> Vec<u32> {
        let d: Vec<f64> = self.iter().map(|c| sq_dist(c, v)).collect();
        let mut idx: Vec<u32> = (0..self.size() as u32).collect();
        idx.sort_by(|&a, &b| d[a as usize].total_cmp(&d[b as usize]));
        idx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_codebook() {
        assert_eq!(build_codebook(9, 64, 4).unwrap(), build_codebook(9, 64, 4).unwrap());
        assert_ne!(build_codebook(9, 64, 4).unwrap(), build_codebook(10, 64, 4).unwrap());
    }

    #[test]
    fn two_scalars_are_distinct() {
        let c = build_codebook(0, 2, 1).unwrap();
        assert_eq!(c.size(), 2);
        assert_ne!(c.vector(0)[0], c.vector(1)[0]);
    }

    #[test]
    fn floor_holds_for_many_seeds() {
        for seed in 0..10 {
            let spec = CodebookSpec::new(256, 8, seed);
            let c = spec.build().unwrap();
            assert!(c.min_pairwise_distance() >= spec.floor());
        }
    }

    #[test]
    fn impossible_floor_is_a_construction_error() {
        // at most 5 points fit on [-1, 1] with spacing 0.5
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(scatter(&mut rng, 10, 1, 1.0, 0.5), Err(Error::Construction(_))));
    }

    #[test]
    fn twins_are_mutual_nearest_neighbours() {
        let spec = CodebookSpec::new(256, 4, 3).twinned();
        let c = spec.build().unwrap();
        assert!(c.min_pairwise_distance() >= spec.floor() * (1.0 - 1e-9));
        for k in 0..c.size() {
            let r = c.ranking(c.vector(k));
            assert_eq!(r[0] as usize, k);
            assert_eq!(r[1] as usize, k ^ 1);
        }
    }

    #[test]
    fn ranking_ties_prefer_lower_index() {
        let c = Codebook::new(1, vec![1.0, -1.0, 0.0]).unwrap();
        assert_eq!(c.ranking(&[0.0]), vec![2, 0, 1]);
        assert_eq!(c.nearest(&[0.0]), 2);
        let tie = Codebook::new(1, vec![-1.0, 1.0]).unwrap();
        assert_eq!(tie.nearest(&[0.0]), 0);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let c = build_codebook(1, 4, 2).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<Codebook>(&s).unwrap(), c);
        assert!(serde_json::from_str::<Codebook>(r#"{"dim":2,"vectors":[[1.0],[2.0,3.0]]}"#).is_err());
    }
}
