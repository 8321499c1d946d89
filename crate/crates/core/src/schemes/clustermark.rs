//! Cluster-level green lists.
//!
//! Codebook vectors are grouped by k-means (k-means++ seeding from ChaCha8,
//! at most [`KMEANS_MAX_ITERS`] Lloyd iterations, stopping once no centroid
//! moves more than [`KMEANS_TOLERANCE`]). A cluster that loses all members is
//! re-seeded at the vector farthest from its current centroid. The watermark
//! is KGW over cluster ids: contexts hash previous cluster ids and a token is
//! green iff its cluster is green.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codebook::{sq_dist, Codebook};
use crate::error::{param, Result};
use crate::hash::WatermarkKey;
use crate::schemes::kgw::{embed_symbols, GreenSets, KgwParams};
use crate::schemes::model::ToyARModel;
use crate::stats::{DetectionReport, DEFAULT_FPR_LEVELS};
use crate::tokens::TokenMap;

pub const KMEANS_MAX_ITERS: usize = 100;
pub const KMEANS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    k: usize,
    dim: usize,
    labels: Vec<u32>,
    centroids: Vec<f64>,
}

impl ClusterAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, token: u32) -> u32 {
        self.labels[token as usize]
    }

    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn vocab_size(&self) -> usize {
        self.labels.len()
    }

    /// Members of cluster `c` in index order.
    pub fn members(&self, c: u32) -> Vec<u32> {
        (0..self.labels.len() as u32).filter(|&t| self.labels[t as usize] == c).collect()
    }
}

fn nearest(point: &[f64], centroids: &[f64], dim: usize) -> u32 {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, cen) in centroids.chunks(dim).enumerate() {
        let d = sq_dist(point, cen);
        if d < best_d {
            best_d = d;
            best = c as u32;
        }
    }
    best
}

fn plus_plus(codebook: &Codebook, k: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = codebook.size();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(codebook.vector(i), codebook.vector(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    if u < d {
                        pick = Some(i);
                        break;
                    }
                    u -= d;
                }
            }
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap_or(0))
        } else {
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(codebook.vector(i), codebook.vector(next)));
        }
    }
    chosen.iter().flat_map(|&i| codebook.vector(i).to_vec()).collect()
}

pub fn cluster_codebook(codebook: &Codebook, k: usize, seed: u64) -> Result<ClusterAssignment> {
    let n = codebook.size();
    if k == 0 || k > n {
        return Err(param(format!("cluster count {k} must lie in 1..={n}")));
    }
    let dim = codebook.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus(codebook, k, &mut rng);
    let mut labels: Vec<u32> = vec![0; n];
    for _ in 0..KMEANS_MAX_ITERS {
        for (i, l) in labels.iter_mut().enumerate() {
            *l = nearest(codebook.vector(i), &centroids, dim);
        }
        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            counts[l as usize] += 1;
            for (s, v) in sums[l as usize * dim..(l as usize + 1) * dim].iter_mut().zip(codebook.vector(i)) {
                *s += v;
            }
        }
        let mut next = centroids.clone();
        let mut taken: Vec<usize> = Vec::new();
        for c in 0..k {
            let slot = &mut next[c * dim..(c + 1) * dim];
            if counts[c] > 0 {
                for (s, t) in slot.iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                    *s = t / counts[c] as f64;
                }
            } else {
                let far = (0..n)
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| {
                        let da = sq_dist(codebook.vector(a), &centroids[labels[a] as usize * dim..][..dim]);
                        let db = sq_dist(codebook.vector(b), &centroids[labels[b] as usize * dim..][..dim]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .unwrap_or(0);
                taken.push(far);
                slot.copy_from_slice(codebook.vector(far));
            }
        }
        let shift = centroids
            .chunks(dim)
            .zip(next.chunks(dim))
            .map(|(a, b)| sq_dist(a, b))
            .fold(0.0, f64::max);
        centroids = next;
        if shift <= KMEANS_TOLERANCE * KMEANS_TOLERANCE {
            break;
        }
    }
    for (i, l) in labels.iter_mut().enumerate() {
        *l = nearest(codebook.vector(i), &centroids, dim);
    }
    Ok(ClusterAssignment { k, dim, labels, centroids })
}

pub fn embed_clustermark(
    model: &ToyARModel,
    clusters: &ClusterAssignment,
    params: &KgwParams,
    height: usize,
    width: usize,
    rng_seed: u64,
) -> Result<TokenMap> {
    check_vocab(model.vocab_size(), clusters)?;
    let mut sets = GreenSets::new(params.key, params.gamma, clusters.k)?;
    let (tokens, _) = embed_symbols(model, &mut sets, &clusters.labels, params.delta, height * width, rng_seed)?;
    TokenMap::new(height, width, model.vocab_size(), tokens)
}

fn check_vocab(vocab: usize, clusters: &ClusterAssignment) -> Result<()> {
    if vocab != clusters.vocab_size() {
        return Err(param(format!(
            "vocabulary {vocab} differs from clustered vocabulary {}",
            clusters.vocab_size()
        )));
    }
    Ok(())
}

pub fn detect_clustermark(
    tokens: &TokenMap,
    clusters: &ClusterAssignment,
    key: &WatermarkKey,
    gamma: f64,
) -> Result<DetectionReport> {
    check_vocab(tokens.vocab_size(), clusters)?;
    if tokens.len() <= key.context_len {
        return Err(param("token map too short to score"));
    }
    let mut sets = GreenSets::new(*key, gamma, clusters.k)?;
    let symbols: Vec<u32> = tokens.indices().iter().map(|&t| clusters.label(t)).collect();
    let (trials, green) = sets.count(&symbols);
    DetectionReport::from_counts(trials, green, sets.null_gamma(), &DEFAULT_FPR_LEVELS)
}
