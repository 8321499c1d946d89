//! A configured watermark scheme: generation, controls and verification.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wmlab::bitmark::{
    detect_bitmark, count_green_scales, residual_decompose, sample_bitmark, BitmarkReport, GreenNGramSet,
    ScaleSchedule, ToyBitModel,
};
use wmlab::hash::{fmix64, WatermarkKey, GOLDEN};
use wmlab::schemes::{
    build_pairing, cluster_codebook, detect_clustermark, detect_indexmark, detect_kgw, embed_clustermark,
    embed_indexmark, embed_kgw, sample_tokens, ClusterAssignment, KgwParams, ToyARModel, TokenPairing,
};
use wmlab::stats::DetectionReport;
use wmlab::tokens::{BitSeq, TokenMap};
use wmlab::vae::{lookup, nearest_tokens, EncoderProfile};
use wmlab::Image;

use crate::config::{ExperimentConfig, ModelConfig, SchemeConfig};
use crate::error::{config_err, Result};

/// Seed streams; attack `a` uses `ATTACK_STREAM + a`.
pub const WATERMARKED_STREAM: u64 = 1;
pub const CONTROL_STREAM: u64 = 2;
pub const ATTACK_STREAM: u64 = 16;

/// Seed of item `index` in `stream`, independent of execution order.
pub fn item_seed(base: u64, stream: u64, index: usize) -> u64 {
    fmix64(fmix64(base ^ stream.wrapping_mul(GOLDEN)) ^ index as u64)
}

/// Generation-side ground truth of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    Tokens(TokenMap),
    Bits(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub index: usize,
    pub seed: u64,
    pub watermarked: bool,
    /// Absent for covers ingested from disk.
    pub truth: Option<Truth>,
    pub source: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub image: Image,
    pub sidecar: Sidecar,
}

enum Kind {
    Kgw {
        model: ToyARModel,
        params: KgwParams,
    },
    Index {
        model: ToyARModel,
        pairing: TokenPairing,
    },
    Cluster {
        model: ToyARModel,
        params: KgwParams,
        clusters: ClusterAssignment,
    },
    Bit {
        model: ToyBitModel,
        green: GreenNGramSet,
        schedule: ScaleSchedule,
        delta: f64,
    },
}

pub struct Scheme {
    id: &'static str,
    profile: EncoderProfile,
    grid: (usize, usize),
    kind: Kind,
    covers: Vec<PathBuf>,
}

fn build_model(cfg: &Option<ModelConfig>, vocab: usize) -> Result<ToyARModel> {
    Ok(match cfg {
        None | Some(ModelConfig::Uniform) => ToyARModel::uniform(vocab)?,
        Some(ModelConfig::Toy { seed, temperature }) => ToyARModel::new(*seed, vocab, *temperature)?,
    })
}

/// PNG and PPM files of `dir`, sorted by name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png") || e.eq_ignore_ascii_case("ppm"))
        })
        .collect();
    out.sort();
    Ok(out)
}

/// Loads an authentic image, center-crops it to the target aspect and resizes it.
pub fn ingest(path: &Path, height: usize, width: usize) -> Result<Image> {
    let img = Image::load(path)?;
    let (h, w) = img.dims();
    // largest centered window with the target aspect ratio
    let (ch, cw) = if h * width > w * height {
        ((w * height / width).max(1), w)
    } else {
        (h, (h * width / height).max(1))
    };
    let (y0, x0) = ((h - ch) / 2, (w - cw) / 2);
    let crop = Image::from_fn(ch, cw, |y, x, c| img.get(y0 + y, x0 + x, c));
    Ok(crop.resized(height, width)?.quantized_8bit())
}

impl Scheme {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let profile = cfg.profile.build()?;
        let vocab = profile.codebook().size();
        let kind = match &cfg.scheme {
            SchemeConfig::Kgw {
                key,
                context,
                gamma,
                delta,
            } => Kind::Kgw {
                model: build_model(&cfg.model, vocab)?,
                params: KgwParams::new(WatermarkKey::new(*key, *context), *gamma, *delta),
            },
            SchemeConfig::Indexmark { pairing_key } => Kind::Index {
                model: build_model(&cfg.model, vocab)?,
                pairing: build_pairing(profile.codebook(), *pairing_key),
            },
            SchemeConfig::Clustermark {
                key,
                context,
                gamma,
                delta,
                clusters,
                cluster_seed,
            } => Kind::Cluster {
                model: build_model(&cfg.model, vocab)?,
                params: KgwParams::new(WatermarkKey::new(*key, *context), *gamma, *delta),
                clusters: cluster_codebook(profile.codebook(), *clusters, *cluster_seed)?,
            },
            SchemeConfig::Bitmark {
                delta,
                green,
                schedule,
                constants,
                logit_one,
            } => {
                let codes: Vec<&str> = green.iter().map(String::as_str).collect();
                let schedule = match constants {
                    Some(c) => ScaleSchedule::with_constants(schedule.clone(), c.clone())?,
                    None => ScaleSchedule::new(schedule.clone())?,
                };
                Kind::Bit {
                    model: ToyBitModel { logit_one: *logit_one },
                    green: GreenNGramSet::parse(&codes)?,
                    schedule,
                    delta: *delta,
                }
            }
        };
        let covers = match &cfg.corpus {
            Some(dir) => {
                let files = list_images(dir)?;
                if files.len() < cfg.control_count() {
                    return Err(config_err(format!(
                        "corpus {} holds {} images but {} covers are needed",
                        dir.display(),
                        files.len(),
                        cfg.control_count()
                    )));
                }
                files
            }
            None => Vec::new(),
        };
        Ok(Self {
            id: cfg.scheme.id(),
            profile,
            grid: cfg.grid,
            kind,
            covers,
        })
    }

    pub fn id(&self) -> &'static str {
        self.id
    }

    pub fn profile(&self) -> &EncoderProfile {
        &self.profile
    }

    /// `(schedule, green set)` of a bit scheme.
    pub fn bit_parts(&self) -> Option<(&ScaleSchedule, &GreenNGramSet)> {
        match &self.kind {
            Kind::Bit { schedule, green, .. } => Some((schedule, green)),
            _ => None,
        }
    }

    pub fn image_dims(&self) -> (usize, usize) {
        let (h, w) = match &self.kind {
            Kind::Bit { schedule, .. } => schedule.finest(),
            _ => self.grid,
        };
        self.profile.image_dims(h, w)
    }

    fn tokens(&self, seed: u64, watermark: bool) -> Result<TokenMap> {
        let (h, w) = self.grid;
        Ok(match &self.kind {
            Kind::Kgw { model, params } => {
                let p = KgwParams {
                    delta: if watermark { params.delta } else { 0.0 },
                    ..*params
                };
                embed_kgw(model, &p, h, w, seed)?
            }
            Kind::Index { model, pairing } => {
                let base = sample_tokens(model, h, w, seed)?;
                if watermark {
                    embed_indexmark(&base, pairing)?
                } else {
                    base
                }
            }
            Kind::Cluster { model, params, clusters } => {
                let p = KgwParams {
                    delta: if watermark { params.delta } else { 0.0 },
                    ..*params
                };
                embed_clustermark(model, clusters, &p, h, w, seed)?
            }
            Kind::Bit { .. } => unreachable!("bit schemes carry no tokens"),
        })
    }

    fn sample(&self, index: usize, seed: u64, watermark: bool) -> Result<Sample> {
        let (image, truth) = match &self.kind {
            Kind::Bit {
                model,
                green,
                schedule,
                delta,
            } => {
                let d = if watermark { *delta } else { 0.0 };
                let (latent, bits) = sample_bitmark(model, green, d, schedule, self.profile.dim(), seed)?;
                (self.profile.decode(&latent)?, Truth::Bits(bits.to_string()))
            }
            _ => {
                let t = self.tokens(seed, watermark)?;
                (self.profile.decode(&lookup(&t, self.profile.codebook())?)?, Truth::Tokens(t))
            }
        };
        Ok(Sample {
            image: image.quantized_8bit(),
            sidecar: Sidecar {
                index,
                seed,
                watermarked: watermark,
                truth: Some(truth),
                source: None,
            },
        })
    }

    pub fn watermarked(&self, index: usize, seed: u64) -> Result<Sample> {
        self.sample(index, seed, true)
    }

    /// An unwatermarked cover: the next corpus file, or a generated control.
    pub fn control(&self, index: usize, seed: u64) -> Result<Sample> {
        match self.covers.get(index) {
            Some(path) => {
                let (h, w) = self.image_dims();
                Ok(Sample {
                    image: ingest(path, h, w)?,
                    sidecar: Sidecar {
                        index,
                        seed,
                        watermarked: false,
                        truth: None,
                        source: Some(path.clone()),
                    },
                })
            }
            None => self.sample(index, seed, false),
        }
    }

    pub fn detect(&self, image: &Image) -> Result<DetectionReport> {
        self.detect_with(&self.profile, image)
    }

    /// Verification through `profile` instead of the scheme's own encoder.
    pub fn detect_with(&self, profile: &EncoderProfile, image: &Image) -> Result<DetectionReport> {
        if let Kind::Bit { schedule, green, .. } = &self.kind {
            return Ok(detect_bitmark(image, profile, schedule, green)?.report);
        }
        let tokens = nearest_tokens(&profile.encode(image)?, profile.codebook())?;
        self.detect_tokens(&tokens)
    }

    pub fn detect_tokens(&self, tokens: &TokenMap) -> Result<DetectionReport> {
        Ok(match &self.kind {
            Kind::Kgw { params, .. } => detect_kgw(tokens, &params.key, params.gamma)?,
            Kind::Index { pairing, .. } => detect_indexmark(tokens, pairing)?,
            Kind::Cluster { params, clusters, .. } => detect_clustermark(tokens, clusters, &params.key, params.gamma)?,
            Kind::Bit { .. } => return Err(config_err("bit schemes are verified from bits")),
        })
    }

    /// Detection computed from the generation-side ground truth.
    pub fn detect_truth(&self, truth: &Truth) -> Result<DetectionReport> {
        match (truth, &self.kind) {
            (Truth::Tokens(t), _) => self.detect_tokens(t),
            (Truth::Bits(s), Kind::Bit { schedule, green, .. }) => {
                let bits = BitSeq::parse(s)?;
                let counts = count_green_scales(&bits, &schedule.scale_lengths(self.profile.dim()), green)?;
                Ok(BitmarkReport::from_counts(counts, green)?.report)
            }
            (Truth::Bits(_), _) => Err(config_err("bit ground truth given to a token scheme")),
        }
    }

    /// What the verifier recovers from `image`, in ground-truth form.
    pub fn recover(&self, image: &Image) -> Result<Truth> {
        let z = self.profile.encode(image)?;
        Ok(match &self.kind {
            Kind::Bit { schedule, .. } => Truth::Bits(residual_decompose(&z, schedule)?.bits().to_string()),
            _ => Truth::Tokens(nearest_tokens(&z, self.profile.codebook())?),
        })
    }
}
