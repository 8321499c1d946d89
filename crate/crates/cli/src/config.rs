//! Versioned JSON experiment configuration.
//!
//! ```json
//! {
//!   "config_version": 1,
//!   "scheme": { "kind": "kgw", "key": 12648430, "gamma": 0.25, "delta": 2.0 },
//!   "profile": { "kind": "linear_orthonormal", "patch": 8, "dim": 4, "seed": 5,
//!                "codebook": { "size": 256, "dim": 4, "seed": 3 } },
//!   "grid": [16, 16],
//!   "images": 100,
//!   "seed": 1,
//!   "attacks": [ { "name": "none" }, { "name": "vq-regen", "k": 2 } ]
//! }
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wmlab::attacks::{BitOptConfig, FreqInjectConfig, OptBudget, PerturbKind};
use wmlab::codebook::CodebookSpec;
use wmlab::vae::{BoxSetting, EncoderKind, EncoderProfile};

use crate::error::{config_err, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    pub kind: EncoderKind,
    pub patch: usize,
    pub dim: usize,
    pub seed: u64,
    pub codebook: CodebookSpec,
}

impl ProfileConfig {
    pub fn build(&self) -> Result<EncoderProfile> {
        Ok(EncoderProfile::new(self.kind, self.patch, self.dim, self.seed, self.codebook.build()?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Uniform,
    Toy {
        seed: u64,
        #[serde(default = "one")]
        temperature: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn default_context() -> usize {
    1
}

fn default_gamma() -> f64 {
    0.25
}

fn default_clusters() -> usize {
    64
}

fn default_green() -> Vec<String> {
    vec!["01".into(), "10".into()]
}

fn default_schedule() -> Vec<(usize, usize)> {
    [1, 3, 7, 9, 21, 63].iter().map(|&s| (s, s)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SchemeConfig {
    Kgw {
        key: u64,
        #[serde(default = "default_context")]
        context: usize,
        #[serde(default = "default_gamma")]
        gamma: f64,
        delta: f64,
    },
    Indexmark {
        pairing_key: u64,
    },
    Clustermark {
        key: u64,
        #[serde(default = "default_context")]
        context: usize,
        #[serde(default = "default_gamma")]
        gamma: f64,
        delta: f64,
        #[serde(default = "default_clusters")]
        clusters: usize,
        #[serde(default)]
        cluster_seed: u64,
    },
    Bitmark {
        delta: f64,
        #[serde(default = "default_green")]
        green: Vec<String>,
        #[serde(default = "default_schedule")]
        schedule: Vec<(usize, usize)>,
        /// Quantizer constants; `2^{-i}` when absent.
        #[serde(default)]
        constants: Option<Vec<f64>>,
        #[serde(default)]
        logit_one: f64,
    },
}

impl SchemeConfig {
    pub fn id(&self) -> &'static str {
        match self {
            SchemeConfig::Kgw { .. } => "kgw",
            SchemeConfig::Indexmark { .. } => "indexmark",
            SchemeConfig::Clustermark { .. } => "clustermark",
            SchemeConfig::Bitmark { .. } => "bitmark",
        }
    }

    pub fn is_bitmark(&self) -> bool {
        matches!(self, SchemeConfig::Bitmark { .. })
    }
}

/// Which encoder an attacker uses, relative to the verifier's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AttackerAccess {
    #[serde(rename = "box", default = "white")]
    pub setting: BoxSetting,
    /// Surrogate encoder; required unless the setting is white.
    #[serde(default)]
    pub profile: Option<ProfileConfig>,
}

fn white() -> BoxSetting {
    BoxSetting::White
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum AttackKind {
    None,
    VqRegen {
        k: usize,
    },
    Perturb {
        kind: PerturbKind,
        strength: f64,
    },
    LatentOptRemoval {
        #[serde(default)]
        budget: OptBudget,
        #[serde(default, flatten)]
        access: AttackerAccess,
    },
    LatentOptForgery {
        #[serde(default)]
        budget: OptBudget,
        #[serde(default, flatten)]
        access: AttackerAccess,
    },
    BitOpt {
        #[serde(default)]
        config: BitOptConfig,
        #[serde(default, flatten)]
        access: AttackerAccess,
    },
    FreqInject {
        spacing: usize,
        log_magnitude: f64,
        #[serde(default)]
        bins: Option<usize>,
        #[serde(default)]
        overwrite: bool,
    },
}

impl AttackKind {
    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::VqRegen { .. } => "vq-regen",
            AttackKind::Perturb { .. } => "perturb",
            AttackKind::LatentOptRemoval { .. } => "latent-opt-removal",
            AttackKind::LatentOptForgery { .. } => "latent-opt-forgery",
            AttackKind::BitOpt { .. } => "bit-opt",
            AttackKind::FreqInject { .. } => "freq-inject",
        }
    }

    /// Forgeries start from covers; everything else from watermarked images.
    pub fn is_forgery(&self) -> bool {
        matches!(self, AttackKind::LatentOptForgery { .. } | AttackKind::FreqInject { .. })
    }

    pub fn access(&self) -> Option<&AttackerAccess> {
        match self {
            AttackKind::LatentOptRemoval { access, .. }
            | AttackKind::LatentOptForgery { access, .. }
            | AttackKind::BitOpt { access, .. } => Some(access),
            _ => None,
        }
    }

    pub fn freq_config(&self, seed: u64) -> Option<FreqInjectConfig> {
        match *self {
            AttackKind::FreqInject {
                spacing,
                log_magnitude,
                bins,
                overwrite,
            } => Some(FreqInjectConfig {
                spacing,
                log_magnitude,
                bins,
                seed,
                overwrite,
            }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    /// Row label; defaults to the attack name.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(flatten)]
    pub kind: AttackKind,
}

impl AttackSpec {
    pub fn new(kind: AttackKind) -> Self {
        Self { label: None, kind }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.name().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Png,
    Ppm,
}

impl ImageFormat {
    pub fn extension(&self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Ppm => "ppm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub config_version: u32,
    pub scheme: SchemeConfig,
    pub profile: ProfileConfig,
    /// Token generator; the uniform model when absent.
    #[serde(default)]
    pub model: Option<ModelConfig>,
    /// Token grid of the token schemes (BitMark uses its finest scale).
    #[serde(default = "default_grid")]
    pub grid: (usize, usize),
    pub images: usize,
    /// Unwatermarked controls; equal to `images` when absent.
    #[serde(default)]
    pub controls: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_attacks")]
    pub attacks: Vec<AttackSpec>,
    /// Directory of authentic PNG/PPM images used as covers instead of generated controls.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default = "default_levels")]
    pub fpr_levels: Vec<f64>,
    #[serde(default = "default_format")]
    pub image_format: ImageFormat,
    #[serde(default)]
    pub write_traces: bool,
}

fn default_grid() -> (usize, usize) {
    (16, 16)
}

fn default_attacks() -> Vec<AttackSpec> {
    vec![AttackSpec::new(AttackKind::None)]
}

fn default_levels() -> Vec<f64> {
    wmlab::stats::DEFAULT_FPR_LEVELS.to_vec()
}

fn default_format() -> ImageFormat {
    ImageFormat::Png
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        match raw.get("config_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(CONFIG_VERSION) => {}
            Some(v) => return Err(config_err(format!("unsupported config_version {v}"))),
            None => return Err(config_err("config_version is missing")),
        }
        let cfg: Self = serde_json::from_value(raw).map_err(|e| config_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn control_count(&self) -> usize {
        self.controls.unwrap_or(self.images)
    }

    pub fn validate(&self) -> Result<()> {
        if self.images == 0 || self.control_count() == 0 {
            return Err(config_err("image and control counts must be at least 1"));
        }
        if self.grid.0 == 0 || self.grid.1 == 0 {
            return Err(config_err("grid must be positive"));
        }
        if self.fpr_levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(config_err("FPR levels must lie in (0, 1)"));
        }
        let verifier = self.profile.build()?;
        let mut labels = HashSet::new();
        for a in &self.attacks {
            if !labels.insert(a.label()) {
                return Err(config_err(format!("duplicate attack label {:?}", a.label())));
            }
            if matches!(a.kind, AttackKind::BitOpt { .. }) && !self.scheme.is_bitmark() {
                return Err(config_err("bit-opt targets the bitmark scheme only"));
            }
            if let Some(access) = a.kind.access() {
                let attacker = match &access.profile {
                    Some(p) => p.build()?,
                    None => verifier.clone(),
                };
                let actual = BoxSetting::classify(&attacker, &verifier);
                if actual != access.setting {
                    return Err(config_err(format!(
                        "attack {:?} declares a {} box but its profile makes it {}",
                        a.label(),
                        access.setting.as_str(),
                        actual.as_str()
                    )));
                }
            }
        }
        Ok(())
    }
}
