//! The six subcommands.
//!
//! Layout of an output directory:
//!
//! ```text
//! watermarked/00000.png  watermarked/00000.json   generated images + ground truth
//! controls/00000.png     controls/00000.json      unwatermarked covers
//! attacked/<label>/00000.png                       attack outputs
//! traces/<label>/00000.csv                         optimizer traces
//! <stem>.json  <stem>.csv                          reports
//! ```
//!
//! Every per-image step is skipped when its output already exists, so an
//! interrupted command resumes where it stopped.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wmlab::attacks::{
    bitopt_removal, freq_inject, latentopt_forgery, latentopt_removal, perturb, vq_regen, FreqInjectConfig, Trace,
};
use wmlab::hash::fmix64;
use wmlab::metrics::{psnr, ssim};
use wmlab::vae::{BoxSetting, EncoderProfile};
use wmlab::Image;

use crate::config::{AttackKind, AttackSpec, ExperimentConfig};
use crate::error::{config_err, CliError, Result};
use crate::report::{Row, RunReport};
use crate::scheme::{item_seed, list_images, Sample, Scheme, Sidecar, ATTACK_STREAM, CONTROL_STREAM, WATERMARKED_STREAM};

pub const WATERMARKED_DIR: &str = "watermarked";
pub const CONTROLS_DIR: &str = "controls";

/// Runs `f` on a pool of `jobs` threads (all cores when 0).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| config_err(e.to_string()))?;
    Ok(pool.install(f))
}

fn item_name(index: usize) -> String {
    format!("{index:05}")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("part");
    fs::File::create(&tmp)?.write_all(bytes)?;
    fs::rename(tmp, path)?;
    Ok(())
}

fn save_image(image: &Image, path: &Path) -> Result<()> {
    let tmp = path.with_file_name(format!(
        "{}.part.{}",
        path.file_stem().and_then(|s| s.to_str()).unwrap_or("image"),
        path.extension().and_then(|s| s.to_str()).unwrap_or("png")
    ));
    image.save(&tmp)?;
    fs::rename(tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub watermarked: usize,
    pub controls: usize,
    /// Items already on disk from an earlier run.
    pub resumed: usize,
    /// Images whose recovered detection differs from the ground-truth detection.
    pub truth_mismatches: usize,
    pub seeds: Vec<(String, usize, u64)>,
}

fn generate_set(
    scheme: &Scheme,
    dir: &Path,
    ext: &str,
    count: usize,
    base: u64,
    stream: u64,
    watermark: bool,
) -> Result<(usize, usize, Vec<u64>)> {
    fs::create_dir_all(dir)?;
    let results: Vec<Result<(bool, bool, u64)>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let seed = item_seed(base, stream, i);
            let img_path = dir.join(format!("{}.{ext}", item_name(i)));
            let side_path = dir.join(format!("{}.json", item_name(i)));
            if img_path.exists() && side_path.exists() {
                if let Ok(s) = serde_json::from_str::<Sidecar>(&fs::read_to_string(&side_path)?) {
                    if s.seed == seed && s.index == i {
                        return Ok((true, false, seed));
                    }
                }
            }
            let Sample { image, sidecar } = if watermark {
                scheme.watermarked(i, seed)?
            } else {
                scheme.control(i, seed)?
            };
            let mismatch = match &sidecar.truth {
                Some(t) => scheme.detect_truth(t)? != scheme.detect(&image)?,
                None => false,
            };
            save_image(&image, &img_path)?;
            write_atomic(&side_path, serde_json::to_string(&sidecar)?.as_bytes())?;
            Ok((false, mismatch, seed))
        })
        .collect();
    let mut resumed = 0;
    let mut mismatches = 0;
    let mut seeds = Vec::with_capacity(count);
    for r in results {
        let (skip, bad, seed) = r?;
        resumed += usize::from(skip);
        mismatches += usize::from(bad);
        seeds.push(seed);
    }
    Ok((resumed, mismatches, seeds))
}

/// Writes `images` watermarked samples and the controls, with sidecars and a manifest.
pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<GenerateSummary> {
    let scheme = Scheme::build(cfg)?;
    let ext = cfg.image_format.extension();
    with_jobs(jobs, || {
        let (r1, m1, s1) = generate_set(&scheme, &out.join(WATERMARKED_DIR), ext, cfg.images, cfg.seed, WATERMARKED_STREAM, true)?;
        let (r2, m2, s2) =
            generate_set(&scheme, &out.join(CONTROLS_DIR), ext, cfg.control_count(), cfg.seed, CONTROL_STREAM, false)?;
        let seeds = s1
            .iter()
            .enumerate()
            .map(|(i, &s)| (WATERMARKED_DIR.to_string(), i, s))
            .chain(s2.iter().enumerate().map(|(i, &s)| (CONTROLS_DIR.to_string(), i, s)))
            .collect();
        let summary = GenerateSummary {
            watermarked: cfg.images,
            controls: cfg.control_count(),
            resumed: r1 + r2,
            truth_mismatches: m1 + m2,
            seeds,
        };
        fs::write(
            out.join("manifest.json"),
            serde_json::to_string_pretty(&serde_json::json!({ "config": cfg, "summary": summary }))? + "\n",
        )?;
        Ok(summary)
    })?
}

/// Result of one attack on one image.
#[derive(Debug, Clone)]
pub struct Attacked {
    pub image: Image,
    pub trace: Option<Trace>,
    pub notes: Vec<String>,
}

fn attacker_profile(scheme: &Scheme, spec: &AttackSpec) -> Result<EncoderProfile> {
    match spec.kind.access().and_then(|a| a.profile.as_ref()) {
        Some(p) => p.build(),
        None => Ok(scheme.profile().clone()),
    }
}

fn box_label(scheme: &Scheme, spec: &AttackSpec) -> Result<&'static str> {
    Ok(match (&spec.kind, spec.kind.access()) {
        (_, Some(_)) => BoxSetting::classify(&attacker_profile(scheme, spec)?, scheme.profile()).as_str(),
        (AttackKind::VqRegen { .. }, None) => BoxSetting::White.as_str(),
        _ => "none",
    })
}

/// Applies `spec` to `source`; `reference` is the watermarked image a forgery imitates.
pub fn run_attack(scheme: &Scheme, spec: &AttackSpec, source: &Image, reference: &Image, seed: u64) -> Result<Attacked> {
    let plain = |image: Image| Attacked {
        image,
        trace: None,
        notes: Vec::new(),
    };
    Ok(match &spec.kind {
        AttackKind::None => plain(source.clone()),
        AttackKind::VqRegen { k } => plain(vq_regen(source, scheme.profile(), *k)?),
        AttackKind::Perturb { kind, strength } => plain(perturb(source, *kind, *strength, seed)?),
        AttackKind::LatentOptRemoval { budget, .. } | AttackKind::LatentOptForgery { budget, .. } => {
            let attacker = attacker_profile(scheme, spec)?;
            let verify = |x: &Image| scheme.detect_with(&attacker, x).map_err(|e| match e {
                CliError::Core(e) => e,
                other => wmlab::Error::Parameter(other.to_string()),
            });
            let mut b = *budget;
            b.init_seed = fmix64(budget.init_seed ^ seed);
            let out = if spec.kind.is_forgery() {
                latentopt_forgery(source, reference, &attacker, &b, Some(&verify))?
            } else {
                latentopt_removal(source, &attacker, &b, Some(&verify))?
            };
            Attacked {
                image: out.image,
                trace: Some(out.trace),
                notes: vec![format!("best checkpoint at step {}", out.best_step)],
            }
        }
        AttackKind::BitOpt { config, .. } => {
            let (schedule, green) = scheme
                .bit_parts()
                .ok_or_else(|| config_err("bit-opt needs the bitmark scheme"))?;
            let out = bitopt_removal(source, &attacker_profile(scheme, spec)?, schedule, green, config)?;
            Attacked {
                image: out.image,
                trace: Some(out.trace),
                notes: vec![format!("stopped after {} steps", out.steps_taken)],
            }
        }
        AttackKind::FreqInject { .. } => {
            let cfg: FreqInjectConfig = spec.kind.freq_config(seed).expect("freq-inject variant");
            let out = freq_inject(source, &cfg)?;
            Attacked {
                image: out.image,
                trace: None,
                notes: out.notes,
            }
        }
    })
}

fn check_trace(label: &str, index: usize, trace: &Option<Trace>) -> Result<()> {
    match trace {
        Some(t) if t.violations > 0 => Err(CliError::Invariant(format!(
            "attack {label} on image {index}: {} of {} iterates left the budget",
            t.violations, t.iterates_checked
        ))),
        _ => Ok(()),
    }
}

fn load_set(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(config_err(format!("{} is missing; run generate first", dir.display())));
    }
    list_images(dir)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackSummary {
    pub written: usize,
    pub resumed: usize,
}

/// Attacks the images written by `generate` in `out`.
pub fn cmd_attack(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<AttackSummary> {
    let scheme = Scheme::build(cfg)?;
    let marked = load_set(&out.join(WATERMARKED_DIR))?;
    let covers = load_set(&out.join(CONTROLS_DIR))?;
    let ext = cfg.image_format.extension();
    with_jobs(jobs, || {
        let mut summary = AttackSummary::default();
        for (a, spec) in cfg.attacks.iter().enumerate() {
            let label = spec.label();
            let dir = out.join("attacked").join(&label);
            let trace_dir = out.join("traces").join(&label);
            fs::create_dir_all(&dir)?;
            let sources = if spec.kind.is_forgery() { &covers } else { &marked };
            let results: Vec<Result<bool>> = (0..sources.len())
                .into_par_iter()
                .map(|i| {
                    let target = dir.join(format!("{}.{ext}", item_name(i)));
                    if target.exists() {
                        return Ok(true);
                    }
                    let source = Image::load(&sources[i])?;
                    let reference = Image::load(&marked[i % marked.len()])?;
                    let seed = item_seed(cfg.seed, ATTACK_STREAM + a as u64, i);
                    let res = run_attack(&scheme, spec, &source, &reference, seed)?;
                    check_trace(&label, i, &res.trace)?;
                    if let Some(t) = &res.trace {
                        fs::create_dir_all(&trace_dir)?;
                        write_atomic(&trace_dir.join(format!("{}.csv", item_name(i))), t.to_csv().as_bytes())?;
                    }
                    save_image(&res.image, &target)?;
                    Ok(false)
                })
                .collect();
            for r in results {
                if r? {
                    summary.resumed += 1;
                } else {
                    summary.written += 1;
                }
            }
        }
        Ok(summary)
    })?
}

/// Verifies every image of `input` and reports one row per file.
pub fn cmd_detect(cfg: &ExperimentConfig, input: &Path, jobs: usize) -> Result<RunReport> {
    let scheme = Scheme::build(cfg)?;
    let files = list_images(input)?;
    if files.is_empty() {
        return Err(config_err(format!("no PNG or PPM images in {}", input.display())));
    }
    let target = input.file_name().and_then(|s| s.to_str()).unwrap_or("input").to_string();
    let rows = with_jobs(jobs, || {
        files
            .par_iter()
            .enumerate()
            .map(|(i, f)| {
                let r = scheme.detect(&Image::load(f)?)?;
                Ok(Row::new(i, scheme.id(), "detect", "none", &target, 0, &r, None))
            })
            .collect::<Result<Vec<Row>>>()
    })??;
    Ok(RunReport::new("detect", rows, &cfg.fpr_levels))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CachedRow {
    group: usize,
    row: Row,
}

/// Rows finished by an earlier run with the same configuration.
struct RowCache {
    path: PathBuf,
    done: HashMap<(usize, usize), Row>,
    file: Mutex<fs::File>,
}

impl RowCache {
    fn open(out: &Path, cfg: &ExperimentConfig) -> Result<Self> {
        let path = out.join("eval_rows.jsonl");
        let stamp_path = out.join("eval_config.json");
        let stamp = cfg.to_json()?;
        let same = fs::read_to_string(&stamp_path).is_ok_and(|s| s == stamp);
        let mut done = HashMap::new();
        if same {
            if let Ok(text) = fs::read_to_string(&path) {
                // a torn final line from an interrupted run is simply redone
                for c in text.lines().filter_map(|l| serde_json::from_str::<CachedRow>(l).ok()) {
                    done.insert((c.group, c.row.index), c.row);
                }
            }
        } else {
            let _ = fs::remove_file(&path);
            fs::write(&stamp_path, &stamp)?;
        }
        let file = fs::OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            done,
            file: Mutex::new(file),
        })
    }

    fn record(&self, group: usize, row: &Row) -> Result<()> {
        let line = serde_json::to_string(&CachedRow { group, row: row.clone() })? + "\n";
        let mut f = self.file.lock().expect("row cache lock");
        f.write_all(line.as_bytes())?;
        Ok(())
    }
}

/// Full scheme × attack matrix, in memory, with the controls as the first group.
pub fn cmd_eval(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<RunReport> {
    let scheme = Scheme::build(cfg)?;
    fs::create_dir_all(out)?;
    let cache = RowCache::open(out, cfg)?;
    let (report, violations) = with_jobs(jobs, || -> Result<(RunReport, Vec<String>)> {
        let marked: Vec<Sample> = (0..cfg.images)
            .into_par_iter()
            .map(|i| scheme.watermarked(i, item_seed(cfg.seed, WATERMARKED_STREAM, i)))
            .collect::<Result<_>>()?;
        let covers: Vec<Sample> = (0..cfg.control_count())
            .into_par_iter()
            .map(|i| scheme.control(i, item_seed(cfg.seed, CONTROL_STREAM, i)))
            .collect::<Result<_>>()?;

        let control = AttackSpec {
            label: Some("control".into()),
            kind: AttackKind::None,
        };
        let groups: Vec<(usize, &AttackSpec)> = std::iter::once((0, &control))
            .chain(cfg.attacks.iter().enumerate().map(|(a, s)| (a + 1, s)))
            .collect();
        let violations = Mutex::new(Vec::new());
        let mut rows = Vec::new();
        for (g, spec) in groups {
            let label = spec.label();
            let on_covers = g == 0 || spec.kind.is_forgery();
            let (sources, target) = if on_covers { (&covers, "cover") } else { (&marked, "watermarked") };
            let boxl = box_label(&scheme, spec)?;
            let group_rows: Vec<Row> = (0..sources.len())
                .into_par_iter()
                .map(|i| {
                    if let Some(r) = cache.done.get(&(g, i)) {
                        return Ok(r.clone());
                    }
                    let seed = item_seed(cfg.seed, ATTACK_STREAM + g as u64, i);
                    let source = &sources[i].image;
                    let res = run_attack(&scheme, spec, source, &marked[i % marked.len()].image, seed)?;
                    if let Err(e) = check_trace(&label, i, &res.trace) {
                        violations.lock().expect("violation list").push(e.to_string());
                    }
                    if cfg.write_traces {
                        if let Some(t) = &res.trace {
                            let dir = out.join("traces").join(&label);
                            fs::create_dir_all(&dir)?;
                            write_atomic(&dir.join(format!("{}.csv", item_name(i))), t.to_csv().as_bytes())?;
                        }
                    }
                    let quality = if matches!(spec.kind, AttackKind::None) {
                        None
                    } else {
                        Some((psnr(source, &res.image)?, ssim(source, &res.image)?))
                    };
                    let report = scheme.detect(&res.image)?;
                    let row = Row::new(i, scheme.id(), &label, boxl, target, sources[i].sidecar.seed, &report, quality);
                    cache.record(g, &row)?;
                    Ok(row)
                })
                .collect::<Result<_>>()?;
            rows.extend(group_rows);
        }
        let mut report = RunReport::new("eval", rows, &cfg.fpr_levels);
        report.notes.push(format!("rows cached in {}", cache.path.display()));
        Ok((report, violations.into_inner().expect("violation list")))
    })??;
    report.emit(out, "report")?;
    if !violations.is_empty() {
        return Err(CliError::Invariant(violations.join("; ")));
    }
    Ok(report)
}

/// Mean of every image in `input`, written to `out/average.<ext>`.
pub fn cmd_avg(input: &Path, out: &Path) -> Result<Image> {
    let files = list_images(input)?;
    if files.is_empty() {
        return Err(config_err(format!("no PNG or PPM images in {}", input.display())));
    }
    let images: Vec<Image> = files.iter().map(Image::load).collect::<wmlab::Result<_>>()?;
    let mean = wmlab::attacks::average_corpus(&images)?;
    fs::create_dir_all(out)?;
    mean.save(out.join("average.png"))?;
    Ok(mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectRecord {
    pub file: PathBuf,
    pub seed: u64,
    pub peaks: Vec<(i64, i64)>,
    pub notes: Vec<String>,
    pub imag_residue: f64,
}

/// Frequency injection over a directory, with one seed per file index.
pub fn cmd_inject(input: &Path, out: &Path, settings: &FreqInjectConfig, jobs: usize) -> Result<Vec<InjectRecord>> {
    let files = list_images(input)?;
    fs::create_dir_all(out)?;
    let records = with_jobs(jobs, || {
        files
            .par_iter()
            .enumerate()
            .map(|(i, f)| {
                let seed = item_seed(settings.seed, ATTACK_STREAM, i);
                let res = freq_inject(&Image::load(f)?, &FreqInjectConfig { seed, ..*settings })?;
                let name = f.file_name().expect("listed files have names");
                save_image(&res.image, &out.join(name))?;
                Ok(InjectRecord {
                    file: PathBuf::from(name),
                    seed,
                    peaks: res.peaks,
                    notes: res.notes,
                    imag_residue: res.imag_residue,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    fs::write(out.join("inject.json"), serde_json::to_string_pretty(&records)? + "\n")?;
    Ok(records)
}
