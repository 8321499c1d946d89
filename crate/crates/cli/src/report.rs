//! Per-image rows, their aggregates, and the JSON + CSV report files.
//!
//! The JSON file carries the schema version and the aggregates; the CSV
//! file carries one row per (attack, target, image). Aggregates are always
//! recomputed from the rows as they read back from CSV and compared with the
//! in-memory values before anything is written.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wmlab::stats::{mean_sd, median, DetectionReport};

use crate::error::{config_err, CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub index: usize,
    pub scheme: String,
    pub attack: String,
    #[serde(rename = "box")]
    pub box_setting: String,
    /// `watermarked` or `cover`: what the attack started from.
    pub target: String,
    pub seed: u64,
    pub n_g: u64,
    pub t: u64,
    pub z: f64,
    pub p: f64,
    /// Quality against the attack input; empty when nothing was changed.
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
}

impl Row {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        index: usize,
        scheme: &str,
        attack: &str,
        box_setting: &str,
        target: &str,
        seed: u64,
        report: &DetectionReport,
        quality: Option<(f64, f64)>,
    ) -> Self {
        Self {
            index,
            scheme: scheme.into(),
            attack: attack.into(),
            box_setting: box_setting.into(),
            target: target.into(),
            seed,
            n_g: report.green,
            t: report.trials,
            z: report.z,
            p: report.p,
            psnr: quality.map(|q| q.0),
            ssim: quality.map(|q| q.1),
        }
    }

    fn group(&self) -> (&str, &str, &str, &str) {
        (&self.scheme, &self.attack, &self.box_setting, &self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub fpr: f64,
    pub rate: f64,
}

/// Summary of one (scheme, attack, box, target) group.
///
/// `detection` is the fraction with `p` below each level: the TPR for
/// watermarked targets, and the false-positive or forgery success rate for
/// covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scheme: String,
    pub attack: String,
    #[serde(rename = "box")]
    pub box_setting: String,
    pub target: String,
    pub count: usize,
    pub detection: Vec<Rate>,
    pub median_p: f64,
    pub psnr_mean: Option<f64>,
    pub psnr_sd: Option<f64>,
    pub ssim_mean: Option<f64>,
    pub ssim_sd: Option<f64>,
}

fn moments(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, Option<f64>) {
    let v: Vec<f64> = values.flatten().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (None, None);
    }
    let (m, s) = mean_sd(&v);
    (Some(m), Some(s))
}

/// Aggregates of consecutive rows sharing a group, in row order.
pub fn aggregate(rows: &[Row], levels: &[f64]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let key = rows[start].group();
        let end = start + rows[start..].iter().take_while(|r| r.group() == key).count();
        let g = &rows[start..end];
        let ps: Vec<f64> = g.iter().map(|r| r.p).collect();
        let (psnr_mean, psnr_sd) = moments(g.iter().map(|r| r.psnr));
        let (ssim_mean, ssim_sd) = moments(g.iter().map(|r| r.ssim));
        out.push(Aggregate {
            scheme: key.0.into(),
            attack: key.1.into(),
            box_setting: key.2.into(),
            target: key.3.into(),
            count: g.len(),
            detection: levels
                .iter()
                .map(|&fpr| Rate {
                    fpr,
                    rate: ps.iter().filter(|&&p| p < fpr).count() as f64 / g.len() as f64,
                })
                .collect(),
            median_p: median(&ps).unwrap_or(f64::NAN),
            psnr_mean,
            psnr_sd,
            ssim_mean,
            ssim_sd,
        });
        start = end;
    }
    out
}

pub fn rows_to_csv(rows: &[Row]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<Row>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<std::result::Result<Vec<Row>, _>>()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub fpr_levels: Vec<f64>,
    pub aggregates: Vec<Aggregate>,
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Row>,
}

impl RunReport {
    pub fn new(command: &str, rows: Vec<Row>, levels: &[f64]) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            fpr_levels: levels.to_vec(),
            aggregates: aggregate(&rows, levels),
            notes: Vec::new(),
            rows,
        }
    }

    /// Recomputes the aggregates from `csv` and checks them against this report.
    pub fn verify_against(&self, csv: &str) -> Result<()> {
        let rows = rows_from_csv(csv)?;
        if rows != self.rows {
            return Err(CliError::Invariant("rows do not survive the CSV round trip".into()));
        }
        if aggregate(&rows, &self.fpr_levels) != self.aggregates {
            return Err(CliError::Invariant("aggregates differ from their recomputation".into()));
        }
        Ok(())
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir` after verification.
    pub fn emit(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        let csv = rows_to_csv(&self.rows)?;
        self.verify_against(&csv)?;
        fs::create_dir_all(dir)?;
        let json_path = dir.join(format!("{stem}.json"));
        let csv_path = dir.join(format!("{stem}.csv"));
        fs::write(&csv_path, csv)?;
        fs::write(&json_path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok((json_path, csv_path))
    }

    /// Reads a report pair, rejecting unknown schema versions and stale aggregates.
    pub fn load(json_path: &Path, csv_path: &Path) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(&fs::read_to_string(json_path)?)?;
        match raw.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => return Err(config_err(format!("unsupported report schema_version {v}"))),
            None => return Err(config_err("report has no schema_version")),
        }
        let mut report: RunReport = serde_json::from_value(raw)?;
        let csv = fs::read_to_string(csv_path)?;
        report.rows = rows_from_csv(&csv)?;
        report.verify_against(&csv)?;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(index: usize, attack: &str, p: f64, psnr: Option<f64>) -> Row {
        Row {
            index,
            scheme: "kgw".into(),
            attack: attack.into(),
            box_setting: "white".into(),
            target: "watermarked".into(),
            seed: index as u64,
            n_g: 10,
            t: 20,
            z: 1.5,
            p,
            psnr,
            ssim: psnr.map(|_| 0.9),
        }
    }

    #[test]
    fn groups_follow_row_order() {
        let rows = vec![
            row(0, "none", 1e-300, None),
            row(1, "none", 0.5, None),
            row(0, "blur", 0.02, Some(30.0)),
            row(1, "blur", 0.004, Some(32.0)),
            row(2, "blur", 0.2, Some(f64::INFINITY)),
        ];
        let a = aggregate(&rows, &[0.01, 0.05]);
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].detection[0].rate, 0.5);
        assert_eq!(a[0].psnr_mean, None);
        assert_eq!(a[1].count, 3);
        assert_eq!(a[1].median_p, 0.02);
        assert_eq!(a[1].psnr_mean, Some(31.0));
        assert!((a[1].detection[1].rate - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = vec![
            row(0, "none", 1e-300, None),
            row(1, "x", 0.1 + 0.2, Some(f64::INFINITY)),
            row(2, "x", 5e-324, Some(29.123456789012345)),
        ];
        let back = rows_from_csv(&rows_to_csv(&rows).unwrap()).unwrap();
        assert_eq!(back, rows);
    }
}
