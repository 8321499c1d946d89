use std::fs;
use std::path::Path;
use std::process::Command;

use wmlab::Image;
use wmlab_cli::commands::{cmd_avg, cmd_detect, cmd_eval, cmd_generate, cmd_inject};
use wmlab_cli::report::{rows_from_csv, RunReport};
use wmlab_cli::scheme::Sidecar;
use wmlab_cli::{CliError, ExperimentConfig};

fn kgw_config(images: usize, extra: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{"config_version":1,
            "scheme":{{"kind":"kgw","key":12648430,"gamma":0.25,"delta":2.0}},
            "profile":{{"kind":"linear_orthonormal","patch":8,"dim":4,"seed":5,
                        "codebook":{{"size":256,"dim":4,"seed":3}}}},
            "model":{{"kind":"toy","seed":11}},
            "grid":[8,8],
            "images":{images},"seed":7{extra}}}"#
    ))
    .unwrap()
}

fn bytes_of(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn config_version_and_fields_are_checked() {
    let good = kgw_config(1, "");
    let text = good.to_json().unwrap();
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), good);
    let bumped = text.replace("\"config_version\": 1", "\"config_version\": 2");
    assert!(matches!(ExperimentConfig::from_json(&bumped), Err(CliError::Config(_))));
    let unknown = text.replacen('{', "{\"colour\": 3,", 1);
    assert!(ExperimentConfig::from_json(&unknown).is_err());
    let zero = text.replace("\"images\": 1", "\"images\": 0");
    assert!(ExperimentConfig::from_json(&zero).is_err());
}

#[test]
fn box_settings_must_match_profiles() {
    let grey = r#","attacks":[{"name":"latent-opt-removal","box":"grey",
        "profile":{"kind":"linear_orthonormal","patch":8,"dim":4,"seed":6,"codebook":{"size":256,"dim":4,"seed":3}}}]"#;
    kgw_config(1, grey);
    let wrong = grey.replace("\"grey\"", "\"white\"");
    let text = kgw_config(1, "").to_json().unwrap();
    let patched = text.trim_end().trim_end_matches('}').to_string() + &wrong + "}";
    assert!(ExperimentConfig::from_json(&patched).is_err());
    let bitopt = text.trim_end().trim_end_matches('}').to_string() + r#","attacks":[{"name":"bit-opt"}]}"#;
    assert!(ExperimentConfig::from_json(&bitopt).is_err());
}

#[test]
fn generate_is_deterministic_and_resumable() {
    let cfg = kgw_config(3, "");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let s = cmd_generate(&cfg, a.path(), 1).unwrap();
    assert_eq!((s.resumed, s.truth_mismatches), (0, 0));
    cmd_generate(&cfg, b.path(), 2).unwrap();
    for sub in ["watermarked", "controls"] {
        assert_eq!(bytes_of(&a.path().join(sub)), bytes_of(&b.path().join(sub)));
    }
    let before = bytes_of(&a.path().join("watermarked"));
    fs::remove_file(a.path().join("watermarked/00001.png")).unwrap();
    let again = cmd_generate(&cfg, a.path(), 1).unwrap();
    assert_eq!(again.resumed, 5);
    assert_eq!(bytes_of(&a.path().join("watermarked")), before);
}

#[test]
fn sidecars_reverify_like_the_images() {
    let bit = ExperimentConfig::from_json(
        r#"{"config_version":1,"scheme":{"kind":"bitmark","delta":2.0},
            "profile":{"kind":"linear_orthonormal","patch":8,"dim":4,"seed":21,"codebook":{"size":16,"dim":4,"seed":0}},
            "images":2,"seed":3}"#,
    )
    .unwrap();
    for cfg in [kgw_config(4, ""), bit] {
        let dir = tempfile::tempdir().unwrap();
        let s = cmd_generate(&cfg, dir.path(), 1).unwrap();
        assert_eq!(s.truth_mismatches, 0);
        let scheme = wmlab_cli::scheme::Scheme::build(&cfg).unwrap();
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(dir.path().join("watermarked/00000.json")).unwrap()).unwrap();
        let img = Image::load(dir.path().join("watermarked/00000.png")).unwrap();
        assert_eq!(scheme.recover(&img).unwrap(), side.truth.clone().unwrap());
        assert_eq!(scheme.detect_truth(&side.truth.unwrap()).unwrap(), scheme.detect(&img).unwrap());
    }
}

#[test]
fn wrong_key_detection_rate_is_near_the_level() {
    let cfg = kgw_config(300, r#","grid":[16,16],"controls":1"#);
    let dir = tempfile::tempdir().unwrap();
    cmd_generate(&cfg, dir.path(), 0).unwrap();
    let mut other = cfg.clone();
    other.scheme = serde_json::from_str(r#"{"kind":"kgw","key":99,"gamma":0.25,"delta":2.0}"#).unwrap();
    let r = cmd_detect(&other, &dir.path().join("watermarked"), 0).unwrap();
    let rate = r.aggregates[0].detection.iter().find(|d| d.fpr == 0.05).unwrap().rate;
    assert!(rate <= 0.1, "{rate}");
    let right = cmd_detect(&cfg, &dir.path().join("watermarked"), 0).unwrap();
    assert_eq!(right.aggregates[0].detection[0].rate, 1.0);
}

#[test]
fn eval_none_matches_detect_and_reloads() {
    let cfg = kgw_config(
        6,
        r#","attacks":[{"name":"none"},{"name":"vq-regen","k":2},
            {"name":"perturb","kind":"brightness","strength":0.05},
            {"name":"latent-opt-removal","budget":{"steps":20}}],"write_traces":true"#,
    );
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_eval(&cfg, dir.path(), 0).unwrap();
    assert_eq!(report.aggregates.len(), 5);
    assert_eq!(report.aggregates[0].attack, "control");
    assert!(dir.path().join("traces/latent-opt-removal/00000.csv").exists());

    let gen = tempfile::tempdir().unwrap();
    cmd_generate(&cfg, gen.path(), 0).unwrap();
    let det = cmd_detect(&cfg, &gen.path().join("watermarked"), 0).unwrap();
    let none: Vec<_> = report.rows.iter().filter(|r| r.attack == "none").collect();
    assert_eq!(none.len(), det.rows.len());
    for (a, b) in none.iter().zip(&det.rows) {
        assert_eq!((a.n_g, a.t, a.z, a.p), (b.n_g, b.t, b.z, b.p));
    }

    let loaded = RunReport::load(&dir.path().join("report.json"), &dir.path().join("report.csv")).unwrap();
    assert_eq!(loaded.aggregates, report.aggregates);
    assert_eq!(loaded.rows, report.rows);
}

#[test]
fn report_loader_rejects_tampering() {
    let cfg = kgw_config(3, "");
    let dir = tempfile::tempdir().unwrap();
    cmd_eval(&cfg, dir.path(), 1).unwrap();
    let (json, csv) = (dir.path().join("report.json"), dir.path().join("report.csv"));
    let text = fs::read_to_string(&json).unwrap();
    fs::write(&json, text.replace("\"schema_version\": 1", "\"schema_version\": 9")).unwrap();
    assert!(matches!(RunReport::load(&json, &csv), Err(CliError::Config(_))));
    fs::write(&json, &text).unwrap();
    let rows = fs::read_to_string(&csv).unwrap();
    let mut parsed = rows_from_csv(&rows).unwrap();
    parsed[0].p = 0.999_999;
    fs::write(&csv, wmlab_cli::report::rows_to_csv(&parsed).unwrap()).unwrap();
    assert!(matches!(RunReport::load(&json, &csv), Err(CliError::Invariant(_))));
}

#[test]
fn eval_resumes_to_the_same_bytes() {
    let cfg = kgw_config(4, r#","attacks":[{"name":"perturb","kind":"gauss-noise","strength":0.03}]"#);
    let dir = tempfile::tempdir().unwrap();
    cmd_eval(&cfg, dir.path(), 0).unwrap();
    let first = fs::read(dir.path().join("report.csv")).unwrap();
    let cache = dir.path().join("eval_rows.jsonl");
    let lines: Vec<String> = fs::read_to_string(&cache).unwrap().lines().map(String::from).collect();
    let kept = lines[..3].join("\n") + "\n{\"group\":1,\"ro";
    fs::write(&cache, kept).unwrap();
    cmd_eval(&cfg, dir.path(), 0).unwrap();
    assert_eq!(fs::read(dir.path().join("report.csv")).unwrap(), first);

    let fresh = tempfile::tempdir().unwrap();
    cmd_eval(&cfg, fresh.path(), 1).unwrap();
    assert_eq!(fs::read(fresh.path().join("report.csv")).unwrap(), first);
}

#[test]
fn corpus_covers_are_cropped_and_resized() {
    let corpus = tempfile::tempdir().unwrap();
    for i in 0..2 {
        Image::from_fn(90, 150, |y, x, c| ((y + 2 * x + 40 * c + i) % 97) as f64 / 96.0)
            .save(corpus.path().join(format!("cover{i}.png")))
            .unwrap();
    }
    let cfg = kgw_config(
        2,
        &format!(r#","corpus":{:?}"#, corpus.path().to_string_lossy()),
    );
    let dir = tempfile::tempdir().unwrap();
    cmd_generate(&cfg, dir.path(), 1).unwrap();
    let c = Image::load(dir.path().join("controls/00001.png")).unwrap();
    assert_eq!(c.dims(), (64, 64));
    let side: Sidecar = serde_json::from_str(&fs::read_to_string(dir.path().join("controls/00001.json")).unwrap()).unwrap();
    assert!(side.truth.is_none());
    assert!(side.source.unwrap().ends_with("cover1.png"));
}

#[test]
fn avg_and_inject_write_their_outputs() {
    let cfg = kgw_config(3, r#","grid":[16,16]"#);
    let dir = tempfile::tempdir().unwrap();
    cmd_generate(&cfg, dir.path(), 1).unwrap();
    let mean = cmd_avg(&dir.path().join("watermarked"), &dir.path().join("avg")).unwrap();
    assert_eq!(mean.dims(), (128, 128));
    assert!(dir.path().join("avg/average.png").exists());
    let recs = cmd_inject(
        &dir.path().join("controls"),
        &dir.path().join("inj"),
        &wmlab::attacks::FreqInjectConfig::setting_a(1),
        1,
    )
    .unwrap();
    assert_eq!(recs.len(), 3);
    assert!(recs.iter().all(|r| r.imag_residue < 1e-9 && r.peaks.len() == 2));
    assert!(dir.path().join("inj/inject.json").exists());
}

#[test]
fn binary_reports_errors_through_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_wmlab");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"config_version": 7}"#).unwrap();
    let st = Command::new(exe).args(["eval", "--config"]).arg(&bad).arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(2));

    let good = dir.path().join("good.json");
    fs::write(&good, kgw_config(2, "").to_json().unwrap()).unwrap();
    let out = dir.path().join("run");
    let st = Command::new(exe)
        .args(["generate", "--jobs", "1", "--seed", "5", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(st.success());
    let side: Sidecar = serde_json::from_str(&fs::read_to_string(out.join("watermarked/00000.json")).unwrap()).unwrap();
    assert_eq!(side.seed, wmlab_cli::scheme::item_seed(5, wmlab_cli::scheme::WATERMARKED_STREAM, 0));
}
