use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wmlab::attacks::FreqInjectConfig;
use wmlab_cli::commands::{cmd_attack, cmd_avg, cmd_detect, cmd_eval, cmd_generate, cmd_inject};
use wmlab_cli::scheme::Scheme;
use wmlab_cli::{CliError, ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "wmlab", version, about = "Toy-scale image watermark attack laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configuration's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; falls back to the configuration's `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 uses every core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Watermarked images, unwatermarked controls and ground-truth sidecars.
    Generate(Common),
    /// Runs the configured attacks on a generated corpus.
    Attack(Common),
    /// Verifies every image in a directory.
    Detect {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Runs the whole scheme x attack matrix and writes the report.
    Eval(Common),
    /// Pixel-wise mean of a directory of images.
    Avg {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Frequency-domain forgery of every image in a directory.
    Inject {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let path = self
            .config
            .as_ref()
            .ok_or_else(|| CliError::Config("--config is required for this command".into()))?;
        let mut cfg = ExperimentConfig::load(path)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn out(&self, cfg: Option<&ExperimentConfig>) -> Result<PathBuf> {
        self.out
            .clone()
            .or_else(|| cfg.and_then(|c| c.out.clone()))
            .ok_or_else(|| CliError::Config("no output directory: pass --out or set `out`".into()))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(c) => {
            let cfg = c.config()?;
            let s = cmd_generate(&cfg, &c.out(Some(&cfg))?, c.jobs)?;
            println!(
                "generated {} watermarked and {} control images ({} resumed, {} ground-truth mismatches)",
                s.watermarked, s.controls, s.resumed, s.truth_mismatches
            );
        }
        Command::Attack(c) => {
            let cfg = c.config()?;
            let s = cmd_attack(&cfg, &c.out(Some(&cfg))?, c.jobs)?;
            println!("attacked {} images ({} resumed)", s.written, s.resumed);
        }
        Command::Detect { common, input } => {
            let cfg = common.config()?;
            let out = common.out(Some(&cfg))?;
            let report = cmd_detect(&cfg, &input, common.jobs)?;
            let (json, csv) = report.emit(&out, "detect")?;
            println!("wrote {} and {}", json.display(), csv.display());
        }
        Command::Eval(c) => {
            let cfg = c.config()?;
            let out = c.out(Some(&cfg))?;
            let report = cmd_eval(&cfg, &out, c.jobs)?;
            for a in &report.aggregates {
                let at1 = a.detection.iter().find(|r| r.fpr == 0.01).map(|r| r.rate);
                println!(
                    "{:<12} {:<24} {:<6} {:<12} n={:<5} median p={:<10.3e} rate@1%={}",
                    a.scheme,
                    a.attack,
                    a.box_setting,
                    a.target,
                    a.count,
                    a.median_p,
                    at1.map_or("-".into(), |r| format!("{r:.3}"))
                );
            }
        }
        Command::Avg { common, input } => {
            let cfg = common.config.as_ref().map(|_| common.config()).transpose()?;
            let out = common.out(cfg.as_ref())?;
            let mean = cmd_avg(&input, &out)?;
            if let Some(cfg) = cfg {
                let r = Scheme::build(&cfg)?.detect(&mean)?;
                std::fs::write(out.join("average.json"), serde_json::to_string_pretty(&r)? + "\n")?;
                println!("average image: N_g={} T={} z={:.3} p={:.3e}", r.green, r.trials, r.z, r.p);
            }
        }
        Command::Inject { common, input } => {
            let cfg = common.config.as_ref().map(|_| common.config()).transpose()?;
            let out = common.out(cfg.as_ref())?;
            let seed = common.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
            let settings = cfg
                .as_ref()
                .and_then(|c| c.attacks.iter().find_map(|a| a.kind.freq_config(seed)))
                .unwrap_or_else(|| FreqInjectConfig::setting_c(seed));
            let recs = cmd_inject(&input, &out, &settings, common.jobs)?;
            println!("injected {} images", recs.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wmlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
