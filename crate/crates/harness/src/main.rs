use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use log::{error, info};
use nslang::{exp2d, imaging, output, props, Experiment, ExperimentConfig, HarnessError};

/// Run one experiment and write its artifacts.
#[derive(Parser, Debug)]
#[command(name = "nslang", version)]
struct Cli {
    /// exp2d-plain, exp2d-op, denoise, deconv or props
    experiment: String,
    /// `key = value` config file; experiment defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Chain counts and iteration budgets of the published runs
    #[arg(long = "paper-scale")]
    full_scale: bool,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: out/<experiment>)
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(cli: &Cli) -> Result<ExperimentConfig, HarnessError> {
    let experiment: Experiment = cli.experiment.parse()?;
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::parse(experiment, &text)?
        }
        None => ExperimentConfig::defaults(experiment),
    };
    if cli.full_scale {
        cfg.apply_full_scale();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), HarnessError> {
    let cfg = load(cli)?;
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.experiment.name()));
    output::ensure_dir(&out)?;
    output::write_file(&out.join("manifest.txt"), cfg.manifest().as_bytes())?;
    info!("{} -> {}", cfg.experiment, out.display());
    match cfg.experiment {
        Experiment::Exp2dPlain | Experiment::Exp2dOp => {
            exp2d::run(&cfg, Some(&out))?;
        }
        Experiment::Denoise | Experiment::Deconv => {
            imaging::run(&cfg, Some(&out))?;
        }
        Experiment::Props => {
            let report = props::run(&cfg);
            output::write_file(&out.join("props.csv"), report.csv().as_bytes())?;
            if !report.all_pass() {
                return Err(HarnessError::PropertyFailure {
                    failed: report.failures(),
                    total: report.rows.len(),
                });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
