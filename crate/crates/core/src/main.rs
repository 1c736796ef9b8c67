use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use mckean_lab::config::{self, Experiment, ExperimentConfig};
use mckean_lab::model::Severity;
use mckean_lab::runner;
use mckean_lab::Error;

/// Numerical laboratory for weakly interacting diffusions and their
/// mean-field limit.
#[derive(Debug, Parser)]
#[command(name = "mckean-lab", version, about)]
struct Cli {
    /// Experiment to run (overrides the config's `experiment` key).
    experiment: String,

    /// Path to the JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,

    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Parse and validate the configuration without executing.
    #[arg(long)]
    validate: bool,
}

fn parse_experiment(name: &str) -> Option<Experiment> {
    Experiment::ALL.into_iter().find(|e| e.name() == name)
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let Some(experiment) = parse_experiment(&cli.experiment) else {
        eprintln!(
            "unknown experiment {:?}; expected one of: {}",
            cli.experiment,
            Experiment::ALL.map(|e| e.name()).join(", ")
        );
        return ExitCode::from(3);
    };

    if cli.validate {
        return match config::validate(&cli.config) {
            Ok(diags) => {
                let mut worst = ExitCode::SUCCESS;
                for d in &diags {
                    let tag = match d.severity {
                        Severity::Warning => "warning",
                        Severity::Error => "error",
                    };
                    println!("{tag}: {}", d.message);
                    if d.severity == Severity::Error {
                        worst = ExitCode::from(3);
                    }
                }
                if diags.is_empty() {
                    println!("ok: configuration is valid");
                }
                worst
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(3)
            }
        };
    }

    let mut cfg = match ExperimentConfig::from_path(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    cfg.experiment = experiment;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }

    let base = cli
        .config
        .parent()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    match runner::run(&cfg, &base) {
        Ok(manifest) => {
            println!(
                "{}: {} file(s) in {:.2}s",
                manifest.experiment,
                manifest.files.len(),
                manifest.wall_time_seconds
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Json(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
