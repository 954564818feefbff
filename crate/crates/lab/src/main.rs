use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use isq_lab::commands::{self, Context};
use isq_lab::config::OUTPUT_DIR_ENV;
use isq_lab::output::Provenance;
use isq_lab::{ExperimentConfig, LabError, Overrides};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Simulate,
    MgAnalytics,
    Bounds,
    Couple,
    Dominate,
    TvCheck,
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::MgAnalytics => "mg-analytics",
            Command::Bounds => "bounds",
            Command::Couple => "couple",
            Command::Dominate => "dominate",
            Command::TvCheck => "tv-check",
            Command::Verify => "verify",
        }
    }
}

/// Simulation, coupling and bound experiments for infinite-server queues
/// with state-dependent intensities.
///
/// Exit status: 0 on success, 1 on a validation failure (bad config, a
/// failed check), 2 on a numeric failure.
#[derive(Debug, Parser)]
#[command(name = "isq", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,

    /// TOML config file; the shipped default is used when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,

    /// Override `run.master_seed`.
    #[arg(long)]
    seed: Option<u64>,

    /// Override `run.replications`.
    #[arg(long)]
    reps: Option<usize>,

    /// Override `run.horizon`.
    #[arg(long)]
    horizon: Option<f64>,

    /// Override `output.directory`.
    #[arg(long, env = OUTPUT_DIR_ENV)]
    output_dir: Option<PathBuf>,
}

fn run(cli: &Cli) -> Result<commands::Outcome, LabError> {
    let (cfg, origin) = match &cli.config {
        Some(p) => (ExperimentConfig::load(p)?, p.display().to_string()),
        None => (ExperimentConfig::shipped_default(), "default".to_string()),
    };
    let flags = Overrides {
        seed: cli.seed,
        reps: cli.reps,
        horizon: cli.horizon,
        output_dir: cli.output_dir.clone(),
    };
    let cfg = cfg.apply(&flags)?;
    let name = cli.command.name();
    let ctx = Context {
        cfg: &cfg,
        provenance: Provenance::new(name, &cfg, &origin, &flags),
    };
    commands::run(name, &ctx)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            for l in &outcome.lines {
                println!("{l}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if !outcome.passed {
                eprintln!("isq {}: checks failed", cli.command.name());
            }
            ExitCode::from(outcome.exit_code())
        }
        Err(e) => {
            eprintln!("isq {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code())
        }
    }
}
