use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod failure;

use failure::Failure;

/// Worker-pool size for population, sweep and evaluation parallelism.
pub const WORKERS_ENV: &str = "PLASTICLAB_WORKERS";

#[derive(Parser)]
#[command(name = "plasticlab", version, about = "Plastic ANN/SNN training and time-horizon benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one genome with evolution strategies.
    Train {
        config: PathBuf,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Roll out a trained genome and write per-episode traces.
    Evaluate(EvaluateArgs),
    /// Train and evaluate every (horizon, repeat) cell of the bench section.
    Sweep { config: PathBuf },
    /// Rebuild report.json from a sweep directory's raw tables.
    Report { dir: PathBuf },
}

#[derive(Args)]
pub struct EvaluateArgs {
    pub genome: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    /// Run until failure or the safety limit.
    #[arg(long, conflicts_with = "horizon", required_unless_present = "horizon")]
    pub uncapped: bool,
    /// Cap every episode at this many steps.
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long, default_value_t = plasticlab::environment::DEFAULT_SAFETY_LIMIT)]
    pub safety_limit: u64,
    #[arg(long, default_value_t = 1)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory; defaults to `<output_dir>/eval`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Accept a genome written under a different config.
    #[arg(long)]
    pub force: bool,
    /// Also write the spike raster of the first N steps of episode 0.
    #[arg(long, value_name = "N")]
    pub raster: Option<u64>,
    /// Write a reward-accumulation curve marked at this training horizon.
    #[arg(long, value_name = "T")]
    pub curve_marker: Option<u64>,
}

fn configure_workers() -> Result<(), Failure> {
    let Ok(value) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::config(format!("{WORKERS_ENV} must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::runtime(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_workers().and_then(|()| match cli.command {
        Command::Train { config, resume } => commands::train(&config, resume),
        Command::Evaluate(args) => commands::evaluate(&args),
        Command::Sweep { config } => commands::sweep(&config),
        Command::Report { dir } => commands::report(&dir),
    });
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
