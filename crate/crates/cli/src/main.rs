use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "tabroute", version, about = "Uncertainty-routed table reasoning across a small and a large model")]
pub struct Cli {
    /// Run configuration (JSON)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Where output files go
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Worker threads; defaults to available parallelism
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// More logging (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Show which tokens of a step are table-grounded
    Classify(commands::ClassifyArgs),
    /// Label boundary steps and fit the risk mappings
    Calibrate(commands::CalibrateArgs),
    /// Run routed inference over a dataset
    Run(commands::RunArgs),
    /// Sweep the routing threshold and write the accuracy/FLOPs curve
    Sweep(commands::SweepArgs),
    /// Print metrics and the curve for a saved sweep
    Report(commands::ReportArgs),
    /// Time the per-step routing computation
    BenchRouting(commands::BenchArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(commands::Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
