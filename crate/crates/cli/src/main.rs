use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use rodlimit_cli::{execute, Command, RunOptions};

/// Effective rod stiffness, limit and thin-3D equilibria, and convergence checks.
#[derive(Debug, Parser)]
#[command(name = "rodlimit", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for data-parallel stages.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    /// Seed for sampled test fields (overrides `solver.seed`).
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = RunOptions { config: cli.config, out: cli.out, threads: cli.threads.map(usize::from), seed: cli.seed };
    ExitCode::from(execute(cli.command, &opts) as u8)
}
