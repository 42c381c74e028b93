use std::path::PathBuf;
use std::process::ExitCode;

use adelim_core::reduce::Gauge;
use clap::{Parser, Subcommand};

use adelim_cli::commands::{cmd_reduce, cmd_simulate, cmd_sweep, cmd_verify, CliError};
use adelim_cli::config::{Overrides, RunConfig};

/// Reduced dynamics for weakly coupled, strongly dissipative environments.
#[derive(Debug, Parser)]
#[command(name = "adelim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Reduction order (overrides the config).
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(0..=2))]
    order: Option<u8>,

    /// Gauge for the first-order terms: cancel-hs1 or traceless.
    #[arg(long, global = true)]
    gauge: Option<Gauge>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed for random model instances.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the reduced generator and embedding coefficients.
    Reduce,
    /// Check invariance residuals and CPTP behaviour.
    Verify,
    /// Sweep the TLS-bath coefficients over a (Δc, ṽ) grid.
    Sweep,
    /// Compare full and reduced trajectories.
    Simulate,
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let path = cli.config.ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let overrides = Overrides { order: cli.order.map(usize::from), gauge: cli.gauge, seed: cli.seed, out: cli.out };
    let cfg = RunConfig::parse(&text, &overrides)?;
    let outcome = match cli.command {
        Command::Reduce => cmd_reduce(&cfg)?,
        Command::Verify => cmd_verify(&cfg)?,
        Command::Sweep => cmd_sweep(&cfg)?,
        Command::Simulate => cmd_simulate(&cfg)?,
    };
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
