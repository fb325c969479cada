use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use transpath_cli::{execute, Command, RunOptions};

/// Gaussian approximation of transition paths: optimization, sampling and
/// small-temperature sweeps.
#[derive(Debug, Parser)]
#[command(name = "transpath", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Minimize the objective over mean path and field.
    Minimize(Common),
    /// Evaluate the KL objective for a given path and field.
    KlEval(Common),
    /// Draw fluctuation paths from the Gaussian bridge.
    SampleBridge(Common),
    /// Write the diagonal of the Green's function.
    GreenDiag(Common),
    /// Minimize along a decreasing list of ε and compare with the limit.
    GammaSweep(Common),
    /// Compute the quasi-potential between the two endpoints.
    Quasipotential(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: config `output_dir`, else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 = automatic.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli.command {
        Sub::Minimize(c) => (Command::Minimize, c),
        Sub::KlEval(c) => (Command::KlEval, c),
        Sub::SampleBridge(c) => (Command::SampleBridge, c),
        Sub::GreenDiag(c) => (Command::GreenDiag, c),
        Sub::GammaSweep(c) => (Command::GammaSweep, c),
        Sub::Quasipotential(c) => (Command::Quasipotential, c),
    };
    let opts = RunOptions {
        config_path: common.config,
        out: common.out,
        seed: common.seed,
        threads: common.threads,
    };
    ExitCode::from(execute(cmd, &opts) as u8)
}
