use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vectorhost_cli::{run_file, Kind};

/// Eigenvalue, steady-state and simulation experiments for the spatial
/// vector-host model.
///
/// Exit status: 0 when every check passes, 2 when the computation ran but
/// a check failed, 1 on configuration or runtime errors. The sweep worker
/// count is read from VECTORHOST_WORKERS.
#[derive(Parser)]
#[command(name = "vectorhost", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Principal eigenvalues and eigenfunctions.
    Eigen(RunArgs),
    /// Logistic and endemic steady states.
    Steady(RunArgs),
    /// Time integration from the configured initial data.
    Simulate(RunArgs),
    /// Predicted attractor against a simulated run.
    Threshold(RunArgs),
    /// Dirichlet envelope check on the total vector density.
    Envelope(RunArgs),
    /// Threshold experiments on seeded random scenarios.
    Sweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // Keep 2 for failed checks: usage errors exit with 1.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let (kind, args) = match cli.command {
        Command::Eigen(a) => (Kind::Eigen, a),
        Command::Steady(a) => (Kind::Steady, a),
        Command::Simulate(a) => (Kind::Simulate, a),
        Command::Threshold(a) => (Kind::Threshold, a),
        Command::Envelope(a) => (Kind::Envelope, a),
        Command::Sweep(a) => (Kind::Sweep, a),
    };
    match run_file(kind, &args.config, &args.out, args.seed) {
        Ok(v) => {
            println!("{}: {}", kind.name(), v.name());
            ExitCode::from(v.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
