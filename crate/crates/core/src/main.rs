use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qheat::cli::{self, Command};

/// Spectral solvers for the q-deformed heat equation.
#[derive(Parser)]
#[command(name = "qheat", version, about)]
struct Args {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the direct Cauchy problem.
    Direct(RunArgs),
    /// Recover the source amplitudes from initial and final data.
    Inverse(RunArgs),
    /// Evaluate every identity and bound on the configured problem.
    Verify(RunArgs),
    /// Tabulate the classical-limit error over a list of q values.
    Sweep(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML run configuration.
    config: PathBuf,
    /// Artifact directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for randomized property sweeps.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let (command, run) = match args.command {
        Cmd::Direct(r) => (Command::Direct, r),
        Cmd::Inverse(r) => (Command::Inverse, r),
        Cmd::Verify(r) => (Command::Verify, r),
        Cmd::Sweep(r) => (Command::Sweep, r),
    };
    match cli::run(command, &run.config, &run.out, run.seed) {
        Ok(checks) => {
            let _ = cli::summarize(&checks, std::io::stdout());
            match cli::failures(&checks) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("qheat: {e}");
                    ExitCode::from(e.exit_code())
                }
            }
        }
        Err(e) => {
            eprintln!("qheat: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
