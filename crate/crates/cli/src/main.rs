//! `hneumann`: batch front end for the Heisenberg Neumann solvers.
//!
//! Exit codes: 0 success, 1 failed check or numerical error, 2 config
//! error, 3 incompatible data.

mod commands;
mod config;
mod expr;

use clap::{Parser, Subcommand};
use commands::CliError;
use config::{MethodChoice, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hneumann", version, about = "Neumann problem for the Kohn-Laplacian on the Koranyi ball")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration; defaults apply to omitted fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for the output files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true, value_enum)]
    method: Option<Choice>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Choice {
    Kernel,
    Bie,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the Neumann-kernel series coefficients.
    FitCoeffs,
    /// Solve the configured problem.
    Solve,
    /// Run the identity suite.
    Verify,
    /// Evaluate the kernels at the configured pairs.
    EvalKernel,
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(m) = cli.method {
        cfg.method = match m {
            Choice::Kernel => MethodChoice::Kernel,
            Choice::Bie => MethodChoice::Bie,
            Choice::Both => MethodChoice::Both,
        };
    }
    std::fs::create_dir_all(&cli.out).map_err(|source| CliError::Io { path: cli.out.clone(), source })?;
    match cli.command {
        Command::FitCoeffs => commands::fit_coeffs(&cfg, &cli.out),
        Command::Solve => commands::solve(&cfg, &cli.out),
        Command::Verify => commands::verify(&cfg, &cli.out),
        Command::EvalKernel => commands::eval_kernel(&cfg, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
