//! `samplet`: compression, sparse algebra benchmarks, matrix functions and
//! GP prediction on scattered data.

mod args;
mod commands;
mod error;
mod gp_cmd;
mod report;
mod setup;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{ConvertArgs, ExpArgs, InvertArgs, MultiplyArgs, ProblemArgs, SqrtArgs};
use crate::error::CliError;
use crate::gp_cmd::GpCommand;

#[derive(Debug, Parser)]
#[command(name = "samplet", version, about)]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compress a kernel matrix and report sizes and errors.
    Compress(ProblemArgs),
    /// Time the formatted product against a perturbed copy.
    BenchMultiply(MultiplyArgs),
    /// Factorize and selectively invert for a list of ridge parameters.
    BenchInvert(InvertArgs),
    /// Square root by the elliptic quadrature, swept over quadrature sizes.
    Sqrt(SqrtArgs),
    /// Exponential by truncated series, swept over series lengths.
    Exp(ExpArgs),
    /// Gaussian process prediction and constraint generation.
    #[command(subcommand)]
    Gp(GpCommand),
    /// Convert point files between CSV and the binary format.
    Convert(ConvertArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match &cli.command {
        Command::Compress(a) => commands::compress(a),
        Command::BenchMultiply(a) => commands::bench_multiply(a),
        Command::BenchInvert(a) => commands::bench_invert(a),
        Command::Sqrt(a) => commands::sqrt(a),
        Command::Exp(a) => commands::exp(a),
        Command::Gp(GpCommand::Predict(a)) => gp_cmd::predict(a),
        Command::Gp(GpCommand::MakeConstraints(a)) => gp_cmd::make(a),
        Command::Convert(a) => commands::convert(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
