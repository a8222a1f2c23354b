use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod cmd;
mod error;
mod io;
mod svg;

use error::CliResult;

/// Reconstruct conserved charges from monitored random-circuit records.
#[derive(Parser, Debug)]
#[command(name = "eavesdrop", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate measurement records.
    Generate(cmd::generate::GenerateArgs),
    /// Classify records with the exclusion-process decoder.
    Decode(cmd::decode::DecodeArgs),
    /// Summary tables, histograms, crossings and plots from decoder results.
    Analyze(cmd::analyze::AnalyzeArgs),
    /// Deterministic charge inference and charge cuts.
    Percolate(cmd::percolate::PercolateArgs),
    /// Numerical self-checks.
    #[command(subcommand)]
    Verify(cmd::verify::VerifyCommand),
    /// Run a full (L, p) sweep from a TOML plan.
    Sweep(cmd::sweep::SweepArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Generate(a) => cmd::generate::run(&a),
        Command::Decode(a) => cmd::decode::run(&a),
        Command::Analyze(a) => cmd::analyze::run(&a),
        Command::Percolate(a) => cmd::percolate::run(&a),
        Command::Verify(c) => cmd::verify::run(&c),
        Command::Sweep(a) => cmd::sweep::run(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
