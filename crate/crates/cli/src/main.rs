//! `selectorlab`: score, evaluate, sweep, and verify selective-classification
//! selectors over precomputed features and logits.
//!
//! Exit codes: 0 success, 2 validation/usage error, 3 verification failure.

mod commands;
mod out;
mod pipeline;
mod profiles;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "selectorlab",
    version,
    about = "Likelihood-ratio selective-classification scores, risk-coverage \
             evaluation, and optimality verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit scoring artifacts on a training split and score a test split.
    Score(commands::ScoreArgs),
    /// Turn a score bundle into risk-coverage reports and a ranking table.
    Eval(commands::EvalArgs),
    /// Grid sweeps over k, lambda, or the labeled training fraction.
    Sweep(commands::SweepArgs),
    /// Generate a synthetic dataset with an exact likelihood oracle.
    Synth(commands::SynthArgs),
    /// Run the seeded optimality verification suite.
    Verify(commands::VerifyArgs),
    /// Aggregate evaluation reports into one ranking table.
    Report(commands::ReportArgs),
}

fn main() {
    init_thread_pool();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Score(args) => commands::run_score(args),
        Command::Eval(args) => commands::run_eval(args),
        Command::Sweep(args) => commands::run_sweep(args),
        Command::Synth(args) => commands::run_synth(args),
        Command::Verify(args) => commands::run_verify(args),
        Command::Report(args) => commands::run_report(args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(2);
        }
    }
}

/// `SELECTORLAB_THREADS` caps the rayon pool used for batch scoring.
fn init_thread_pool() {
    if let Ok(value) = std::env::var("SELECTORLAB_THREADS") {
        match value.parse::<usize>() {
            Ok(n) if n >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring invalid SELECTORLAB_THREADS={value}"),
        }
    }
}
