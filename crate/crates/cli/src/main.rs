//! Command-line front end for envelope component estimation: fit a model,
//! predict on new data, and run the simulation and Wishart timing harnesses.

mod bench;
mod common;
mod doc;
mod error;
mod fit;
mod io;
mod predict;
mod simulate;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "niece",
    about = "Non-iterative envelope component estimation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an envelope regression on a CSV file.
    Fit(fit::FitArgs),
    /// Predict from a saved fit; reports the task loss when labels are
    /// present.
    Predict(predict::PredictArgs),
    /// Monte Carlo comparison of the dense, sparse and principal-component
    /// estimators on synthetic data.
    Simulate(simulate::SimulateArgs),
    /// Wishart subspace-recovery sweep with timings.
    Bench(bench::BenchArgs),
}

fn main() {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Fit(args) => fit::run(args),
        Command::Predict(args) => predict::run(args),
        Command::Simulate(args) => simulate::run(args),
        Command::Bench(args) => bench::run(args),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
