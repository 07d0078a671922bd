use std::process::ExitCode;

use clap::{Parser, Subcommand};
use prion_cli::config::Experiment;
use prion_cli::record::{Results, RunStatus};
use prion_cli::{execute, RunArgs};

/// Prion proliferation experiments: eigenproblems, steady states,
/// time-dependent runs, parameter sweeps and the validation suite.
#[derive(Parser)]
#[command(name = "prion", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Principal eigenpair Λ(V), 𝒰, φ at the configured monomer levels.
    Eigen(RunArgs),
    /// Non-trivial steady state (V∞, ϱ∞, profile, modality).
    Steady(RunArgs),
    /// Time integration from an inoculum; optional stability experiment.
    Simulate(RunArgs),
    /// One-parameter sweep in dynamics, eigen or steady mode.
    Sweep(RunArgs),
    /// Built-in oracle checks.
    Validate(RunArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Eigen(a) => (Experiment::Eigen, a),
        Command::Steady(a) => (Experiment::Steady, a),
        Command::Simulate(a) => (Experiment::Simulate, a),
        Command::Sweep(a) => (Experiment::Sweep, a),
        Command::Validate(a) => (Experiment::Validate, a),
    };
    let report = execute(experiment, &args);
    if let Some(record) = &report.record {
        if let Some(Results::Validate(v)) = &record.results {
            for c in &v.checks {
                println!("{} {:<22} {:.3e} (tol {:.1e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
            }
        }
        match record.status {
            RunStatus::Ok => println!("{experiment}: ok -> {}", report.dir.display()),
            RunStatus::Partial => println!("{experiment}: partial -> {}", report.dir.display()),
            RunStatus::Failed => println!("{experiment}: failed -> {}", report.dir.display()),
        }
    }
    ExitCode::from(report.exit as u8)
}
