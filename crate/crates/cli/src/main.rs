//! `glauber`: experiment driver for the Glauber dynamics toolkit.
//!
//! Exit status 0 when every check passes, 1 when an assertion fails or an
//! iteration diverges, 2 for configuration errors.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use config::{Command, Overrides, Source};
use output::{Report, Writer};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Io(String),
    Assertion(String),
    Runtime(String),
}

impl Failure {
    fn status(&self) -> u8 {
        match self {
            Failure::Config(_) | Failure::Io(_) => 2,
            Failure::Assertion(_) | Failure::Runtime(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Config(m) => format!("configuration error: {m}"),
            Failure::Io(m) => format!("i/o error: {m}"),
            Failure::Assertion(m) => format!("check failed: {m}"),
            Failure::Runtime(m) => format!("run failed: {m}"),
        }
    }
}

impl From<glauber_core::Error> for Failure {
    fn from(e: glauber_core::Error) -> Self {
        use glauber_core::Error as E;
        match e {
            E::Config(_) | E::Domain(_) | E::Resource { .. } => Failure::Config(e.to_string()),
            E::Assertion { .. } => Failure::Assertion(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "glauber", version, about = "Glauber dynamics, Kirkwood-Salsburg solver and equilibrium checks")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Run the birth-and-death dynamics and write snapshot records.
    Simulate(Flags),
    /// Solve the Kirkwood-Salsburg equation on sites or on a lattice.
    KsSolve(Flags),
    /// Check the generator intertwining identity on a site space.
    VerifyKernel(Flags),
    /// Test the GNZ equation and generator invariance on simulated data.
    GnzCheck(Flags),
    /// Estimate density and pair correlation from simulated data.
    Estimate(Flags),
}

#[derive(clap::Args)]
struct Flags {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "glauber-out")]
    out: PathBuf,
    /// Overrides `run.replicas`.
    #[arg(long)]
    replicas: Option<usize>,
}

fn execute(command: Command, flags: &Flags) -> Result<(), Failure> {
    let path = flags.config.display().to_string();
    let text = std::fs::read_to_string(&flags.config).map_err(|e| Failure::Config(format!("cannot read {path}: {e}")))?;
    let src = Source { path: &path, text: &text };
    let overrides = Overrides {
        seed: flags.seed,
        replicas: flags.replicas,
    };
    let resolved = config::resolve(config::parse(&src)?, &src, command, overrides)?;
    let resolved_text = config::to_toml(&resolved.config);

    let mut out = Writer::new(&flags.out)?;
    out.write("resolved_config.toml", &resolved_text)?;
    let mut report = Report::new(command.name(), resolved.seed);
    let outcome = commands::run(command, &resolved, &src, &mut out, &mut report);
    report.status(outcome.is_ok());
    if let Err(e) = &outcome {
        report.set("failure", "reason", e.message());
    }
    let artifacts: Vec<toml::Value> = out.written().iter().map(|s| toml::Value::String(s.clone())).collect();
    report.set("result", "artifacts", toml::Value::Array(artifacts));
    out.write("report.toml", &report.finish(&resolved_text))?;
    outcome
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, flags) = match &cli.command {
        Sub::Simulate(f) => (Command::Simulate, f),
        Sub::KsSolve(f) => (Command::KsSolve, f),
        Sub::VerifyKernel(f) => (Command::VerifyKernel, f),
        Sub::GnzCheck(f) => (Command::GnzCheck, f),
        Sub::Estimate(f) => (Command::Estimate, f),
    };
    match execute(command, flags) {
        Ok(()) => {
            eprintln!("{}: pass ({})", command.name(), flags.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}: {}", command.name(), e.message());
            ExitCode::from(e.status())
        }
    }
}
