//! Experiment driver: runs update sequences in decentralized and centralized
//! modes, reproduces the canonical scenarios, verifies traces, and
//! summarizes metrics.
//!
//! Exit codes: 0 success, 1 assertion or property violation, 2 usage error,
//! 3 I/O error.

use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod run;
mod scenario;
mod stats;
mod verify;

#[derive(Parser)]
#[command(name = "ezsegway", version, about = "Decentralized consistent network updates, simulated")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Ezsegway,
    Centralized,
    Both,
}

/// Flags shared by everything that executes the protocol.
#[derive(clap::Args, Clone)]
pub struct ProtocolFlags {
    /// Disable flow splitting on deadlocks.
    #[arg(long)]
    pub no_split: bool,
    /// Update whole flows instead of segments.
    #[arg(long)]
    pub no_segmentation: bool,
    /// Deadlock detection timeout in simulated milliseconds.
    #[arg(long, default_value_t = 150.0)]
    pub timeout_ms: f64,
    /// Per-message switch compute delay in milliseconds (3.4 mirrors the
    /// measured on-switch processing time).
    #[arg(long, default_value_t = 0.0)]
    pub compute_delay_ms: f64,
    /// Controller placement (switch id); defaults to the centroid switch.
    #[arg(long)]
    pub controller: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an update sequence on a topology and emit metrics CSV.
    Run(run::RunArgs),
    /// Reproduce a canonical scenario and assert its documented outcome.
    Scenario(scenario::ScenarioArgs),
    /// Check a dumped trace against the update properties.
    Verify(verify::VerifyArgs),
    /// Summarize a metrics file: percentiles, speedups, overheads.
    Stats(stats::StatsArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run::cmd_run(args),
        Command::Scenario(args) => scenario::cmd_scenario(args),
        Command::Verify(args) => verify::cmd_verify(args),
        Command::Stats(args) => stats::cmd_stats(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

/// Error carrying the process exit code.
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn violation(message: impl Into<String>) -> Self {
        CliError { code: 1, message: message.into() }
    }
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }
    pub fn io(message: impl Into<String>) -> Self {
        CliError { code: 3, message: message.into() }
    }
}

impl ProtocolFlags {
    pub fn plan_options(&self) -> ezsegway::PlanOptions {
        ezsegway::PlanOptions {
            no_segmentation: self.no_segmentation,
            ..Default::default()
        }
    }

    pub fn settings(&self) -> ezsegway::SimSettings {
        ezsegway::SimSettings {
            controller: self.controller.map(ezsegway::SwitchId),
            split_enabled: !self.no_split,
            deadlock_timeout_ms: self.timeout_ms,
            compute_delay_ms: self.compute_delay_ms,
            ..Default::default()
        }
    }
}
