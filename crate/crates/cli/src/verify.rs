//! The `verify` subcommand: replays a dumped trace against its instance
//! sidecar and reports property violations.

use std::path::PathBuf;

use clap::Args;
use ezsegway::controller::UpdateInstance;
use ezsegway::sim::Trace;
use ezsegway::verifier::check_properties;

use crate::CliError;

#[derive(Args)]
pub struct VerifyArgs {
    /// Trace CSV written by `run --dump-traces` or `scenario`.
    pub trace: PathBuf,
    /// Instance sidecar (topology + current + target configuration).
    #[arg(long)]
    pub instance: PathBuf,
    /// Also require the final state to equal the target configuration.
    #[arg(long)]
    pub expect_complete: bool,
}

pub fn cmd_verify(args: VerifyArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.trace)
        .map_err(|e| CliError::io(format!("{}: {e}", args.trace.display())))?;
    let trace = Trace::from_csv(&text)
        .map_err(|e| CliError::io(format!("{}: {e}", args.trace.display())))?;
    let instance_text = std::fs::read_to_string(&args.instance)
        .map_err(|e| CliError::io(format!("{}: {e}", args.instance.display())))?;
    let instance: UpdateInstance = serde_json::from_str(&instance_text)
        .map_err(|e| CliError::io(format!("{}: {e}", args.instance.display())))?;

    let violations = check_properties(&instance, &trace, args.expect_complete)
        .map_err(|e| CliError::violation(e.to_string()))?;
    if violations.is_empty() {
        println!("ok: {} records, no violations", trace.records.len());
        Ok(())
    } else {
        for v in &violations {
            println!("{v}");
        }
        Err(CliError::violation(format!("{} violations", violations.len())))
    }
}
