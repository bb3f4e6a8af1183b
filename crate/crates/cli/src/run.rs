//! The `run` subcommand: update sequences over a topology file, metrics CSV
//! per mode, optional trace dumps and in-memory verification.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use ezsegway::controller::{
    plan_update, run_centralized, run_decentralized, CompletionReport, Mode, UpdateInstance,
};
use ezsegway::model::NetworkConfig;
use ezsegway::verifier::check_properties;
use ezsegway::workload::{config_sequence, failure_reroute, load_topology, WorkloadParams};

use crate::{CliError, ModeArg, ProtocolFlags};

pub const METRICS_HEADER: &str = "update_idx,mode,completion_ms,messages,gtm_msgs,rm_msgs,splittable_deadlocks,unsplittable_deadlocks,extra_rules_mean,extra_rules_max,extra_msgs";

#[derive(Args)]
pub struct RunArgs {
    /// Topology file (JSON).
    #[arg(long)]
    pub topology: PathBuf,
    #[arg(long, value_enum, default_value = "ezsegway")]
    pub mode: ModeArg,
    /// Number of source/destination pairs; each spreads over three paths.
    #[arg(long, default_value_t = 60)]
    pub flows: usize,
    /// Number of configurations in the sequence (at least 1).
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub configs: u32,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Fraction of the average-capacity demand heuristic.
    #[arg(long, default_value_t = 0.7)]
    pub utilization: f64,
    /// Generate each update by failing links until this fraction of flows
    /// must be rerouted, instead of diffing consecutive configurations.
    #[arg(long)]
    pub reroute: Option<f64>,
    /// Emit one completion-time row per flow.
    #[arg(long)]
    pub per_flow: bool,
    /// Check every trace against the update properties.
    #[arg(long)]
    pub verify: bool,
    /// Write the event trace (and instance sidecar) of every run.
    #[arg(long)]
    pub dump_traces: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub flags: ProtocolFlags,
}

struct Row {
    update_idx: usize,
    mode: Mode,
    report: CompletionReport,
}

fn metrics_line(row: &Row) -> String {
    let r = &row.report;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        row.update_idx,
        row.mode.as_str(),
        r.completion_ms,
        r.messages,
        r.gtm_msgs,
        r.rm_msgs,
        r.splittable_deadlocks,
        r.unsplittable_deadlocks,
        r.extra_rules,
        r.extra_rules_max,
        r.extra_msgs,
    )
}

pub fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    if let Some(p) = args.reroute {
        if !(0.0 < p && p <= 1.0) {
            return Err(CliError::usage("--reroute must be in (0, 1]"));
        }
    }
    let topology = load_topology(&args.topology).map_err(|e| CliError::io(e.to_string()))?;
    let params = WorkloadParams {
        flow_pairs: args.flows,
        utilization: args.utilization,
        seed: args.seed,
    };
    let configs = config_sequence(&topology, args.configs as usize, &params)
        .map_err(|e| CliError::io(e.to_string()))?;

    // Update sequence: either failure-driven reroutes of each configuration,
    // or the diffs of the consecutive configurations starting from empty.
    let mut updates: Vec<(NetworkConfig, NetworkConfig)> = Vec::new();
    match args.reroute {
        Some(p) => {
            for (i, cfg) in configs.iter().enumerate() {
                let outcome =
                    failure_reroute(&topology, cfg, p, args.seed.wrapping_add(i as u64))
                        .map_err(|e| CliError::io(e.to_string()))?;
                updates.push((cfg.clone(), outcome.target));
            }
        }
        None => {
            let mut prev = NetworkConfig::new();
            for cfg in &configs {
                updates.push((prev, cfg.clone()));
                prev = cfg.clone();
            }
        }
    }

    let modes: Vec<Mode> = match args.mode {
        ModeArg::Ezsegway => vec![Mode::Decentralized],
        ModeArg::Centralized => vec![Mode::Centralized],
        ModeArg::Both => vec![Mode::Decentralized, Mode::Centralized],
    };

    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::io(format!("creating {}: {e}", args.out.display())))?;

    let mut rows: Vec<Row> = Vec::new();
    let mut per_flow_lines: Vec<String> = vec!["update_idx,mode,flow,completion_ms".into()];
    let mut violation_count = 0usize;
    for (idx, (current, target)) in updates.iter().enumerate() {
        let instance = UpdateInstance {
            topology: topology.clone(),
            current: current.clone(),
            target: target.clone(),
        };
        let plan = plan_update(&instance, &args.flags.plan_options())
            .map_err(|e| CliError::io(format!("planning update {idx}: {e}")))?;
        for mode in &modes {
            let settings = args.flags.settings();
            let report = match mode {
                Mode::Decentralized => run_decentralized(&plan, &topology, &settings),
                Mode::Centralized => run_centralized(&plan, &topology, &settings),
            }
            .map_err(|e| CliError::io(format!("update {idx}: {e}")))?;

            if args.verify {
                let violations =
                    check_properties(&instance, &report.trace, report.completed)
                        .map_err(|e| CliError::violation(format!("update {idx}: {e}")))?;
                for v in &violations {
                    eprintln!("update {idx} [{}]: {v}", mode.as_str());
                }
                violation_count += violations.len();
            }
            if args.per_flow {
                for (flow, ms) in &report.flow_completion_ms {
                    per_flow_lines.push(format!("{idx},{},{flow},{ms}", mode.as_str()));
                }
            }
            if args.dump_traces {
                let base = args.out.join(format!("trace_{}_{idx}", mode.as_str()));
                std::fs::write(base.with_extension("csv"), report.trace.to_csv())
                    .map_err(|e| CliError::io(e.to_string()))?;
                let sidecar = args.out.join(format!("instance_{idx}.json"));
                let json = serde_json::to_string_pretty(&instance)
                    .expect("instance serializes");
                std::fs::write(sidecar, json).map_err(|e| CliError::io(e.to_string()))?;
            }
            rows.push(Row { update_idx: idx, mode: *mode, report });
        }
    }

    for mode in &modes {
        let mut text = String::from(METRICS_HEADER);
        text.push('\n');
        for row in rows.iter().filter(|r| r.mode == *mode) {
            let _ = writeln!(text, "{}", metrics_line(row));
        }
        let name = format!("metrics_{}.csv", mode.as_str());
        std::fs::write(args.out.join(&name), text)
            .map_err(|e| CliError::io(e.to_string()))?;
        println!("wrote {}", args.out.join(&name).display());
    }
    if args.per_flow {
        let mut text = per_flow_lines.join("\n");
        text.push('\n');
        std::fs::write(args.out.join("flows.csv"), text)
            .map_err(|e| CliError::io(e.to_string()))?;
    }

    // Stdout summary: completions, deadlocks, and the mode message ratio.
    for mode in &modes {
        let mode_rows: Vec<&Row> = rows.iter().filter(|r| r.mode == *mode).collect();
        let completed = mode_rows.iter().filter(|r| r.report.completed).count();
        let msgs: u64 = mode_rows.iter().map(|r| r.report.messages).sum();
        let splits: u64 =
            mode_rows.iter().map(|r| r.report.splittable_deadlocks).sum();
        let stuck: u64 =
            mode_rows.iter().map(|r| r.report.unsplittable_deadlocks).sum();
        println!(
            "{}: {}/{} updates completed, {} coordination messages, {} splittable / {} unsplittable deadlocks",
            mode.as_str(),
            completed,
            mode_rows.len(),
            msgs,
            splits,
            stuck,
        );
    }
    if args.mode == ModeArg::Both {
        let total = |m: Mode| -> u64 {
            rows.iter().filter(|r| r.mode == m).map(|r| r.report.messages).sum()
        };
        let (ez, cen) = (total(Mode::Decentralized), total(Mode::Centralized));
        if cen > 0 {
            println!("message_ratio={}", ez as f64 / cen as f64);
        }
    }
    if violation_count > 0 {
        return Err(CliError::violation(format!("{violation_count} property violations")));
    }
    Ok(())
}
