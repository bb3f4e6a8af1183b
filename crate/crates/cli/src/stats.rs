//! The `stats` subcommand: percentile and overhead summary of a metrics
//! file, with speedup ratios when both modes are present.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;

use crate::run::METRICS_HEADER;
use crate::CliError;

#[derive(Args)]
pub struct StatsArgs {
    /// One or more metrics CSV files written by `run`.
    #[arg(required = true)]
    pub metrics: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
struct MetricsRow {
    mode: String,
    completion_ms: f64,
    messages: u64,
    splittable: u64,
    unsplittable: u64,
    extra_rules: f64,
    extra_rules_max: f64,
    extra_msgs: f64,
}

fn parse_rows(path: &PathBuf) -> Result<Vec<MetricsRow>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == METRICS_HEADER => {}
        _ => return Err(CliError::io(format!("{}: not a metrics file", path.display()))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 11 {
            return Err(CliError::io(format!("{}: line {}: bad field count", path.display(), i + 2)));
        }
        let num = |s: &str| -> Result<f64, CliError> {
            s.parse()
                .map_err(|_| CliError::io(format!("{}: line {}: bad number {s}", path.display(), i + 2)))
        };
        rows.push(MetricsRow {
            mode: f[1].to_string(),
            completion_ms: num(f[2])?,
            messages: num(f[3])? as u64,
            splittable: num(f[6])? as u64,
            unsplittable: num(f[7])? as u64,
            extra_rules: num(f[8])?,
            extra_rules_max: num(f[9])?,
            extra_msgs: num(f[10])?,
        });
    }
    if rows.is_empty() {
        return Err(CliError::io(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}

/// Nearest-rank percentile of a sorted slice.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn cmd_stats(args: StatsArgs) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for path in &args.metrics {
        rows.extend(parse_rows(path)?);
    }
    let mut by_mode: BTreeMap<String, Vec<MetricsRow>> = BTreeMap::new();
    for r in rows {
        by_mode.entry(r.mode.clone()).or_default().push(r);
    }

    let mut pcts: BTreeMap<String, (f64, f64, f64)> = BTreeMap::new();
    for (mode, rows) in &by_mode {
        let mut times: Vec<f64> = rows.iter().map(|r| r.completion_ms).collect();
        times.sort_by(|a, b| a.total_cmp(b));
        let (p50, p90, p99) = (
            percentile(&times, 50.0),
            percentile(&times, 90.0),
            percentile(&times, 99.0),
        );
        pcts.insert(mode.clone(), (p50, p90, p99));
        let msgs: u64 = rows.iter().map(|r| r.messages).sum();
        let splits: u64 = rows.iter().map(|r| r.splittable).sum();
        let stuck: u64 = rows.iter().map(|r| r.unsplittable).sum();
        println!("{mode}: n={}", rows.len());
        println!("  completion_ms p50={p50} p90={p90} p99={p99}");
        println!("  messages={msgs} splittable_deadlocks={splits} unsplittable_deadlocks={stuck}");
        let mean = |f: fn(&MetricsRow) -> f64| {
            rows.iter().map(f).sum::<f64>() / rows.len() as f64
        };
        let max = |f: fn(&MetricsRow) -> f64| {
            rows.iter().map(f).fold(0.0_f64, f64::max)
        };
        println!(
            "  splitting overhead: rules mean={} max={} (per-switch max {}), messages mean={} max={}",
            mean(|r| r.extra_rules),
            max(|r| r.extra_rules),
            max(|r| r.extra_rules_max),
            mean(|r| r.extra_msgs),
            max(|r| r.extra_msgs),
        );
    }

    if let (Some(ez), Some(cen)) = (pcts.get("ezsegway"), pcts.get("centralized")) {
        println!("speedup (centralized / ezsegway):");
        println!(
            "  p50={} p90={} p99={}",
            cen.0 / ez.0,
            cen.1 / ez.1,
            cen.2 / ez.2
        );
        let total = |mode: &str| -> u64 {
            by_mode[mode].iter().map(|r| r.messages).sum()
        };
        let (me, mc) = (total("ezsegway"), total("centralized"));
        if mc > 0 {
            println!("  message_ratio={}", me as f64 / mc as f64);
        }
    }
    Ok(())
}
