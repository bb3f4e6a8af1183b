//! The `scenario` subcommand: canonical regression scenarios with their
//! documented outcomes asserted.

use clap::Args;
use ezsegway::controller::{
    plan_update, run_decentralized, SimSettings, UpdateInstance, UpdatePlan,
};
use ezsegway::depgraph::Priority;
use ezsegway::model::{FlowId, FlowUpdate, SwitchId};
use ezsegway::scenarios;
use ezsegway::segmentation::{segment_flow, SegmentKind};
use ezsegway::sim::{ns_to_ms, Actor, TraceAction};
use ezsegway::verifier::check_properties;
use ezsegway::CompletionReport;

use crate::{CliError, ProtocolFlags};

#[derive(Args)]
pub struct ScenarioArgs {
    /// One of: fig1, fig2, fig3, fig4, fig5a, fig5b, fig5c.
    pub name: String,
    #[command(flatten)]
    pub flags: ProtocolFlags,
}

pub fn cmd_scenario(args: ScenarioArgs) -> Result<(), CliError> {
    match args.name.as_str() {
        "fig1" => fig1(&args.flags),
        "fig2" => fig2(&args.flags),
        "fig3" => fig3(&args.flags),
        "fig4" => fig4(&args.flags),
        "fig5a" => fig5(scenarios::fig5a(), "fig5a", None),
        "fig5b" => fig5(scenarios::fig5b(), "fig5b", None),
        "fig5c" => fig5(scenarios::fig5c(), "fig5c", Some(fig5c_expectations)),
        other => Err(CliError::usage(format!("unknown scenario {other}"))),
    }
}

fn narrate(report: &CompletionReport) {
    for r in &report.trace.records {
        match r.action {
            TraceAction::InstallRule
            | TraceAction::RemoveRule
            | TraceAction::Split
            | TraceAction::DeadlockDetected
            | TraceAction::Complete => {
                let seg = r.segment.as_ref().map(|s| s.to_string()).unwrap_or_default();
                let link = r
                    .link
                    .map(|(a, b)| format!(" {a}->{b}"))
                    .unwrap_or_default();
                let vol = r.volume.map(|v| format!(" vol={v}")).unwrap_or_default();
                println!(
                    "  t={:>7.3} ms  {:<4} {:<18} {}{}{}",
                    ns_to_ms(r.time_ns),
                    r.actor.to_string(),
                    format!("{:?}", r.action),
                    seg,
                    link,
                    vol
                );
            }
            _ => {}
        }
    }
    println!(
        "  completed={} messages={} splittable={} unsplittable={} extra_rules={}",
        report.completed,
        report.messages,
        report.splittable_deadlocks,
        report.unsplittable_deadlocks,
        report.extra_rules,
    );
}

fn check(name: &str, ok: bool, detail: &str) -> Result<(), CliError> {
    if ok {
        println!("  [ok] {detail}");
        Ok(())
    } else {
        Err(CliError::violation(format!("{name}: {detail}")))
    }
}

fn run_instance(
    inst: &UpdateInstance,
    flags: &ProtocolFlags,
) -> Result<(UpdatePlan, CompletionReport), CliError> {
    let plan = plan_update(inst, &flags.plan_options())
        .map_err(|e| CliError::violation(e.to_string()))?;
    let report = run_decentralized(&plan, &inst.topology, &flags.settings())
        .map_err(|e| CliError::violation(e.to_string()))?;
    Ok((plan, report))
}

fn verify_clean(
    name: &str,
    inst: &UpdateInstance,
    report: &CompletionReport,
) -> Result<(), CliError> {
    let violations = check_properties(inst, &report.trace, report.completed)
        .map_err(|e| CliError::violation(format!("{name}: {e}")))?;
    for v in &violations {
        eprintln!("  violation: {v}");
    }
    check(name, violations.is_empty(), "zero property violations")
}

fn fig1(flags: &ProtocolFlags) -> Result<(), CliError> {
    println!("fig1: parallel segmented update of the red and blue flows");
    let inst = scenarios::fig1();
    let (plan, report) = run_instance(&inst, flags)?;
    print!("{}", plan.dump());
    narrate(&report);
    check("fig1", report.completed, "update completes")?;
    verify_clean("fig1", &inst, &report)?;

    // Critical path: dissemination (controller at the centroid s3, one hop to
    // s2) plus one s2<->s6 round trip, all over 1 ms links.
    let settings: SimSettings = flags.settings();
    if settings.controller.is_none() && settings.compute_delay_ms == 0.0 {
        let last_change = report
            .trace
            .records
            .iter()
            .filter(|r| {
                matches!(r.action, TraceAction::InstallRule | TraceAction::RemoveRule)
            })
            .map(|r| r.time_ns)
            .max()
            .unwrap_or(0);
        check(
            "fig1",
            last_change == ezsegway::sim::ms_to_ns(3.0),
            "critical path = dissemination + one s2<->s6 round trip (3 ms)",
        )?;
    }
    Ok(())
}

fn fig2(flags: &ProtocolFlags) -> Result<(), CliError> {
    println!("fig2: segment deadlock; segmentation dissolves it");
    let inst = scenarios::fig2();
    let (plan, report) = run_instance(&inst, flags)?;
    print!("{}", plan.dump());
    narrate(&report);
    if flags.no_segmentation {
        check("fig2", !report.completed, "whole-flow update cannot complete")?;
        check(
            "fig2",
            report.unsplittable_deadlocks > 0,
            "reports an unsplittable deadlock",
        )?;
        verify_clean("fig2", &inst, &report)?;
    } else {
        check("fig2", report.completed, "segmented update completes")?;
        check(
            "fig2",
            report.splittable_deadlocks + report.unsplittable_deadlocks == 0,
            "no deadlocks with segmentation",
        )?;
        verify_clean("fig2", &inst, &report)?;
    }
    Ok(())
}

fn fig3(flags: &ProtocolFlags) -> Result<(), CliError> {
    println!("fig3: splittable deadlock on the s2 side");
    let inst = scenarios::fig3();
    let (plan, report) = run_instance(&inst, flags)?;
    print!("{}", plan.dump());
    narrate(&report);
    if flags.no_split {
        check("fig3", !report.completed, "cannot complete without splitting")?;
        check(
            "fig3",
            report.splittable_deadlocks > 0 && report.unsplittable_deadlocks == 0,
            "reports a splittable deadlock",
        )?;
        verify_clean("fig3", &inst, &report)?;
    } else {
        check("fig3", report.completed, "completes by splitting")?;
        let first_split = report
            .trace
            .records
            .iter()
            .find(|r| r.action == TraceAction::Split);
        let ok = first_split.is_some_and(|r| {
            r.actor == Actor::Switch(SwitchId(2))
                && r.segment.as_ref().map(|s| s.flow.0.as_str()) == Some("B")
                && r.volume == Some(2.0)
        });
        check("fig3", ok, "first split moves exactly 2 units of B at s2")?;
        verify_clean("fig3", &inst, &report)?;
    }
    Ok(())
}

fn fig4(flags: &ProtocolFlags) -> Result<(), CliError> {
    println!("fig4: scheduling by criticality; R must precede G");
    let inst = scenarios::fig4();
    let (plan, report) = run_instance(&inst, flags)?;
    print!("{}", plan.dump());
    narrate(&report);
    check("fig4", report.completed, "update completes")?;
    check(
        "fig4",
        report.splittable_deadlocks + report.unsplittable_deadlocks == 0,
        "no splitting needed",
    )?;
    let prio = |flow: &str| {
        plan.priorities
            .iter()
            .find(|(id, _)| id.flow.0 == flow)
            .map(|(_, p)| *p)
    };
    check(
        "fig4",
        prio("R") == Some(Priority::High) && prio("G") == Some(Priority::Medium),
        "pi_R is High, pi_G is Medium",
    )?;
    let install_on_l26 = |flow: &str| {
        report
            .trace
            .records
            .iter()
            .find(|r| {
                r.action == TraceAction::InstallRule
                    && r.link == Some((SwitchId(2), SwitchId(6)))
                    && r.segment.as_ref().map(|s| s.flow.0.as_str()) == Some(flow)
            })
            .map(|r| r.time_ns)
    };
    let ok = match (install_on_l26("R"), install_on_l26("G")) {
        (Some(r), Some(g)) => r < g,
        _ => false,
    };
    check("fig4", ok, "pi_R executes before pi_G on l2,6")?;
    verify_clean("fig4", &inst, &report)
}

type Fig5Check = fn(&[ezsegway::Segment]) -> Result<(), CliError>;

fn fig5(update: FlowUpdate, name: &str, extra: Option<Fig5Check>) -> Result<(), CliError> {
    let path = |p: &[SwitchId]| {
        p.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
    };
    println!("{name}: segmentation of ({}) -> ({})", path(&update.old_path), path(&update.new_path));
    let segments = segment_flow(&update);
    for (i, s) in segments.iter().enumerate() {
        let dep = s
            .dep
            .as_ref()
            .and_then(|d| segments.iter().position(|t| &t.id == d))
            .map(|j| format!(" dep(S{})=S{}", i + 1, j + 1))
            .unwrap_or_default();
        println!(
            "  S{}=({}; {}) {:?}{}{}",
            i + 1,
            path(&s.old_sub),
            path(&s.new_sub),
            s.kind,
            dep,
            if s.is_trivial() { " [trivial]" } else { "" },
        );
    }
    if let Some(f) = extra {
        f(&segments)?;
    }
    Ok(())
}

fn fig5c_expectations(segments: &[ezsegway::Segment]) -> Result<(), CliError> {
    let sw = |ids: &[u32]| ids.iter().map(|i| SwitchId(*i)).collect::<Vec<_>>();
    let expected: [(&[u32], &[u32], SegmentKind); 5] = [
        (&[1, 2, 3], &[1, 9, 5], SegmentKind::NotInLoop),
        (&[4, 5], &[4, 6], SegmentKind::NotInLoop),
        (&[0, 1], &[0, 7, 3], SegmentKind::NotInLoop),
        (&[3, 4], &[3, 2, 8, 1], SegmentKind::InLoop),
        (&[5, 6], &[5, 10, 4], SegmentKind::InLoop),
    ];
    check("fig5c", segments.len() == 5, "exactly five segments")?;
    for (i, (old, new, kind)) in expected.iter().enumerate() {
        let s = &segments[i];
        check(
            "fig5c",
            s.old_sub == sw(old) && s.new_sub == sw(new) && s.kind == *kind,
            &format!("S{} matches", i + 1),
        )?;
    }
    let dep_of = |i: usize| {
        segments[i]
            .dep
            .as_ref()
            .and_then(|d| segments.iter().position(|t| &t.id == d))
    };
    check("fig5c", dep_of(3) == Some(0), "dep(S4) = S1")?;
    check("fig5c", dep_of(4) == Some(1), "dep(S5) = S2")?;
    // The dependencies keep every interleaving loop- and black-hole-free.
    let update = scenarios::fig5c();
    let anomaly = ezsegway::verifier::explore_segment_interleavings(
        &FlowId::new("F"),
        1.0,
        &update.old_path,
        &update.new_path,
        segments,
    );
    check("fig5c", anomaly.is_none(), "all interleavings anomaly-free")
}
