//! Update planning and run orchestration.
//!
//! The controller diffs the two configurations, segments each flow update,
//! assigns priorities from the dependency graph, and packs one
//! `InstallUpdate` payload per involved switch. Execution then runs either
//! decentralized (switches message each other directly) or centralized
//! (every coordination hop is relayed as a switch-to-controller ack plus a
//! controller-to-switch command), over the same agent logic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::agent::{Agent, AgentConfig, AgentSnapshot, Effect, SegmentInfo};
use crate::depgraph::{assign_priorities, build_dependency_graph, DependencyGraph, Priority};
use crate::error::{PlanError, SimError};
use crate::model::{
    diff_update, link_loads, validate_config, FlowId, FlowUpdate, NetworkConfig, SwitchId,
    Topology, UpdateKind, VOL_EPS,
};
use crate::segmentation::{middlebox_guard, segment_flow, whole_flow_segment, Segment, SegmentId};
use crate::sim::{
    ms_to_ns, ns_to_ms, Actor, Message, MsgBody, Payload, SimKernel, SimTimeNs, Trace,
    TraceAction, LatencyModel,
};

/// A network update problem: where we are and where we want to be.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct UpdateInstance {
    pub topology: Topology,
    pub current: NetworkConfig,
    pub target: NetworkConfig,
}

#[derive(Debug, Clone, Default)]
pub struct PlanOptions {
    /// Disable to update every flow as a single whole-path segment.
    pub no_segmentation: bool,
    /// Flows whose policy forbids mixing old and new subpaths.
    pub middlebox_flows: BTreeSet<FlowId>,
}

/// Everything the switches need, computed once per update.
#[derive(Debug, Clone)]
pub struct UpdatePlan {
    /// All segments, including trivial ones kept for reporting.
    pub segments: Vec<Segment>,
    /// Segments that require protocol action.
    pub active: Vec<Segment>,
    pub priorities: BTreeMap<SegmentId, Priority>,
    pub graph: DependencyGraph,
    pub payloads: BTreeMap<SwitchId, Vec<SegmentInfo>>,
    /// Per switch: residual capacity of its outgoing links under `current`.
    pub residuals: BTreeMap<SwitchId, BTreeMap<SwitchId, f64>>,
    pub capacities: BTreeMap<SwitchId, BTreeMap<SwitchId, f64>>,
}

/// Segments of every flow update in the diff, ordinals rebased per flow.
/// Volume changes expand into a removal followed by an addition.
pub fn plan_segments(updates: &[FlowUpdate], options: &PlanOptions) -> Vec<Segment> {
    let mut out = Vec::new();
    for u in updates {
        let mut segs = Vec::new();
        match u.kind {
            UpdateKind::VolumeChange => {
                let remove = FlowUpdate {
                    kind: UpdateKind::Remove,
                    volume: u.old_volume,
                    new_path: Vec::new(),
                    ..u.clone()
                };
                let add = FlowUpdate {
                    kind: UpdateKind::Add,
                    old_volume: 0.0,
                    old_path: Vec::new(),
                    ..u.clone()
                };
                segs.push(whole_flow_segment(&remove));
                segs.push(whole_flow_segment(&add));
            }
            _ => {
                let segmented = !options.no_segmentation
                    && middlebox_guard(u, options.middlebox_flows.contains(&u.flow));
                if segmented {
                    segs = segment_flow(u);
                } else if u.old_path != u.new_path {
                    segs.push(whole_flow_segment(u));
                }
            }
        }
        // Ordinals already match vec order for heuristic output; the
        // rebase matters for the volume-change expansion above.
        for (i, seg) in segs.iter_mut().enumerate() {
            debug_assert!(seg.dep.is_none() || seg.id.index == i as u32);
            seg.id.index = i as u32;
        }
        out.extend(segs);
    }
    out
}

/// Non-trivial segments of an instance; test and tooling convenience.
pub fn active_segments(instance: &UpdateInstance, segmentation: bool) -> Vec<Segment> {
    let updates = diff_update(&instance.current, &instance.target);
    let options = PlanOptions { no_segmentation: !segmentation, ..Default::default() };
    plan_segments(&updates, &options)
        .into_iter()
        .filter(|s| !s.is_trivial())
        .collect()
}

fn payload_for(seg: &Segment, update_old: &[SwitchId], update_new: &[SwitchId]) -> Vec<(SwitchId, SegmentInfo)> {
    let mut out = Vec::new();
    let switches: BTreeSet<SwitchId> =
        seg.old_sub.iter().chain(seg.new_sub.iter()).copied().collect();
    for s in switches {
        let pn = seg.new_sub.iter().position(|x| *x == s);
        let po = seg.old_sub.iter().position(|x| *x == s);
        out.push((
            s,
            SegmentInfo {
                segment: seg.id.clone(),
                priority: Priority::Low,
                volume: seg.volume,
                prev_new: pn.and_then(|i| i.checked_sub(1)).map(|i| seg.new_sub[i]),
                next_new: pn.and_then(|i| seg.new_sub.get(i + 1)).copied(),
                prev_old: po.and_then(|i| i.checked_sub(1)).map(|i| seg.old_sub[i]),
                next_old: po.and_then(|i| seg.old_sub.get(i + 1)).copied(),
                on_new: pn.is_some(),
                on_old: po.is_some(),
                is_first_on_new: pn == Some(0),
                is_last_on_new: pn.map_or(false, |i| i + 1 == seg.new_sub.len()),
                is_first_on_old: po == Some(0),
                is_last_on_old: po.map_or(false, |i| i + 1 == seg.old_sub.len()),
                is_first_of_flow_old: update_old.first() == Some(&s),
                is_last_of_flow_old: update_old.last() == Some(&s),
                is_first_of_flow_new: update_new.first() == Some(&s),
                is_last_of_flow_new: update_new.last() == Some(&s),
                inloop_dep: seg.dep.clone(),
                dep_triggers: Vec::new(),
            },
        ));
    }
    out
}

/// Plans an update: diff, segmentation, priorities, per-switch payloads.
pub fn plan_update(
    instance: &UpdateInstance,
    options: &PlanOptions,
) -> Result<UpdatePlan, PlanError> {
    let current_viol = validate_config(&instance.topology, &instance.current);
    if let Some(v) = current_viol.first() {
        return Err(PlanError::InvalidCurrent(v.to_string()));
    }
    let target_viol = validate_config(&instance.topology, &instance.target);
    if let Some(v) = target_viol.first() {
        return Err(PlanError::InvalidTarget(v.to_string()));
    }

    let updates = diff_update(&instance.current, &instance.target);
    let segments = plan_segments(&updates, options);
    let active: Vec<Segment> =
        segments.iter().filter(|s| !s.is_trivial()).cloned().collect();
    let graph = build_dependency_graph(&active, &instance.topology, &instance.current)?;
    let priorities = assign_priorities(&graph);

    let update_paths: BTreeMap<&FlowId, (&[SwitchId], &[SwitchId])> = updates
        .iter()
        .map(|u| (&u.flow, (&u.old_path[..], &u.new_path[..])))
        .collect();

    let mut payloads: BTreeMap<SwitchId, Vec<SegmentInfo>> = BTreeMap::new();
    for seg in &active {
        let (fo, fn_) = update_paths
            .get(&seg.flow)
            .copied()
            .unwrap_or((&[], &[]));
        for (switch, mut info) in payload_for(seg, fo, fn_) {
            info.priority = priorities.get(&seg.id).copied().unwrap_or(Priority::Low);
            payloads.entry(switch).or_default().push(info);
        }
    }
    // Wire each InLoop segment's start trigger to its dependency's first
    // switch, which by construction ends the InLoop segment's new subpath.
    for seg in &active {
        if let Some(dep) = &seg.dep {
            let dep_seg = active
                .iter()
                .find(|s| &s.id == dep)
                .expect("dep names an active segment of the same flow");
            let trigger_switch = dep_seg.new_sub[0];
            debug_assert_eq!(seg.new_sub.last(), Some(&trigger_switch));
            let infos = payloads.get_mut(&trigger_switch).expect("trigger switch has payload");
            let dep_info = infos
                .iter_mut()
                .find(|i| &i.segment == dep)
                .expect("dep info at trigger switch");
            dep_info.dep_triggers.push(seg.id.clone());
        }
    }
    for infos in payloads.values_mut() {
        infos.sort_by(|a, b| a.segment.cmp(&b.segment));
    }

    let loads = link_loads(&instance.topology, &instance.current);
    let mut residuals: BTreeMap<SwitchId, BTreeMap<SwitchId, f64>> = BTreeMap::new();
    let mut capacities: BTreeMap<SwitchId, BTreeMap<SwitchId, f64>> = BTreeMap::new();
    for (key, link) in &instance.topology.links {
        residuals
            .entry(key.0)
            .or_default()
            .insert(key.1, (link.capacity - loads[key]).max(0.0));
        capacities.entry(key.0).or_default().insert(key.1, link.capacity);
    }

    Ok(UpdatePlan { segments, active, priorities, graph, payloads, residuals, capacities })
}

impl UpdatePlan {
    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// Human-readable segment table with priorities and dependencies.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            let prio = self
                .priorities
                .get(&seg.id)
                .map(|p| format!("{p:?}"))
                .unwrap_or_else(|| "-".into());
            let dep = seg
                .dep
                .as_ref()
                .map(|d| format!(" dep={d}"))
                .unwrap_or_default();
            let path = |p: &[SwitchId]| {
                p.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
            };
            let _ = writeln!(
                out,
                "{} {:?} vol={} old=({}) new=({}) prio={}{}{}",
                seg.id,
                seg.kind,
                seg.volume,
                path(&seg.old_sub),
                path(&seg.new_sub),
                prio,
                dep,
                if seg.is_trivial() { " [trivial]" } else { "" },
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Decentralized,
    Centralized,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Decentralized => "ezsegway",
            Mode::Centralized => "centralized",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimSettings {
    pub mode: Mode,
    /// Controller placement; `None` selects the centroid switch.
    pub controller: Option<SwitchId>,
    pub split_enabled: bool,
    pub deadlock_timeout_ms: f64,
    /// Processing delay a switch adds before emitting responses.
    pub compute_delay_ms: f64,
    pub max_time_ms: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            mode: Mode::Decentralized,
            controller: None,
            split_enabled: true,
            deadlock_timeout_ms: 150.0,
            compute_delay_ms: 0.0,
            max_time_ms: 600_000.0,
        }
    }
}

/// Outcome of one simulated update run.
#[derive(Debug, Clone)]
pub struct CompletionReport {
    pub mode: Mode,
    /// Every active segment completed and was acknowledged.
    pub completed: bool,
    /// The event queue drained before the time limit.
    pub quiescent: bool,
    /// Slowest flow completion (ack arrival at the controller), ms.
    pub completion_ms: f64,
    pub segment_completion_ms: BTreeMap<SegmentId, f64>,
    pub flow_completion_ms: BTreeMap<FlowId, f64>,
    /// Coordination transport legs (GoodToMove/Removing; centralized pays
    /// two legs per hop).
    pub messages: u64,
    pub gtm_msgs: u64,
    pub rm_msgs: u64,
    pub install_msgs: u64,
    pub ack_msgs: u64,
    pub splittable_deadlocks: u64,
    pub unsplittable_deadlocks: u64,
    /// Switch entries that held old and new state simultaneously.
    pub extra_rules: u64,
    /// Largest number of such entries at any single switch.
    pub extra_rules_max: u64,
    /// Coordination messages beyond the no-split baseline.
    pub extra_msgs: u64,
    pub trace: Trace,
}

struct RunState<'a> {
    plan: &'a UpdatePlan,
    settings: &'a SimSettings,
    kernel: SimKernel,
    latency: LatencyModel,
    agents: BTreeMap<SwitchId, Agent>,
    acked: BTreeMap<SegmentId, SimTimeNs>,
    gtm_msgs: u64,
    rm_msgs: u64,
    legs: u64,
    install_msgs: u64,
    ack_msgs: u64,
    splittable: BTreeSet<(SwitchId, SegmentId)>,
    unsplittable: BTreeSet<(SwitchId, SegmentId)>,
    extra_rules: BTreeSet<(SwitchId, SegmentId)>,
    halted: bool,
}

impl<'a> RunState<'a> {
    fn new(
        plan: &'a UpdatePlan,
        topology: &Topology,
        settings: &'a SimSettings,
    ) -> Result<Self, SimError> {
        let latency = LatencyModel::build(topology, settings.controller)?;
        let mut agents = BTreeMap::new();
        for s in topology.switches.iter() {
            let caps = plan.capacities.get(s).cloned().unwrap_or_default();
            let res = plan.residuals.get(s).cloned().unwrap_or_default();
            agents.insert(
                *s,
                Agent::new(*s, caps, res, AgentConfig { split_enabled: settings.split_enabled }),
            );
        }
        Ok(RunState {
            plan,
            settings,
            kernel: SimKernel::new(),
            latency,
            agents,
            acked: BTreeMap::new(),
            gtm_msgs: 0,
            rm_msgs: 0,
            legs: 0,
            install_msgs: 0,
            ack_msgs: 0,
            splittable: BTreeSet::new(),
            unsplittable: BTreeSet::new(),
            extra_rules: BTreeSet::new(),
            halted: false,
        })
    }

    fn broadcast_install(&mut self) -> Result<(), SimError> {
        for (switch, infos) in &self.plan.payloads {
            let delay = self.latency.latency_ns(Actor::Controller, Actor::Switch(*switch))?;
            self.kernel.record(
                Actor::Controller,
                TraceAction::Send,
                None,
                None,
                None,
            );
            self.install_msgs += 1;
            self.kernel.schedule(
                delay,
                Actor::Switch(*switch),
                Payload::Deliver(Message {
                    from: Actor::Controller,
                    to: Actor::Switch(*switch),
                    body: MsgBody::InstallUpdate { infos: infos.clone() },
                }),
            );
        }
        Ok(())
    }

    /// Routes one protocol message according to the coordination mode.
    fn send(&mut self, from: SwitchId, msg_to: SwitchId, body: MsgBody) -> Result<(), SimError> {
        match &body {
            MsgBody::GoodToMove { .. } => self.gtm_msgs += 1,
            MsgBody::Removing { .. } => self.rm_msgs += 1,
            _ => {}
        }
        let delay_send = ms_to_ns(self.settings.compute_delay_ms);
        self.kernel.record(
            Actor::Switch(from),
            TraceAction::Send,
            body.segment().cloned(),
            None,
            None,
        );
        let msg = Message { from: Actor::Switch(from), to: Actor::Switch(msg_to), body };
        match self.settings.mode {
            Mode::Decentralized => {
                let lat = self
                    .latency
                    .latency_ns(Actor::Switch(from), Actor::Switch(msg_to))?;
                self.legs += 1;
                self.kernel.schedule(
                    self.kernel.now() + delay_send + lat,
                    Actor::Switch(msg_to),
                    Payload::Deliver(msg),
                );
            }
            Mode::Centralized => {
                let lat = self.latency.latency_ns(Actor::Switch(from), Actor::Controller)?;
                self.legs += 1;
                self.kernel.schedule(
                    self.kernel.now() + delay_send + lat,
                    Actor::Controller,
                    Payload::Relay(msg),
                );
            }
        }
        Ok(())
    }

    fn apply_effects(&mut self, switch: SwitchId, effects: Vec<Effect>) -> Result<(), SimError> {
        for e in effects {
            match e {
                Effect::Send { to, body } => self.send(switch, to, body)?,
                Effect::Ack { segment } => {
                    self.ack_msgs += 1;
                    let lat =
                        self.latency.latency_ns(Actor::Switch(switch), Actor::Controller)?;
                    let delay = ms_to_ns(self.settings.compute_delay_ms);
                    self.kernel.record(
                        Actor::Switch(switch),
                        TraceAction::Send,
                        Some(segment.clone()),
                        None,
                        None,
                    );
                    self.kernel.schedule(
                        self.kernel.now() + delay + lat,
                        Actor::Controller,
                        Payload::Deliver(Message {
                            from: Actor::Switch(switch),
                            to: Actor::Controller,
                            body: MsgBody::Ack { segment },
                        }),
                    );
                }
                Effect::ArmTimer { segment, generation } => {
                    let at = self.kernel.now() + ms_to_ns(self.settings.deadlock_timeout_ms);
                    self.kernel.schedule(
                        at,
                        Actor::Switch(switch),
                        Payload::TimerFire { segment, generation },
                    );
                }
                Effect::Record { action, segment, link, volume } => {
                    // A partial install at a switch that still owns the old
                    // entry means both rules are active at once.
                    if action == TraceAction::InstallRule {
                        if let (Some(seg), Some(weight)) = (&segment, volume) {
                            if let Some(s) = self.plan.active.iter().find(|s| &s.id == seg) {
                                let has_old = s
                                    .old_sub
                                    .iter()
                                    .position(|x| *x == switch)
                                    .map_or(false, |i| i + 1 < s.old_sub.len());
                                if has_old && weight < s.volume - VOL_EPS {
                                    self.extra_rules.insert((switch, seg.clone()));
                                }
                            }
                        }
                    }
                    self.kernel.record(Actor::Switch(switch), action, segment, link, volume);
                }
                Effect::DeadlockReport { segment, splittable } => {
                    if splittable {
                        self.splittable.insert((switch, segment));
                    } else {
                        self.unsplittable.insert((switch, segment));
                    }
                }
            }
        }
        Ok(())
    }

    fn dispatch(&mut self, target: Actor, payload: Payload) -> Result<(), SimError> {
        match (target, payload) {
            (Actor::Controller, Payload::Relay(msg)) => {
                // Centralized relay: the controller forwards the message to
                // its destination as a fresh command.
                self.kernel.record(
                    Actor::Controller,
                    TraceAction::Recv,
                    msg.body.segment().cloned(),
                    None,
                    None,
                );
                let lat = self.latency.latency_ns(Actor::Controller, msg.to)?;
                self.legs += 1;
                self.kernel.record(
                    Actor::Controller,
                    TraceAction::Send,
                    msg.body.segment().cloned(),
                    None,
                    None,
                );
                self.kernel
                    .schedule(self.kernel.now() + lat, msg.to, Payload::Deliver(msg));
            }
            (Actor::Controller, Payload::Deliver(msg)) => {
                self.kernel.record(
                    Actor::Controller,
                    TraceAction::Recv,
                    msg.body.segment().cloned(),
                    None,
                    None,
                );
                if let MsgBody::Ack { segment } = msg.body {
                    self.acked.entry(segment).or_insert(self.kernel.now());
                }
            }
            (Actor::Controller, Payload::FailureInjection) => {
                self.halted = true;
            }
            (Actor::Switch(s), Payload::Deliver(msg)) => {
                self.kernel.record(
                    Actor::Switch(s),
                    TraceAction::Recv,
                    msg.body.segment().cloned(),
                    None,
                    None,
                );
                let agent = self.agents.get_mut(&s).expect("agent exists");
                let effects = match msg.body {
                    MsgBody::InstallUpdate { infos } => agent.handle_install_update(infos),
                    MsgBody::GoodToMove { segment, volume } => {
                        agent.handle_good_to_move(&segment, volume)?
                    }
                    MsgBody::Removing { segment, volume } => {
                        agent.handle_removing(&segment, volume)?
                    }
                    MsgBody::Ack { .. } => Vec::new(),
                };
                self.apply_effects(s, effects)?;
            }
            (Actor::Switch(s), Payload::TimerFire { segment, generation }) => {
                let agent = self.agents.get_mut(&s).expect("agent exists");
                let effects = agent.handle_timer(&segment, generation);
                self.apply_effects(s, effects)?;
            }
            (actor, payload) => {
                return Err(SimError::Protocol {
                    actor: actor.to_string(),
                    detail: format!("unroutable payload {payload:?}"),
                })
            }
        }
        Ok(())
    }

    fn run_until(&mut self, max_time: SimTimeNs) -> Result<(), SimError> {
        while let Some(ev) = self.kernel.pop(max_time) {
            if self.halted {
                break;
            }
            self.dispatch(ev.target, ev.payload)?;
        }
        Ok(())
    }

    fn report(self) -> CompletionReport {
        let plan = self.plan;
        let mut segment_completion_ms = BTreeMap::new();
        let mut flow_completion_ms: BTreeMap<FlowId, f64> = BTreeMap::new();
        for seg in &plan.active {
            if let Some(t) = self.acked.get(&seg.id) {
                let ms = ns_to_ms(*t);
                segment_completion_ms.insert(seg.id.clone(), ms);
                let entry = flow_completion_ms.entry(seg.flow.clone()).or_insert(0.0);
                if ms > *entry {
                    *entry = ms;
                }
            }
        }
        let completed = plan.active.iter().all(|s| self.acked.contains_key(&s.id));
        let completion_ms = if completed {
            flow_completion_ms.values().fold(0.0_f64, |a, b| a.max(*b))
        } else {
            ns_to_ms(self.kernel.now())
        };
        let baseline: u64 = plan
            .active
            .iter()
            .map(|s| {
                (s.new_sub.len().saturating_sub(1) + s.old_sub.len().saturating_sub(1)) as u64
            })
            .sum();
        let logical = self.gtm_msgs + self.rm_msgs;
        let extra_rules_max = {
            let mut per_switch: BTreeMap<SwitchId, u64> = BTreeMap::new();
            for (s, _) in &self.extra_rules {
                *per_switch.entry(*s).or_insert(0) += 1;
            }
            per_switch.values().copied().max().unwrap_or(0)
        };
        CompletionReport {
            mode: self.settings.mode,
            completed,
            quiescent: self.kernel.is_quiescent(),
            completion_ms,
            segment_completion_ms,
            flow_completion_ms,
            messages: self.legs,
            gtm_msgs: self.gtm_msgs,
            rm_msgs: self.rm_msgs,
            install_msgs: self.install_msgs,
            ack_msgs: self.ack_msgs,
            splittable_deadlocks: self.splittable.len() as u64,
            unsplittable_deadlocks: self.unsplittable.len() as u64,
            extra_rules: self.extra_rules.len() as u64,
            extra_rules_max,
            extra_msgs: logical.saturating_sub(baseline),
            trace: self.kernel.trace,
        }
    }
}

fn run(
    plan: &UpdatePlan,
    topology: &Topology,
    settings: &SimSettings,
) -> Result<CompletionReport, SimError> {
    let mut state = RunState::new(plan, topology, settings)?;
    state.broadcast_install()?;
    state.run_until(ms_to_ns(settings.max_time_ms))?;
    Ok(state.report())
}

/// Runs the plan with switch-to-switch coordination.
pub fn run_decentralized(
    plan: &UpdatePlan,
    topology: &Topology,
    settings: &SimSettings,
) -> Result<CompletionReport, SimError> {
    let settings = SimSettings { mode: Mode::Decentralized, ..settings.clone() };
    run(plan, topology, &settings)
}

/// Runs the plan with every coordination hop relayed through the controller.
pub fn run_centralized(
    plan: &UpdatePlan,
    topology: &Topology,
    settings: &SimSettings,
) -> Result<CompletionReport, SimError> {
    let settings = SimSettings { mode: Mode::Centralized, ..settings.clone() };
    run(plan, topology, &settings)
}

/// Recovered switch state after halting an update.
#[derive(Debug, Clone)]
pub struct RecoveredState {
    pub halted_at_ms: f64,
    pub snapshots: BTreeMap<SwitchId, AgentSnapshot>,
}

/// Runs until `fail_at_ms`, then halts the update and queries every switch
/// for the operations it performed. The snapshot feeds replanning.
pub fn halt_and_query(
    plan: &UpdatePlan,
    topology: &Topology,
    settings: &SimSettings,
    fail_at_ms: f64,
) -> Result<(CompletionReport, RecoveredState), SimError> {
    let mut state = RunState::new(plan, topology, settings)?;
    state.broadcast_install()?;
    state.kernel.schedule(
        ms_to_ns(fail_at_ms),
        Actor::Controller,
        Payload::FailureInjection,
    );
    state.run_until(ms_to_ns(settings.max_time_ms))?;
    let snapshots: BTreeMap<SwitchId, AgentSnapshot> = state
        .agents
        .iter()
        .map(|(s, a)| (*s, a.query_state()))
        .collect();
    let halted_at_ms = ns_to_ms(state.kernel.now());
    let report = state.report();
    Ok((report, RecoveredState { halted_at_ms, snapshots }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    #[test]
    fn plan_fig1_splits_updated_flows_at_s3() {
        let inst = scenarios::fig1();
        let plan = plan_update(&inst, &PlanOptions::default()).unwrap();
        assert_eq!(plan.active.len(), 4);
        for flow in ["R", "B"] {
            let starts: Vec<SwitchId> = plan
                .active
                .iter()
                .filter(|s| s.flow.0 == flow)
                .map(|s| s.old_sub[0])
                .collect();
            assert!(starts.contains(&SwitchId(2)), "{flow} has a segment at s2");
            assert!(starts.contains(&SwitchId(3)), "{flow} has a segment at s3");
        }
    }

    #[test]
    fn plan_identity_is_empty() {
        let inst = scenarios::fig1();
        let identity = UpdateInstance {
            topology: inst.topology.clone(),
            current: inst.current.clone(),
            target: inst.current.clone(),
        };
        let plan = plan_update(&identity, &PlanOptions::default()).unwrap();
        assert!(plan.is_empty());
    }

    #[test]
    fn plan_fig4_orders_red_above_green() {
        let inst = scenarios::fig4();
        let plan = plan_update(&inst, &PlanOptions::default()).unwrap();
        let prio = |flow: &str| {
            plan.priorities
                .iter()
                .find(|(id, _)| id.flow.0 == flow)
                .map(|(_, p)| *p)
                .unwrap()
        };
        assert!(prio("R") > prio("G"));
    }

    #[test]
    fn plan_rejects_overloaded_target() {
        let inst = scenarios::fig1();
        let mut bad = inst.clone();
        bad.target.insert(crate::model::Flow::new(
            "X",
            20.0,
            vec![SwitchId(1), SwitchId(2)],
        ));
        assert!(matches!(
            plan_update(&bad, &PlanOptions::default()),
            Err(PlanError::InvalidTarget(_))
        ));
    }

    #[test]
    fn empty_plan_completes_immediately() {
        let inst = scenarios::fig1();
        let identity = UpdateInstance {
            topology: inst.topology.clone(),
            current: inst.current.clone(),
            target: inst.current.clone(),
        };
        let plan = plan_update(&identity, &PlanOptions::default()).unwrap();
        let report =
            run_decentralized(&plan, &identity.topology, &SimSettings::default()).unwrap();
        assert!(report.completed);
        assert_eq!(report.completion_ms, 0.0);
        assert_eq!(report.messages, 0);
    }
}
