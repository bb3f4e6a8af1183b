//! Trace oracle for the three update properties (black-hole, loop and
//! congestion freedom) plus termination, and an exhaustive feasibility
//! search for small instances.
//!
//! The verifier replays a trace into per-flow forwarding states and checks
//! every state reached at a handler boundary: records emitted by one handler
//! invocation share a timestamp and actor and are applied atomically.
//! `install_rule` and `remove_rule` records carry resulting entry weights,
//! so replay needs no knowledge of the plan.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use crate::controller::UpdateInstance;
use crate::error::VerifyError;
use crate::model::{
    link_loads, vol_eq, FlowId, LinkKey, NetworkConfig, SwitchId, Topology, VOL_EPS,
};
use crate::segmentation::{Segment, SegmentId};
use crate::sim::{ns_to_ms, Trace, TraceAction, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViolationKind {
    BlackHole,
    Loop,
    Congestion,
    NonTermination,
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub kind: ViolationKind,
    pub time_ms: f64,
    pub flow: Option<FlowId>,
    pub link: Option<LinkKey>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at {} ms", self.kind, self.time_ms)?;
        if let Some(flow) = &self.flow {
            write!(f, " flow {flow}")?;
        }
        if let Some((a, b)) = self.link {
            write!(f, " link {a}->{b}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

/// A switch's forwarding entry for one flow: an old-path share and a
/// new-path share, each a weighted next hop. A flow visits a switch at most
/// once per configuration, so one slot per side suffices; both can be live
/// at once when different segments of the flow touch the same switch or
/// while a split is in flight.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntrySides {
    pub old: Option<(SwitchId, f64)>,
    pub new: Option<(SwitchId, f64)>,
}

impl EntrySides {
    /// Combined next-hop weights of both sides.
    pub fn hops(&self) -> BTreeMap<SwitchId, f64> {
        let mut out = BTreeMap::new();
        for (next, w) in [self.old, self.new].into_iter().flatten() {
            if w > VOL_EPS {
                *out.entry(next).or_insert(0.0) += w;
            }
        }
        out
    }

    fn is_empty(&self) -> bool {
        self.hops().is_empty()
    }
}

/// Per-flow forwarding entries, switch by switch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ForwardingState {
    pub entries: BTreeMap<FlowId, BTreeMap<SwitchId, EntrySides>>,
}

impl ForwardingState {
    pub fn from_config(config: &NetworkConfig) -> Self {
        let mut state = ForwardingState::default();
        for flow in config.flows.values() {
            for w in flow.path.windows(2) {
                state.set_old(&flow.id, w[0], w[1], flow.volume);
            }
        }
        state
    }

    pub fn set_old(&mut self, flow: &FlowId, at: SwitchId, next: SwitchId, weight: f64) {
        let sides = self
            .entries
            .entry(flow.clone())
            .or_default()
            .entry(at)
            .or_default();
        sides.old = (weight > VOL_EPS).then_some((next, weight));
        self.prune(flow, at);
    }

    pub fn set_new(&mut self, flow: &FlowId, at: SwitchId, next: SwitchId, weight: f64) {
        let sides = self
            .entries
            .entry(flow.clone())
            .or_default()
            .entry(at)
            .or_default();
        sides.new = (weight > VOL_EPS).then_some((next, weight));
        self.prune(flow, at);
    }

    fn prune(&mut self, flow: &FlowId, at: SwitchId) {
        if let Some(by_switch) = self.entries.get_mut(flow) {
            if by_switch.get(&at).is_some_and(|s| s.is_empty()) {
                by_switch.remove(&at);
            }
            if by_switch.is_empty() {
                self.entries.remove(flow);
            }
        }
    }

    pub fn entry(&self, flow: &FlowId, at: SwitchId) -> Option<BTreeMap<SwitchId, f64>> {
        self.entries
            .get(flow)
            .and_then(|m| m.get(&at))
            .map(EntrySides::hops)
            .filter(|h| !h.is_empty())
    }

    /// Merged per-hop weights of every entry, for structural comparison.
    pub fn merged_view(
        &self,
    ) -> BTreeMap<FlowId, BTreeMap<SwitchId, BTreeMap<SwitchId, f64>>> {
        self.entries
            .iter()
            .map(|(f, m)| {
                (
                    f.clone(),
                    m.iter()
                        .filter(|(_, s)| !s.is_empty())
                        .map(|(at, s)| (*at, s.hops()))
                        .collect(),
                )
            })
            .collect()
    }

    fn apply(&mut self, index: usize, rec: &TraceRecord) -> Result<Option<FlowId>, VerifyError> {
        let (Some(seg), Some((src, dst))) = (&rec.segment, rec.link) else {
            return Ok(None);
        };
        let flow = seg.flow.clone();
        match rec.action {
            TraceAction::InstallRule => {
                let weight = rec.volume.ok_or_else(|| VerifyError::BadRecord {
                    index,
                    detail: "install_rule without volume".into(),
                })?;
                // A switch holds one rule per flow: installing replaces the
                // entry. A split switch re-establishes its weighted old
                // share with the paired remove_rule record that follows.
                if let Some(sides) =
                    self.entries.get_mut(&flow).and_then(|m| m.get_mut(&src))
                {
                    sides.old = None;
                }
                self.set_new(&flow, src, dst, weight);
                Ok(Some(flow))
            }
            TraceAction::RemoveRule => {
                let remaining = rec.volume.ok_or_else(|| VerifyError::BadRecord {
                    index,
                    detail: "remove_rule without volume".into(),
                })?;
                let has_entry = self
                    .entries
                    .get(&flow)
                    .is_some_and(|m| m.contains_key(&src));
                if !has_entry && remaining > VOL_EPS {
                    return Err(VerifyError::BadRecord {
                        index,
                        detail: format!("remove of absent rule {flow} at {src}"),
                    });
                }
                self.set_old(&flow, src, dst, remaining);
                Ok(Some(flow))
            }
            _ => Ok(None),
        }
    }

    /// Follows a flow from its ingress, splitting proportionally at weighted
    /// entries. Returns the per-link carried volumes, or the first anomaly.
    pub fn flow_trace(
        &self,
        flow: &FlowId,
        ingress: SwitchId,
        egress: SwitchId,
        max_hops: usize,
    ) -> Result<Vec<(LinkKey, f64)>, (ViolationKind, String)> {
        let mut loads: BTreeMap<LinkKey, f64> = BTreeMap::new();
        let offered: f64 = match self.entry(flow, ingress) {
            Some(e) => e.values().sum(),
            None => return Ok(Vec::new()), // not admitted
        };
        if offered <= VOL_EPS {
            return Ok(Vec::new());
        }
        let mut path = Vec::new();
        self.walk(flow, ingress, offered, egress, max_hops, &mut path, &mut loads)?;
        Ok(loads.into_iter().collect())
    }

    fn walk(
        &self,
        flow: &FlowId,
        at: SwitchId,
        volume: f64,
        egress: SwitchId,
        hops_left: usize,
        path: &mut Vec<SwitchId>,
        loads: &mut BTreeMap<LinkKey, f64>,
    ) -> Result<(), (ViolationKind, String)> {
        if volume <= VOL_EPS {
            return Ok(());
        }
        if path.contains(&at) {
            return Err((
                ViolationKind::Loop,
                format!("forwarding revisits {at} (path {})", path_str(path)),
            ));
        }
        if hops_left == 0 {
            return Err((ViolationKind::Loop, format!("no progress after {}", path_str(path))));
        }
        let entry = match self.entry(flow, at) {
            Some(e) => e,
            None => {
                if at == egress {
                    return Ok(()); // delivered
                }
                return Err((
                    ViolationKind::BlackHole,
                    format!("no rule at {at} (path {})", path_str(path)),
                ));
            }
        };
        let total: f64 = entry.values().sum();
        path.push(at);
        for (next, w) in entry {
            let share = volume * (w / total);
            if share <= VOL_EPS {
                continue;
            }
            *loads.entry((at, next)).or_insert(0.0) += share;
            self.walk(flow, next, share, egress, hops_left - 1, path, loads)?;
        }
        path.pop();
        Ok(())
    }
}

fn path_str(path: &[SwitchId]) -> String {
    path.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(" ")
}

/// Ingress, egress and nominal volume per flow of an instance.
fn flow_endpoints(instance: &UpdateInstance) -> BTreeMap<FlowId, (SwitchId, SwitchId)> {
    let mut out = BTreeMap::new();
    for cfg in [&instance.current, &instance.target] {
        for flow in cfg.flows.values() {
            if flow.path.len() >= 2 {
                out.entry(flow.id.clone())
                    .or_insert((flow.path[0], *flow.path.last().unwrap()));
            }
        }
    }
    out
}

/// Replay of a trace: the forwarding state and link loads after every
/// handler boundary, for inspection and small tests.
pub fn replay(
    instance: &UpdateInstance,
    trace: &Trace,
) -> Result<Vec<(f64, ForwardingState, BTreeMap<LinkKey, f64>)>, VerifyError> {
    let mut out = Vec::new();
    let mut checker = Checker::new(instance, None);
    checker.process(trace, &mut |time_ms, state, loads| {
        out.push((time_ms, state.clone(), loads.clone()));
    })?;
    Ok(out)
}

/// Checks every intermediate state of a trace for black-holes, loops and
/// congestion, and (when `expect_target`) that the final state matches the
/// target configuration. Violations deduplicate per flow/link and kind.
pub fn check_properties(
    instance: &UpdateInstance,
    trace: &Trace,
    expect_target: bool,
) -> Result<Vec<Violation>, VerifyError> {
    let mut checker = Checker::new(instance, None);
    checker.process(trace, &mut |_, _, _| {})?;
    let mut violations = checker.violations;
    if expect_target {
        let expected = ForwardingState::from_config(&instance.target);
        if !states_equal(&checker.state, &expected) {
            violations.push(Violation {
                kind: ViolationKind::NonTermination,
                time_ms: trace.records.last().map_or(0.0, |r| ns_to_ms(r.time_ns)),
                flow: None,
                link: None,
                detail: "final forwarding state differs from target".into(),
            });
        }
    }
    Ok(violations)
}

fn states_equal(a: &ForwardingState, b: &ForwardingState) -> bool {
    let (va, vb) = (a.merged_view(), b.merged_view());
    if va.len() != vb.len() {
        return false;
    }
    va.iter().zip(vb.iter()).all(|((fa, ma), (fb, mb))| {
        fa == fb
            && ma.len() == mb.len()
            && ma.iter().zip(mb.iter()).all(|((sa, ea), (sb, eb))| {
                sa == sb
                    && ea.len() == eb.len()
                    && ea
                        .iter()
                        .zip(eb.iter())
                        .all(|((na, wa), (nb, wb))| na == nb && vol_eq(*wa, *wb))
            })
    })
}

struct Checker {
    topology: Topology,
    endpoints: BTreeMap<FlowId, (SwitchId, SwitchId)>,
    state: ForwardingState,
    loads: BTreeMap<LinkKey, f64>,
    contributions: BTreeMap<FlowId, Vec<(LinkKey, f64)>>,
    violations: Vec<Violation>,
    seen: BTreeSet<(ViolationKind, Option<FlowId>, Option<LinkKey>)>,
    max_hops: usize,
}

impl Checker {
    fn new(instance: &UpdateInstance, _unused: Option<()>) -> Self {
        let state = ForwardingState::from_config(&instance.current);
        let loads = link_loads(&instance.topology, &instance.current);
        let contributions = instance
            .current
            .flows
            .values()
            .map(|f| {
                (
                    f.id.clone(),
                    f.links().map(|l| (l, f.volume)).collect::<Vec<_>>(),
                )
            })
            .collect();
        Checker {
            topology: instance.topology.clone(),
            endpoints: flow_endpoints(instance),
            state,
            loads,
            contributions,
            violations: Vec::new(),
            seen: BTreeSet::new(),
            max_hops: instance.topology.switches.len() + 1,
        }
    }

    fn report(
        &mut self,
        kind: ViolationKind,
        time_ms: f64,
        flow: Option<FlowId>,
        link: Option<LinkKey>,
        detail: String,
    ) {
        if self.seen.insert((kind, flow.clone(), link)) {
            self.violations.push(Violation { kind, time_ms, flow, link, detail });
        }
    }

    fn retract_flow(&mut self, flow: &FlowId) {
        if let Some(old) = self.contributions.remove(flow) {
            for (l, v) in old {
                if let Some(x) = self.loads.get_mut(&l) {
                    *x -= v;
                }
            }
        }
    }

    fn recheck_flow(&mut self, flow: &FlowId, time_ms: f64) {
        let Some((ingress, egress)) = self.endpoints.get(flow).copied() else {
            return;
        };
        match self.state.flow_trace(flow, ingress, egress, self.max_hops) {
            Ok(contrib) => {
                for (l, v) in &contrib {
                    *self.loads.entry(*l).or_insert(0.0) += *v;
                    let cap = self.topology.links.get(l).map_or(f64::INFINITY, |x| x.capacity);
                    if self.loads[l] > cap + 1e-9 {
                        self.report(
                            ViolationKind::Congestion,
                            time_ms,
                            None,
                            Some(*l),
                            format!("load {} exceeds capacity {cap}", self.loads[l]),
                        );
                    }
                }
                self.contributions.insert(flow.clone(), contrib);
            }
            Err((kind, detail)) => {
                self.report(kind, time_ms, Some(flow.clone()), None, detail);
                self.contributions.insert(flow.clone(), Vec::new());
            }
        }
    }

    /// Applies the trace group by group, invoking `on_state` after each.
    fn process(
        &mut self,
        trace: &Trace,
        on_state: &mut dyn FnMut(f64, &ForwardingState, &BTreeMap<LinkKey, f64>),
    ) -> Result<(), VerifyError> {
        // Initial state counts as a boundary.
        on_state(0.0, &self.state, &self.loads);
        let records = &trace.records;
        let mut i = 0;
        while i < records.len() {
            let group_key = (records[i].time_ns, records[i].actor);
            let mut touched: BTreeSet<FlowId> = BTreeSet::new();
            let mut changed = false;
            while i < records.len() && (records[i].time_ns, records[i].actor) == group_key {
                if let Some(flow) = self.state.apply(i, &records[i])? {
                    touched.insert(flow);
                    changed = true;
                }
                i += 1;
            }
            if changed {
                let time_ms = ns_to_ms(group_key.0);
                // Retract first so concurrent moves of several flows do not
                // look momentarily overlapped.
                for flow in &touched {
                    self.retract_flow(flow);
                }
                for flow in touched {
                    self.recheck_flow(&flow, time_ms);
                }
                on_state(time_ms, &self.state, &self.loads);
            }
        }
        Ok(())
    }
}

/// Result of the exhaustive feasibility search.
#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    /// A property-preserving order exists; steps are (segment, fraction
    /// reached).
    Feasible(Vec<(SegmentId, f64)>),
    Infeasible,
}

/// Limit above which the exhaustive search refuses to run.
pub const BRUTE_FORCE_MAX_SEGMENTS: usize = 8;

/// Exhaustive search over segment-move orderings for a congestion-free
/// sequence. Moves are atomic per step; with `allow_split` a segment may
/// advance in half-volume steps. InLoop segments move only after their
/// dependency completes.
pub fn brute_force_feasible(
    topology: &Topology,
    current: &NetworkConfig,
    segments: &[Segment],
    allow_split: bool,
) -> Result<Feasibility, VerifyError> {
    let segs: Vec<&Segment> = segments.iter().filter(|s| !s.is_trivial()).collect();
    if segs.len() > BRUTE_FORCE_MAX_SEGMENTS {
        return Err(VerifyError::TooLarge {
            segments: segs.len(),
            limit: BRUTE_FORCE_MAX_SEGMENTS,
        });
    }
    let base = link_loads(topology, current);
    let levels: u8 = if allow_split { 2 } else { 1 };
    let fraction = |level: u8| level as f64 / levels as f64;

    // Per segment: links only on the new subpath (+1 per unit fraction) and
    // only on the old subpath (-1).
    let deltas: Vec<Vec<(LinkKey, f64)>> = segs
        .iter()
        .map(|s| {
            let old: BTreeSet<LinkKey> = crate::model::path_links(&s.old_sub).collect();
            let new: BTreeSet<LinkKey> = crate::model::path_links(&s.new_sub).collect();
            let mut d: Vec<(LinkKey, f64)> = Vec::new();
            for l in new.difference(&old) {
                d.push((*l, s.volume));
            }
            for l in old.difference(&new) {
                d.push((*l, -s.volume));
            }
            d
        })
        .collect();
    let dep_index: Vec<Option<usize>> = segs
        .iter()
        .map(|s| {
            s.dep
                .as_ref()
                .and_then(|d| segs.iter().position(|t| t.id == *d))
        })
        .collect();

    let valid = |state: &[u8]| -> bool {
        let mut loads = base.clone();
        for (i, lvl) in state.iter().enumerate() {
            let f = fraction(*lvl);
            if f == 0.0 {
                continue;
            }
            for (l, d) in &deltas[i] {
                *loads.get_mut(l).expect("known link") += d * f;
            }
        }
        loads
            .iter()
            .all(|(l, load)| *load <= topology.links[l].capacity + VOL_EPS)
    };

    let start = vec![0u8; segs.len()];
    let goal = vec![levels; segs.len()];
    if !valid(&start) {
        return Ok(Feasibility::Infeasible);
    }
    let max_steps = 4 * segs.len();
    let mut parents: BTreeMap<Vec<u8>, (Vec<u8>, usize)> = BTreeMap::new();
    let mut depth: BTreeMap<Vec<u8>, usize> = BTreeMap::from([(start.clone(), 0)]);
    let mut queue = VecDeque::from([start.clone()]);
    while let Some(state) = queue.pop_front() {
        if state == goal {
            let mut steps = Vec::new();
            let mut cur = state;
            while let Some((prev, seg_idx)) = parents.get(&cur) {
                steps.push((segs[*seg_idx].id.clone(), fraction(cur[*seg_idx])));
                cur = prev.clone();
            }
            steps.reverse();
            return Ok(Feasibility::Feasible(steps));
        }
        let d = depth[&state];
        if d >= max_steps {
            continue;
        }
        for i in 0..segs.len() {
            if state[i] >= levels {
                continue;
            }
            if let Some(dep) = dep_index[i] {
                if state[dep] < levels {
                    continue;
                }
            }
            let mut next = state.clone();
            next[i] += 1;
            if depth.contains_key(&next) || !valid(&next) {
                continue;
            }
            depth.insert(next.clone(), d + 1);
            parents.insert(next.clone(), (state.clone(), i));
            queue.push_back(next);
        }
    }
    Ok(Feasibility::Infeasible)
}

/// Convenience wrapper: feasibility of an instance under whole-flow moves.
pub fn brute_force_whole_flow(
    instance: &UpdateInstance,
    allow_split: bool,
) -> Result<Feasibility, VerifyError> {
    let segments = crate::controller::active_segments(instance, false);
    brute_force_feasible(&instance.topology, &instance.current, &segments, allow_split)
}

/// Feasibility under segmentation.
pub fn brute_force_segmented(
    instance: &UpdateInstance,
    allow_split: bool,
) -> Result<Feasibility, VerifyError> {
    let segments = crate::controller::active_segments(instance, true);
    brute_force_feasible(&instance.topology, &instance.current, &segments, allow_split)
}

/// State-space check used by the segmentation tests: explores every
/// dep-respecting interleaving of per-segment Basic-Update steps and returns
/// the first anomaly found in any reachable forwarding state.
pub fn explore_segment_interleavings(
    flow: &FlowId,
    volume: f64,
    old_path: &[SwitchId],
    new_path: &[SwitchId],
    segments: &[Segment],
) -> Option<(ViolationKind, String)> {
    // Steps of one segment's Basic-Update: install at each new-subpath
    // switch from the last-but-one down to the first (the final install is
    // the flip, which also drops the first switch's old share), then clear
    // the old share at each interior old-subpath switch as the Removing wave
    // passes.
    #[derive(Clone)]
    struct Plan {
        installs: Vec<(SwitchId, SwitchId)>,
        removes: Vec<SwitchId>,
        dep: Option<usize>,
    }
    let plans: Vec<Plan> = segments
        .iter()
        .filter(|s| !s.is_trivial())
        .map(|s| {
            let installs: Vec<(SwitchId, SwitchId)> = (0..s.new_sub.len().saturating_sub(1))
                .rev()
                .map(|i| (s.new_sub[i], s.new_sub[i + 1]))
                .collect();
            // Interior old-subpath switches that also sit on the new subpath
            // replace their entry at install time, not at the Removing wave.
            let interior: Vec<SwitchId> = if s.old_sub.len() >= 3 {
                s.old_sub[1..s.old_sub.len() - 1]
                    .iter()
                    .filter(|x| !s.new_sub.contains(x))
                    .copied()
                    .collect()
            } else {
                Vec::new()
            };
            let removes = if installs.is_empty() {
                // Pure removal: the head clears its entry as the first step.
                let mut r = vec![s.old_sub[0]];
                r.extend(interior);
                r
            } else {
                interior
            };
            Plan {
                installs,
                removes,
                dep: s.dep.as_ref().and_then(|d| {
                    segments
                        .iter()
                        .filter(|t| !t.is_trivial())
                        .position(|t| t.id == *d)
                }),
            }
        })
        .collect();
    let total_steps = |p: &Plan| p.installs.len() + p.removes.len();
    let n = plans.len();
    let ingress = old_path[0];
    let egress = *old_path.last().unwrap();
    let switches: BTreeSet<SwitchId> =
        old_path.iter().chain(new_path.iter()).copied().collect();
    let max_hops = switches.len() + 1;

    let state_of = |progress: &[usize]| {
        let mut fs = ForwardingState::default();
        for w in old_path.windows(2) {
            fs.set_old(flow, w[0], w[1], volume);
        }
        for (i, p) in plans.iter().enumerate() {
            let k = progress[i];
            let installs = k.min(p.installs.len());
            for (at, next) in p.installs.iter().take(installs) {
                // Installing replaces the single per-flow rule at `at`.
                if let Some(w) = old_path.windows(2).find(|w| w[0] == *at) {
                    fs.set_old(flow, *at, w[1], 0.0);
                }
                fs.set_new(flow, *at, *next, volume);
            }
            for at in p.removes.iter().take(k.saturating_sub(p.installs.len())) {
                if let Some(next) =
                    old_path.windows(2).find(|w| w[0] == *at).map(|w| w[1])
                {
                    fs.set_old(flow, *at, next, 0.0);
                }
            }
        }
        fs
    };

    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut queue = VecDeque::from([vec![0usize; n]]);
    seen.insert(vec![0usize; n]);
    while let Some(progress) = queue.pop_front() {
        let fs = state_of(&progress);
        if let Err(v) = fs.flow_trace(flow, ingress, egress, max_hops) {
            return Some(v);
        }
        for i in 0..n {
            if progress[i] >= total_steps(&plans[i]) {
                continue;
            }
            if let Some(d) = plans[i].dep {
                // An InLoop segment starts only after its dependency
                // flipped, and flips only once the dependency's Removing
                // wave has fully passed its first switch.
                if progress[i] == 0 && progress[d] < plans[d].installs.len() {
                    continue;
                }
                if progress[i] + 1 == plans[i].installs.len()
                    && progress[d] < total_steps(&plans[d])
                {
                    continue;
                }
            }
            let mut next = progress.clone();
            next[i] += 1;
            if seen.insert(next.clone()) {
                queue.push_back(next);
            }
        }
    }
    None
}
