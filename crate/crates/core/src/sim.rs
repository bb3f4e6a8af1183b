//! Deterministic discrete-event kernel: clock, event queue, latency model,
//! timers, and trace capture.
//!
//! Time is kept in integer nanoseconds. Events are totally ordered by
//! `(time, sequence)` where the sequence number is assigned at scheduling
//! time, so identical inputs replay to identical traces. Per-channel FIFO
//! follows from constant pair latencies plus the sequence tie-break.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use crate::error::SimError;
use crate::model::{LinkKey, SwitchId, Topology};
use crate::segmentation::SegmentId;

pub type SimTimeNs = u64;

pub fn ms_to_ns(ms: f64) -> SimTimeNs {
    (ms * 1e6).round() as SimTimeNs
}

pub fn ns_to_ms(ns: SimTimeNs) -> f64 {
    ns as f64 / 1e6
}

/// Signal propagation speed in optical fiber, km per millisecond.
pub const FIBER_KM_PER_MS: f64 = 200.0;

const EARTH_RADIUS_KM: f64 = 6371.0;

/// Great-circle distance between two (lat, lon) points in degrees.
pub fn great_circle_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (la1, lo1) = (a.0.to_radians(), a.1.to_radians());
    let (la2, lo2) = (b.0.to_radians(), b.1.to_radians());
    let dlat = la2 - la1;
    let dlon = lo2 - lo1;
    let h = (dlat / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Propagation latency of one link: the explicit value when present,
/// otherwise derived from endpoint coordinates and fiber speed.
pub fn link_latency_ms(topology: &Topology, link: LinkKey) -> Result<f64, SimError> {
    let l = topology
        .links
        .get(&link)
        .ok_or_else(|| SimError::NoLatency(link.0.to_string(), link.1.to_string()))?;
    if let Some(ms) = l.latency_ms {
        return Ok(ms);
    }
    pair_latency_ms(topology, link.0, link.1)
}

/// Straight-line latency between two switches from coordinates; an explicit
/// latency on a direct link takes precedence.
pub fn pair_latency_ms(topology: &Topology, a: SwitchId, b: SwitchId) -> Result<f64, SimError> {
    if a == b {
        return Ok(0.0);
    }
    if let Some(l) = topology.link(a, b) {
        if let Some(ms) = l.latency_ms {
            return Ok(ms);
        }
    }
    match (topology.coordinates.get(&a), topology.coordinates.get(&b)) {
        (Some(ca), Some(cb)) => Ok(great_circle_km(*ca, *cb) / FIBER_KM_PER_MS),
        _ => Err(SimError::NoLatency(a.to_string(), b.to_string())),
    }
}

/// Routed all-pairs latency matrix over the link graph, used for every
/// actor-to-actor delivery (in-band messaging follows the network paths).
#[derive(Debug, Clone)]
pub struct LatencyModel {
    ids: Vec<SwitchId>,
    index: BTreeMap<SwitchId, usize>,
    pair_ns: Vec<Vec<SimTimeNs>>,
    pub controller_at: SwitchId,
}

impl LatencyModel {
    pub fn build(topology: &Topology, controller: Option<SwitchId>) -> Result<Self, SimError> {
        let ids: Vec<SwitchId> = topology.switches.iter().copied().collect();
        let index: BTreeMap<SwitchId, usize> =
            ids.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let n = ids.len();
        let mut adj: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
        for (key, _) in &topology.links {
            let ns = ms_to_ns(link_latency_ms(topology, *key)?);
            adj[index[&key.0]].push((index[&key.1], ns));
        }
        let mut pair_ns = vec![vec![u64::MAX; n]; n];
        for (src, row) in pair_ns.iter_mut().enumerate() {
            // Dijkstra from src.
            let mut heap: BinaryHeap<std::cmp::Reverse<(u64, usize)>> = BinaryHeap::new();
            row[src] = 0;
            heap.push(std::cmp::Reverse((0, src)));
            while let Some(std::cmp::Reverse((d, u))) = heap.pop() {
                if d > row[u] {
                    continue;
                }
                for &(v, w) in &adj[u] {
                    let nd = d.saturating_add(w);
                    if nd < row[v] {
                        row[v] = nd;
                        heap.push(std::cmp::Reverse((nd, v)));
                    }
                }
            }
        }
        let controller_at = match controller {
            Some(s) => {
                if !topology.switches.contains(&s) {
                    return Err(SimError::UnknownActor(s.to_string()));
                }
                s
            }
            None => Self::centroid_of(&ids, &pair_ns),
        };
        Ok(LatencyModel { ids, index, pair_ns, controller_at })
    }

    /// The switch minimizing the maximum latency to the farthest switch;
    /// ties broken by lowest id.
    fn centroid_of(ids: &[SwitchId], pair_ns: &[Vec<u64>]) -> SwitchId {
        let mut best = (u64::MAX, ids[0]);
        for (i, id) in ids.iter().enumerate() {
            let ecc = pair_ns[i].iter().copied().max().unwrap_or(0);
            if ecc < best.0 {
                best = (ecc, *id);
            }
        }
        best.1
    }

    pub fn centroid(topology: &Topology) -> Result<SwitchId, SimError> {
        Ok(Self::build(topology, None)?.controller_at)
    }

    fn actor_switch(&self, a: Actor) -> SwitchId {
        match a {
            Actor::Switch(s) => s,
            Actor::Controller => self.controller_at,
        }
    }

    pub fn latency_ns(&self, from: Actor, to: Actor) -> Result<SimTimeNs, SimError> {
        let (f, t) = (self.actor_switch(from), self.actor_switch(to));
        let (fi, ti) = (
            *self.index.get(&f).ok_or_else(|| SimError::UnknownActor(f.to_string()))?,
            *self.index.get(&t).ok_or_else(|| SimError::UnknownActor(t.to_string()))?,
        );
        let ns = self.pair_ns[fi][ti];
        if ns == u64::MAX {
            return Err(SimError::NoLatency(f.to_string(), t.to_string()));
        }
        Ok(ns)
    }

    pub fn switches(&self) -> &[SwitchId] {
        &self.ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Actor {
    Switch(SwitchId),
    Controller,
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actor::Switch(s) => write!(f, "{s}"),
            Actor::Controller => f.write_str("controller"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MsgBody {
    InstallUpdate { infos: Vec<crate::agent::SegmentInfo> },
    GoodToMove { segment: SegmentId, volume: f64 },
    Removing { segment: SegmentId, volume: f64 },
    /// Completion acknowledgment towards the controller.
    Ack { segment: SegmentId },
}

impl MsgBody {
    pub fn kind(&self) -> &'static str {
        match self {
            MsgBody::InstallUpdate { .. } => "install_update",
            MsgBody::GoodToMove { .. } => "good_to_move",
            MsgBody::Removing { .. } => "removing",
            MsgBody::Ack { .. } => "ack",
        }
    }

    pub fn segment(&self) -> Option<&SegmentId> {
        match self {
            MsgBody::InstallUpdate { .. } => None,
            MsgBody::GoodToMove { segment, .. }
            | MsgBody::Removing { segment, .. }
            | MsgBody::Ack { segment } => Some(segment),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub from: Actor,
    pub to: Actor,
    pub body: MsgBody,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Deliver(Message),
    /// Centralized mode: the controller relays this message to its target.
    Relay(Message),
    TimerFire { segment: SegmentId, generation: u64 },
    FailureInjection,
}

#[derive(Debug, Clone)]
pub struct Event {
    pub time: SimTimeNs,
    pub seq: u64,
    pub target: Actor,
    pub payload: Payload,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.time, self.seq).cmp(&(other.time, other.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceAction {
    Send,
    Recv,
    InstallRule,
    RemoveRule,
    Split,
    DeadlockDetected,
    Complete,
}

impl TraceAction {
    pub fn as_str(&self) -> &'static str {
        match self {
            TraceAction::Send => "send",
            TraceAction::Recv => "recv",
            TraceAction::InstallRule => "install_rule",
            TraceAction::RemoveRule => "remove_rule",
            TraceAction::Split => "split",
            TraceAction::DeadlockDetected => "deadlock_detected",
            TraceAction::Complete => "complete",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "send" => TraceAction::Send,
            "recv" => TraceAction::Recv,
            "install_rule" => TraceAction::InstallRule,
            "remove_rule" => TraceAction::RemoveRule,
            "split" => TraceAction::Split,
            "deadlock_detected" => TraceAction::DeadlockDetected,
            "complete" => TraceAction::Complete,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time_ns: SimTimeNs,
    pub actor: Actor,
    pub action: TraceAction,
    pub segment: Option<SegmentId>,
    pub link: Option<LinkKey>,
    pub volume: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

pub const TRACE_CSV_HEADER: &str = "time_ms,actor,action,segment,link_src,link_dst,volume";

impl Trace {
    pub fn push(&mut self, rec: TraceRecord) {
        debug_assert!(
            self.records.last().map_or(true, |r| r.time_ns <= rec.time_ns),
            "trace time must be non-decreasing"
        );
        self.records.push(rec);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let seg = r.segment.as_ref().map(|s| s.to_string()).unwrap_or_default();
            let (ls, ld) = r
                .link
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .unwrap_or_default();
            let vol = r.volume.map(|v| format!("{v}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                ns_to_ms(r.time_ns),
                r.actor,
                r.action.as_str(),
                seg,
                ls,
                ld,
                vol
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Trace, String> {
        let mut records = Vec::new();
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == TRACE_CSV_HEADER => {}
            Some(h) => return Err(format!("unexpected header: {h}")),
            None => return Err("empty trace file".into()),
        }
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(format!("line {}: expected 7 fields", i + 2));
            }
            let time_ms: f64 = fields[0]
                .parse()
                .map_err(|_| format!("line {}: bad time", i + 2))?;
            let actor = parse_actor(fields[1])
                .ok_or_else(|| format!("line {}: bad actor", i + 2))?;
            let action = TraceAction::parse(fields[2])
                .ok_or_else(|| format!("line {}: bad action", i + 2))?;
            let segment = if fields[3].is_empty() {
                None
            } else {
                Some(parse_segment(fields[3]).ok_or_else(|| format!("line {}: bad segment", i + 2))?)
            };
            let link = match (fields[4], fields[5]) {
                ("", "") => None,
                (a, b) => Some((
                    parse_switch(a).ok_or_else(|| format!("line {}: bad link src", i + 2))?,
                    parse_switch(b).ok_or_else(|| format!("line {}: bad link dst", i + 2))?,
                )),
            };
            let volume = if fields[6].is_empty() {
                None
            } else {
                Some(fields[6].parse().map_err(|_| format!("line {}: bad volume", i + 2))?)
            };
            records.push(TraceRecord { time_ns: ms_to_ns(time_ms), actor, action, segment, link, volume });
        }
        Ok(Trace { records })
    }
}

fn parse_switch(s: &str) -> Option<SwitchId> {
    s.strip_prefix('s')?.parse().ok().map(SwitchId)
}

fn parse_actor(s: &str) -> Option<Actor> {
    if s == "controller" {
        return Some(Actor::Controller);
    }
    parse_switch(s).map(Actor::Switch)
}

fn parse_segment(s: &str) -> Option<SegmentId> {
    let (flow, idx) = s.rsplit_once('.')?;
    Some(SegmentId::new(crate::model::FlowId::new(flow), idx.parse().ok()?))
}

/// The event queue plus clock. Message semantics live in the run loop; the
/// kernel only orders and delivers.
#[derive(Debug)]
pub struct SimKernel {
    now: SimTimeNs,
    next_seq: u64,
    queue: BinaryHeap<std::cmp::Reverse<Event>>,
    pub trace: Trace,
}

impl Default for SimKernel {
    fn default() -> Self {
        Self::new()
    }
}

impl SimKernel {
    pub fn new() -> Self {
        SimKernel {
            now: 0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            trace: Trace::default(),
        }
    }

    pub fn now(&self) -> SimTimeNs {
        self.now
    }

    pub fn schedule(&mut self, time: SimTimeNs, target: Actor, payload: Payload) -> u64 {
        debug_assert!(time >= self.now, "cannot schedule into the past");
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(std::cmp::Reverse(Event { time, seq, target, payload }));
        seq
    }

    /// Pops the next event no later than `max_time`, advancing the clock.
    pub fn pop(&mut self, max_time: SimTimeNs) -> Option<Event> {
        match self.queue.peek() {
            Some(std::cmp::Reverse(ev)) if ev.time <= max_time => {
                let ev = self.queue.pop().unwrap().0;
                self.now = ev.time;
                Some(ev)
            }
            _ => None,
        }
    }

    pub fn is_quiescent(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn drain(&mut self) {
        self.queue.clear();
    }

    pub fn record(
        &mut self,
        actor: Actor,
        action: TraceAction,
        segment: Option<SegmentId>,
        link: Option<LinkKey>,
        volume: Option<f64>,
    ) {
        let time_ns = self.now;
        self.trace.push(TraceRecord { time_ns, actor, action, segment, link, volume });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn events_order_by_time_then_seq() {
        let mut k = SimKernel::new();
        k.schedule(10, Actor::Controller, Payload::FailureInjection);
        k.schedule(5, Actor::Controller, Payload::FailureInjection);
        k.schedule(5, Actor::Controller, Payload::FailureInjection);
        let a = k.pop(u64::MAX).unwrap();
        let b = k.pop(u64::MAX).unwrap();
        let c = k.pop(u64::MAX).unwrap();
        assert_eq!((a.time, a.seq), (5, 1));
        assert_eq!((b.time, b.seq), (5, 2));
        assert_eq!(c.time, 10);
        assert!(k.pop(u64::MAX).is_none());
    }

    #[test]
    fn pop_respects_max_time() {
        let mut k = SimKernel::new();
        k.schedule(100, Actor::Controller, Payload::FailureInjection);
        assert!(k.pop(50).is_none());
        assert!(!k.is_quiescent());
        assert!(k.pop(100).is_some());
    }

    #[test]
    fn geodesic_latency_examples() {
        // Two points 2,000 km apart along a meridian: 10 ms at 200,000 km/s.
        let a = (0.0, 0.0);
        let b = (2000.0 / EARTH_RADIUS_KM * 180.0 / std::f64::consts::PI, 0.0);
        let ms = great_circle_km(a, b) / FIBER_KM_PER_MS;
        assert!((ms - 10.0).abs() < 1e-6, "{ms}");
        assert_eq!(great_circle_km(a, a), 0.0);
    }

    #[test]
    fn explicit_latency_overrides_coordinates() {
        let mut topo = Topology::new("t");
        topo.add_switch(SwitchId(0));
        topo.add_switch(SwitchId(1));
        topo.coordinates.insert(SwitchId(0), (0.0, 0.0));
        topo.coordinates.insert(SwitchId(1), (10.0, 10.0));
        topo.add_edge(SwitchId(0), SwitchId(1), 1.0, Some(7.0)).unwrap();
        assert_eq!(pair_latency_ms(&topo, SwitchId(0), SwitchId(1)).unwrap(), 7.0);
        assert_eq!(pair_latency_ms(&topo, SwitchId(0), SwitchId(0)).unwrap(), 0.0);
    }

    #[test]
    fn missing_latency_is_an_error() {
        let mut topo = Topology::new("t");
        topo.add_switch(SwitchId(0));
        topo.add_switch(SwitchId(1));
        topo.add_edge(SwitchId(0), SwitchId(1), 1.0, None).unwrap();
        assert!(link_latency_ms(&topo, (SwitchId(0), SwitchId(1))).is_err());
    }

    #[test]
    fn trace_csv_round_trip() {
        let mut t = Trace::default();
        t.push(TraceRecord {
            time_ns: ms_to_ns(1.5),
            actor: Actor::Switch(SwitchId(2)),
            action: TraceAction::InstallRule,
            segment: Some(SegmentId::new(crate::model::FlowId::new("R"), 0)),
            link: Some((SwitchId(2), SwitchId(6))),
            volume: Some(5.0),
        });
        t.push(TraceRecord {
            time_ns: ms_to_ns(2.0),
            actor: Actor::Controller,
            action: TraceAction::Complete,
            segment: None,
            link: None,
            volume: None,
        });
        let csv = t.to_csv();
        let back = Trace::from_csv(&csv).unwrap();
        assert_eq!(back.records, t.records);
    }
}
