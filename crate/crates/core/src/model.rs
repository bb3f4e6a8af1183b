//! Core network data model: topology, flows, configurations and configuration
//! diffing.
//!
//! Volumes and capacities are real-valued; all comparisons go through
//! [`vol_le`]/[`vol_eq`] with an absolute tolerance of [`VOL_EPS`] so that
//! fractional volumes produced by flow splitting do not trip capacity checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Absolute tolerance for volume/capacity comparisons.
pub const VOL_EPS: f64 = 1e-9;

/// `a <= b` up to [`VOL_EPS`].
#[inline]
pub fn vol_le(a: f64, b: f64) -> bool {
    a <= b + VOL_EPS
}

/// `a == b` up to [`VOL_EPS`].
#[inline]
pub fn vol_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= VOL_EPS
}

/// Identifier of a switch, unique within a topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SwitchId(pub u32);

impl fmt::Display for SwitchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Identifier of a flow.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlowId(pub String);

impl FlowId {
    pub fn new(s: impl Into<String>) -> Self {
        FlowId(s.into())
    }
}

impl fmt::Display for FlowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ordered pair of switches naming a directed link.
pub type LinkKey = (SwitchId, SwitchId);

/// A directed, capacitated link. `(i, j)` and `(j, i)` are distinct links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub src: SwitchId,
    pub dst: SwitchId,
    /// Capacity in volume units. Must be positive.
    pub capacity: f64,
    /// Propagation latency in milliseconds; `None` means it is derived from
    /// switch coordinates.
    pub latency_ms: Option<f64>,
}

impl Link {
    pub fn key(&self) -> LinkKey {
        (self.src, self.dst)
    }
}

/// Switches plus directed links, with optional per-switch coordinates
/// (degrees latitude/longitude) used to derive propagation latencies.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Topology {
    pub name: String,
    pub switches: BTreeSet<SwitchId>,
    pub links: BTreeMap<LinkKey, Link>,
    pub coordinates: BTreeMap<SwitchId, (f64, f64)>,
}

impl Topology {
    pub fn new(name: impl Into<String>) -> Self {
        Topology {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn add_switch(&mut self, id: SwitchId) {
        self.switches.insert(id);
    }

    /// Adds one directed link. Endpoints must already be declared and the
    /// ordered pair must be fresh.
    pub fn add_link(&mut self, link: Link) -> Result<(), ModelError> {
        if link.src == link.dst {
            return Err(ModelError::SelfLoop(link.src));
        }
        if link.capacity <= 0.0 {
            return Err(ModelError::BadCapacity(link.src, link.dst));
        }
        for end in [link.src, link.dst] {
            if !self.switches.contains(&end) {
                return Err(ModelError::UnknownSwitch(end));
            }
        }
        if self.links.contains_key(&link.key()) {
            return Err(ModelError::DuplicateLink(link.src, link.dst));
        }
        self.links.insert(link.key(), link);
        Ok(())
    }

    /// Adds both directions of a drawn edge with identical parameters.
    pub fn add_edge(
        &mut self,
        a: SwitchId,
        b: SwitchId,
        capacity: f64,
        latency_ms: Option<f64>,
    ) -> Result<(), ModelError> {
        self.add_link(Link { src: a, dst: b, capacity, latency_ms })?;
        self.add_link(Link { src: b, dst: a, capacity, latency_ms })
    }

    pub fn link(&self, src: SwitchId, dst: SwitchId) -> Option<&Link> {
        self.links.get(&(src, dst))
    }

    pub fn has_link(&self, src: SwitchId, dst: SwitchId) -> bool {
        self.links.contains_key(&(src, dst))
    }

    /// Neighbors reachable over outgoing links, in id order.
    pub fn successors(&self, s: SwitchId) -> impl Iterator<Item = SwitchId> + '_ {
        self.links
            .range((s, SwitchId(0))..=(s, SwitchId(u32::MAX)))
            .map(|((_, dst), _)| *dst)
    }

    /// True when `a` and `b` are joined by a link in either direction.
    pub fn adjacent(&self, a: SwitchId, b: SwitchId) -> bool {
        self.has_link(a, b) || self.has_link(b, a)
    }
}

/// A flow: a traffic volume routed over a simple path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub id: FlowId,
    pub volume: f64,
    pub path: Vec<SwitchId>,
}

impl Flow {
    pub fn new(id: impl Into<String>, volume: f64, path: Vec<SwitchId>) -> Self {
        Flow { id: FlowId::new(id), volume, path }
    }

    /// Links traversed by the path, in order.
    pub fn links(&self) -> impl Iterator<Item = LinkKey> + '_ {
        path_links(&self.path)
    }
}

/// Consecutive-pair links of a path.
pub fn path_links(path: &[SwitchId]) -> impl Iterator<Item = LinkKey> + '_ {
    path.windows(2).map(|w| (w[0], w[1]))
}

/// True when a path visits no switch twice.
pub fn path_is_simple(path: &[SwitchId]) -> bool {
    let mut seen = BTreeSet::new();
    path.iter().all(|s| seen.insert(*s))
}

/// The complete forwarding state: one path per flow.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub flows: BTreeMap<FlowId, Flow>,
}

impl NetworkConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_flows(flows: impl IntoIterator<Item = Flow>) -> Self {
        NetworkConfig {
            flows: flows.into_iter().map(|f| (f.id.clone(), f)).collect(),
        }
    }

    pub fn insert(&mut self, flow: Flow) {
        self.flows.insert(flow.id.clone(), flow);
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }
}

/// Sum of the volumes of flows in `config` that traverse `link`.
pub fn link_load(
    topology: &Topology,
    config: &NetworkConfig,
    link: LinkKey,
) -> Result<f64, ModelError> {
    if !topology.links.contains_key(&link) {
        return Err(ModelError::UnknownLink(link.0, link.1));
    }
    Ok(config
        .flows
        .values()
        .filter(|f| f.links().any(|l| l == link))
        .map(|f| f.volume)
        .sum())
}

/// All link loads of a configuration in one pass.
pub fn link_loads(topology: &Topology, config: &NetworkConfig) -> BTreeMap<LinkKey, f64> {
    let mut loads: BTreeMap<LinkKey, f64> =
        topology.links.keys().map(|k| (*k, 0.0)).collect();
    for flow in config.flows.values() {
        for l in flow.links() {
            if let Some(v) = loads.get_mut(&l) {
                *v += flow.volume;
            }
        }
    }
    loads
}

/// A problem found by [`validate_config`]. Violations are data, not errors.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigViolation {
    /// A flow path hop is not backed by a declared link.
    MissingLink { flow: FlowId, link: LinkKey },
    /// A flow path repeats a switch.
    NonSimplePath { flow: FlowId },
    /// A flow volume is not positive.
    BadVolume { flow: FlowId },
    /// A link carries more traffic than its capacity.
    Overload { link: LinkKey, load: f64, capacity: f64 },
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigViolation::MissingLink { flow, link } => {
                write!(f, "flow {flow}: no link {} -> {}", link.0, link.1)
            }
            ConfigViolation::NonSimplePath { flow } => {
                write!(f, "flow {flow}: path is not simple")
            }
            ConfigViolation::BadVolume { flow } => {
                write!(f, "flow {flow}: volume must be positive")
            }
            ConfigViolation::Overload { link, load, capacity } => write!(
                f,
                "link {} -> {}: load {load} exceeds capacity {capacity}",
                link.0, link.1
            ),
        }
    }
}

/// Checks path connectivity and per-link capacity of a configuration.
/// Returns an empty list iff the configuration is valid.
pub fn validate_config(topology: &Topology, config: &NetworkConfig) -> Vec<ConfigViolation> {
    let mut out = Vec::new();
    for flow in config.flows.values() {
        if flow.volume <= 0.0 {
            out.push(ConfigViolation::BadVolume { flow: flow.id.clone() });
        }
        if !path_is_simple(&flow.path) {
            out.push(ConfigViolation::NonSimplePath { flow: flow.id.clone() });
        }
        for l in flow.links() {
            if !topology.links.contains_key(&l) {
                out.push(ConfigViolation::MissingLink { flow: flow.id.clone(), link: l });
            }
        }
    }
    for (key, load) in link_loads(topology, config) {
        let cap = topology.links[&key].capacity;
        if !vol_le(load, cap) {
            out.push(ConfigViolation::Overload { link: key, load, capacity: cap });
        }
    }
    out
}

/// What kind of change a [`FlowUpdate`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UpdateKind {
    /// Same flow, same volume, different path.
    Move,
    /// Flow only present in the target configuration.
    Add,
    /// Flow only present in the current configuration.
    Remove,
    /// Present in both with differing volumes; executed as remove + add.
    VolumeChange,
}

/// One flow's transition from its old path to its new path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowUpdate {
    pub flow: FlowId,
    pub kind: UpdateKind,
    /// Volume on the new path (for [`UpdateKind::Remove`], the removed volume).
    pub volume: f64,
    /// Volume on the old path. Differs from `volume` only for volume changes.
    pub old_volume: f64,
    /// Empty for pure adds.
    pub old_path: Vec<SwitchId>,
    /// Empty for pure removes.
    pub new_path: Vec<SwitchId>,
}

/// Diffs two configurations into per-flow updates. Unchanged flows are
/// omitted; flows whose volume differs are flagged [`UpdateKind::VolumeChange`].
pub fn diff_update(current: &NetworkConfig, target: &NetworkConfig) -> Vec<FlowUpdate> {
    let mut out = Vec::new();
    let ids: BTreeSet<&FlowId> =
        current.flows.keys().chain(target.flows.keys()).collect();
    for id in ids {
        match (current.flows.get(id), target.flows.get(id)) {
            (Some(old), Some(new)) => {
                if !vol_eq(old.volume, new.volume) {
                    out.push(FlowUpdate {
                        flow: id.clone(),
                        kind: UpdateKind::VolumeChange,
                        volume: new.volume,
                        old_volume: old.volume,
                        old_path: old.path.clone(),
                        new_path: new.path.clone(),
                    });
                } else if old.path != new.path {
                    out.push(FlowUpdate {
                        flow: id.clone(),
                        kind: UpdateKind::Move,
                        volume: new.volume,
                        old_volume: old.volume,
                        old_path: old.path.clone(),
                        new_path: new.path.clone(),
                    });
                }
            }
            (None, Some(new)) => out.push(FlowUpdate {
                flow: id.clone(),
                kind: UpdateKind::Add,
                volume: new.volume,
                old_volume: 0.0,
                old_path: Vec::new(),
                new_path: new.path.clone(),
            }),
            (Some(old), None) => out.push(FlowUpdate {
                flow: id.clone(),
                kind: UpdateKind::Remove,
                volume: old.volume,
                old_volume: old.volume,
                old_path: old.path.clone(),
                new_path: Vec::new(),
            }),
            (None, None) => unreachable!(),
        }
    }
    out
}

/// Applies updates to a configuration (replace old path by new path per flow).
pub fn apply_updates(config: &NetworkConfig, updates: &[FlowUpdate]) -> NetworkConfig {
    let mut flows = config.flows.clone();
    for u in updates {
        if u.new_path.is_empty() {
            flows.remove(&u.flow);
        } else {
            flows.insert(
                u.flow.clone(),
                Flow { id: u.flow.clone(), volume: u.volume, path: u.new_path.clone() },
            );
        }
    }
    NetworkConfig { flows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    #[test]
    fn fig1_current_loads() {
        let inst = scenarios::fig1();
        // F_B and F_G share l2,6 and l6,3 in the initial configuration; the
        // spur links each carry a single flow of size 5.
        let l26 = link_load(&inst.topology, &inst.current, (SwitchId(2), SwitchId(6))).unwrap();
        assert_eq!(l26, 10.0);
        let l23 = link_load(&inst.topology, &inst.current, (SwitchId(2), SwitchId(3))).unwrap();
        assert_eq!(l23, 5.0);
        let l12 = link_load(&inst.topology, &inst.current, (SwitchId(1), SwitchId(2))).unwrap();
        assert_eq!(l12, 5.0);
    }

    #[test]
    fn link_load_empty_and_additive() {
        let mut topo = Topology::new("t");
        for i in 0..3 {
            topo.add_switch(SwitchId(i));
        }
        topo.add_edge(SwitchId(0), SwitchId(1), 10.0, Some(1.0)).unwrap();
        topo.add_edge(SwitchId(1), SwitchId(2), 10.0, Some(1.0)).unwrap();
        let empty = NetworkConfig::new();
        assert_eq!(link_load(&topo, &empty, (SwitchId(0), SwitchId(1))).unwrap(), 0.0);

        let cfg = NetworkConfig::from_flows([
            Flow::new("a", 3.0, vec![SwitchId(0), SwitchId(1)]),
            Flow::new("b", 4.0, vec![SwitchId(0), SwitchId(1), SwitchId(2)]),
        ]);
        assert_eq!(link_load(&topo, &cfg, (SwitchId(0), SwitchId(1))).unwrap(), 7.0);
        assert!(link_load(&topo, &cfg, (SwitchId(2), SwitchId(0))).is_err());
    }

    #[test]
    fn validate_fig1_and_overload() {
        let inst = scenarios::fig1();
        assert!(validate_config(&inst.topology, &inst.current).is_empty());

        // A fourth size-5 flow on (s2 s6 s3) overloads both links it uses.
        let mut cfg = inst.current.clone();
        cfg.insert(Flow::new("X", 5.0, vec![SwitchId(2), SwitchId(6), SwitchId(3)]));
        let viol = validate_config(&inst.topology, &cfg);
        let overloaded: Vec<LinkKey> = viol
            .iter()
            .filter_map(|v| match v {
                ConfigViolation::Overload { link, .. } => Some(*link),
                _ => None,
            })
            .collect();
        assert!(overloaded.contains(&(SwitchId(2), SwitchId(6))));
        assert!(overloaded.contains(&(SwitchId(6), SwitchId(3))));
    }

    #[test]
    fn validate_flags_missing_link() {
        let mut topo = Topology::new("t");
        for i in 0..3 {
            topo.add_switch(SwitchId(i));
        }
        topo.add_edge(SwitchId(0), SwitchId(1), 10.0, Some(1.0)).unwrap();
        let cfg = NetworkConfig::from_flows([Flow::new(
            "a",
            1.0,
            vec![SwitchId(0), SwitchId(2)],
        )]);
        let viol = validate_config(&topo, &cfg);
        assert!(matches!(viol[0], ConfigViolation::MissingLink { .. }));
    }

    #[test]
    fn diff_fig1_updates_red_and_blue_only() {
        let inst = scenarios::fig1();
        let updates = diff_update(&inst.current, &inst.target);
        let ids: Vec<&str> = updates.iter().map(|u| u.flow.0.as_str()).collect();
        // F_G keeps (s2 s6 s3), so only F_B and F_R move.
        assert_eq!(ids, vec!["B", "R"]);
        assert!(updates.iter().all(|u| u.kind == UpdateKind::Move));
    }

    #[test]
    fn diff_identity_and_add() {
        let inst = scenarios::fig1();
        assert!(diff_update(&inst.current, &inst.current).is_empty());

        let mut target = inst.current.clone();
        target.insert(Flow::new("X", 2.0, vec![SwitchId(1), SwitchId(2)]));
        let updates = diff_update(&inst.current, &target);
        assert_eq!(updates.len(), 1);
        assert_eq!(updates[0].kind, UpdateKind::Add);
        assert!(updates[0].old_path.is_empty());
    }

    #[test]
    fn diff_flags_volume_change() {
        let a = NetworkConfig::from_flows([Flow::new("f", 2.0, vec![SwitchId(0), SwitchId(1)])]);
        let b = NetworkConfig::from_flows([Flow::new("f", 3.0, vec![SwitchId(0), SwitchId(1)])]);
        let updates = diff_update(&a, &b);
        assert_eq!(updates.len(), 1);
        assert_eq!(updates[0].kind, UpdateKind::VolumeChange);
    }
}
