//! Workload generation: topology files, gravity-model traffic, 3-path route
//! construction, configuration sequences and failure-driven rerouting.
//!
//! Everything is seed-deterministic: the same (topology, seed, parameters)
//! triple reproduces the same workload byte for byte.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Deserialize;

use crate::error::WorkloadError;
use crate::model::{
    link_loads, validate_config, vol_le, Flow, FlowId, Link, NetworkConfig, SwitchId, Topology,
};
use crate::sim::link_latency_ms;

/// On-disk topology schema.
#[derive(Debug, Deserialize)]
struct TopologyFile {
    name: Option<String>,
    #[serde(default)]
    directed: bool,
    switches: Vec<SwitchDecl>,
    links: Vec<LinkDecl>,
}

#[derive(Debug, Deserialize)]
struct SwitchDecl {
    id: u32,
    lat: Option<f64>,
    lon: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct LinkDecl {
    src: u32,
    dst: u32,
    capacity_gbps: Option<f64>,
    weight: Option<f64>,
    latency_ms: Option<f64>,
}

/// Loads a topology file, resolving weight-derived capacities: capacity is
/// proportional to inverse weight, scaled into [1, 100] Gbps.
pub fn load_topology(path: impl AsRef<Path>) -> Result<Topology, WorkloadError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| WorkloadError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_topology(&text).map_err(|e| match e {
        WorkloadError::Parse { detail, .. } => WorkloadError::Parse {
            path: path.display().to_string(),
            detail,
        },
        other => other,
    })
}

pub fn parse_topology(text: &str) -> Result<Topology, WorkloadError> {
    let file: TopologyFile = serde_json::from_str(text).map_err(|e| WorkloadError::Parse {
        path: "<input>".into(),
        detail: e.to_string(),
    })?;
    let mut topo = Topology::new(file.name.unwrap_or_else(|| "unnamed".into()));
    for s in &file.switches {
        let id = SwitchId(s.id);
        if topo.switches.contains(&id) {
            return Err(WorkloadError::Schema(format!("switch {id} declared twice")));
        }
        topo.add_switch(id);
        match (s.lat, s.lon) {
            (Some(lat), Some(lon)) => {
                topo.coordinates.insert(id, (lat, lon));
            }
            (None, None) => {}
            _ => {
                return Err(WorkloadError::Schema(format!(
                    "switch {id}: lat and lon must be given together"
                )))
            }
        }
    }
    let min_weight = file
        .links
        .iter()
        .filter_map(|l| l.weight)
        .fold(f64::INFINITY, f64::min);
    for l in &file.links {
        let capacity = match (l.capacity_gbps, l.weight) {
            (Some(c), None) => c,
            (None, Some(w)) => {
                if w <= 0.0 {
                    return Err(WorkloadError::Schema(format!(
                        "link {}->{}: weight must be positive",
                        l.src, l.dst
                    )));
                }
                (100.0 * min_weight / w).clamp(1.0, 100.0)
            }
            _ => {
                return Err(WorkloadError::Schema(format!(
                    "link {}->{}: exactly one of capacity_gbps or weight required",
                    l.src, l.dst
                )))
            }
        };
        let (a, b) = (SwitchId(l.src), SwitchId(l.dst));
        let add = |topo: &mut Topology, s, d| {
            topo.add_link(Link { src: s, dst: d, capacity, latency_ms: l.latency_ms })
                .map_err(|e| WorkloadError::Schema(e.to_string()))
        };
        add(&mut topo, a, b)?;
        if !file.directed {
            add(&mut topo, b, a)?;
        }
    }
    Ok(topo)
}

/// Serializes a topology back into the file schema (drawn edges collapse to
/// one direction when symmetric).
pub fn topology_to_json(topo: &Topology) -> String {
    let switches: Vec<serde_json::Value> = topo
        .switches
        .iter()
        .map(|s| {
            let mut v = serde_json::json!({ "id": s.0 });
            if let Some((lat, lon)) = topo.coordinates.get(s) {
                v["lat"] = serde_json::json!(lat);
                v["lon"] = serde_json::json!(lon);
            }
            v
        })
        .collect();
    let mut seen: BTreeSet<(SwitchId, SwitchId)> = BTreeSet::new();
    let mut links = Vec::new();
    for (key, link) in &topo.links {
        let rev = (key.1, key.0);
        if seen.contains(&rev) {
            continue;
        }
        seen.insert(*key);
        let mut v = serde_json::json!({
            "src": key.0 .0,
            "dst": key.1 .0,
            "capacity_gbps": link.capacity,
        });
        if let Some(ms) = link.latency_ms {
            v["latency_ms"] = serde_json::json!(ms);
        }
        links.push(v);
    }
    serde_json::to_string_pretty(&serde_json::json!({
        "name": topo.name,
        "switches": switches,
        "links": links,
    }))
    .expect("topology serializes")
}

fn derive_rng(seed: u64, stream: u64) -> ChaCha12Rng {
    // Cheap deterministic stream derivation.
    ChaCha12Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn exp_sample(rng: &mut ChaCha12Rng) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln()
}

/// Splits a total demand across pairs in proportion to the product of the
/// endpoint masses.
fn gravity_allocate(
    masses: &BTreeMap<SwitchId, f64>,
    pairs: &[(SwitchId, SwitchId)],
    total: f64,
) -> Vec<f64> {
    let products: Vec<f64> = pairs.iter().map(|(s, d)| masses[s] * masses[d]).collect();
    let sum: f64 = products.iter().sum();
    products.iter().map(|p| total * p / sum).collect()
}

/// Draws `flow_count` non-adjacent source/destination pairs and gravity-model
/// volumes summing to `utilization * average capacity * link count`.
pub fn gravity_volumes(
    topology: &Topology,
    flow_count: usize,
    seed: u64,
    utilization: f64,
) -> Result<Vec<(SwitchId, SwitchId, f64)>, WorkloadError> {
    if flow_count == 0 {
        return Err(WorkloadError::TooSmall("flow_count must be positive".into()));
    }
    let switches: Vec<SwitchId> = topology.switches.iter().copied().collect();
    let has_non_adjacent = switches.iter().any(|a| {
        switches
            .iter()
            .any(|b| a != b && !topology.adjacent(*a, *b))
    });
    if !has_non_adjacent {
        return Err(WorkloadError::TooSmall(
            "no non-adjacent switch pair exists".into(),
        ));
    }
    let mut rng = derive_rng(seed, 1);
    let masses: BTreeMap<SwitchId, f64> = switches
        .iter()
        .map(|s| (*s, exp_sample(&mut rng)))
        .collect();
    let pairs = draw_pairs(topology, &switches, flow_count, &mut rng);
    let avg_cap: f64 =
        topology.links.values().map(|l| l.capacity).sum::<f64>() / topology.links.len() as f64;
    let total = utilization * avg_cap * topology.links.len() as f64;
    let volumes = gravity_allocate(&masses, &pairs, total);
    Ok(pairs
        .into_iter()
        .zip(volumes)
        .map(|((s, d), v)| (s, d, v))
        .collect())
}

fn draw_pairs(
    topology: &Topology,
    switches: &[SwitchId],
    count: usize,
    rng: &mut ChaCha12Rng,
) -> Vec<(SwitchId, SwitchId)> {
    let mut pairs = Vec::with_capacity(count);
    while pairs.len() < count {
        let s = switches[rng.random_range(0..switches.len())];
        let d = switches[rng.random_range(0..switches.len())];
        if s != d && !topology.adjacent(s, d) {
            pairs.push((s, d));
        }
    }
    pairs
}

/// Latency-shortest path via Dijkstra; ties broken towards lower switch ids.
pub fn shortest_path(
    topology: &Topology,
    src: SwitchId,
    dst: SwitchId,
) -> Result<(Vec<SwitchId>, f64), WorkloadError> {
    let mut dist: BTreeMap<SwitchId, f64> = BTreeMap::new();
    let mut prev: BTreeMap<SwitchId, SwitchId> = BTreeMap::new();
    let mut heap: std::collections::BinaryHeap<
        std::cmp::Reverse<(ordered_ns::Ns, SwitchId)>,
    > = Default::default();
    dist.insert(src, 0.0);
    heap.push(std::cmp::Reverse((ordered_ns::Ns(0), src)));
    while let Some(std::cmp::Reverse((d, u))) = heap.pop() {
        if d.0 > ordered_ns::to_ns(dist[&u]) {
            continue;
        }
        if u == dst {
            break;
        }
        for v in topology.successors(u) {
            let w = link_latency_ms(topology, (u, v))
                .map_err(|_| WorkloadError::Schema(format!("link {u}->{v} has no latency")))?;
            let nd = dist[&u] + w;
            if dist.get(&v).map_or(true, |cur| nd + 1e-12 < *cur) {
                dist.insert(v, nd);
                prev.insert(v, u);
                heap.push(std::cmp::Reverse((ordered_ns::Ns(ordered_ns::to_ns(nd)), v)));
            }
        }
    }
    if !dist.contains_key(&dst) {
        return Err(WorkloadError::NoPath(src, dst));
    }
    let mut path = vec![dst];
    while *path.last().unwrap() != src {
        path.push(prev[path.last().unwrap()]);
    }
    path.reverse();
    Ok((path, dist[&dst]))
}

mod ordered_ns {
    //! Integer-nanosecond ordering key for Dijkstra determinism.
    #[derive(PartialEq, Eq, PartialOrd, Ord, Clone, Copy)]
    pub struct Ns(pub u64);
    pub fn to_ns(ms: f64) -> u64 {
        (ms * 1e6).round() as u64
    }
}

/// Total propagation latency of a path in milliseconds.
pub fn path_latency(topology: &Topology, path: &[SwitchId]) -> f64 {
    path.windows(2)
        .map(|w| link_latency_ms(topology, (w[0], w[1])).unwrap_or(f64::INFINITY))
        .sum()
}

const TRANSIT_RETRIES: usize = 30;
const STRETCH_BOUND: f64 = 1.5;

/// Three cycle-free paths through random transit nodes, each within 1.5x the
/// latency of the shortest path. Falls back to the plain shortest path when
/// a bounded number of transit draws fails.
pub fn three_paths(
    topology: &Topology,
    src: SwitchId,
    dst: SwitchId,
    seed: u64,
) -> Result<[Vec<SwitchId>; 3], WorkloadError> {
    let mut rng = derive_rng(seed, 2);
    let (sp, sp_cost) = shortest_path(topology, src, dst)?;
    let switches: Vec<SwitchId> = topology.switches.iter().copied().collect();
    let mut out: Vec<Vec<SwitchId>> = Vec::with_capacity(3);
    for _ in 0..3 {
        let mut chosen = None;
        for _ in 0..TRANSIT_RETRIES {
            let t = switches[rng.random_range(0..switches.len())];
            if t == src || t == dst {
                continue;
            }
            let Ok((first, c1)) = shortest_path(topology, src, t) else { continue };
            let Ok((second, c2)) = shortest_path(topology, t, dst) else { continue };
            let mut path = first;
            path.extend_from_slice(&second[1..]);
            if !crate::model::path_is_simple(&path) {
                continue;
            }
            if c1 + c2 <= STRETCH_BOUND * sp_cost + 1e-9 {
                chosen = Some(path);
                break;
            }
        }
        out.push(chosen.unwrap_or_else(|| sp.clone()));
    }
    Ok([out[0].clone(), out[1].clone(), out[2].clone()])
}

/// Parameters of a generated configuration sequence.
#[derive(Debug, Clone)]
pub struct WorkloadParams {
    pub flow_pairs: usize,
    pub utilization: f64,
    pub seed: u64,
}

impl Default for WorkloadParams {
    fn default() -> Self {
        WorkloadParams { flow_pairs: 60, utilization: 0.7, seed: 1 }
    }
}

/// Generates `count` valid configurations. Pair endpoints and gravity
/// volumes are drawn once; each configuration re-routes every pair over three
/// fresh transit paths (a third of the pair volume each) and trims
/// largest-volume flows until all links fit.
pub fn config_sequence(
    topology: &Topology,
    count: usize,
    params: &WorkloadParams,
) -> Result<Vec<NetworkConfig>, WorkloadError> {
    let demands = gravity_volumes(topology, params.flow_pairs, params.seed, params.utilization)?;
    let mut out = Vec::with_capacity(count);
    for cfg_idx in 0..count {
        let mut config = NetworkConfig::new();
        for (p, (s, d, vol)) in demands.iter().enumerate() {
            let path_seed = params
                .seed
                .wrapping_add((cfg_idx as u64 + 1).wrapping_mul(0x51_7c_c1_b7))
                .wrapping_add((p as u64).wrapping_mul(0x2545_f491_4f6c_dd1d));
            let paths = three_paths(topology, *s, *d, path_seed)?;
            for (k, path) in paths.iter().enumerate() {
                config.insert(Flow {
                    id: FlowId::new(format!("f{p}k{k}")),
                    volume: vol / 3.0,
                    path: path.clone(),
                });
            }
        }
        trim_to_capacity(topology, &mut config);
        debug_assert!(validate_config(topology, &config).is_empty());
        out.push(config);
    }
    Ok(out)
}

/// Removes flows, largest volume first among those crossing an overloaded
/// link, until every link load fits its capacity.
pub fn trim_to_capacity(topology: &Topology, config: &mut NetworkConfig) -> Vec<FlowId> {
    let mut removed = Vec::new();
    loop {
        let loads = link_loads(topology, config);
        let overloaded: BTreeSet<_> = loads
            .iter()
            .filter(|(k, load)| !vol_le(**load, topology.links[*k].capacity))
            .map(|(k, _)| *k)
            .collect();
        if overloaded.is_empty() {
            return removed;
        }
        let victim = config
            .flows
            .values()
            .filter(|f| f.links().any(|l| overloaded.contains(&l)))
            .max_by(|a, b| {
                a.volume
                    .partial_cmp(&b.volume)
                    .unwrap()
                    .then_with(|| b.id.cmp(&a.id))
            })
            .map(|f| f.id.clone())
            .expect("an overloaded link carries at least one flow");
        config.flows.remove(&victim);
        removed.push(victim);
    }
}

/// Outcome of failure-driven rerouting.
#[derive(Debug, Clone)]
pub struct RerouteOutcome {
    pub target: NetworkConfig,
    /// Drawn edges removed from service.
    pub failed_edges: Vec<(SwitchId, SwitchId)>,
    /// Flows dropped because the failure disconnected their endpoints.
    pub disconnected: Vec<FlowId>,
    /// Flows dropped by capacity trimming.
    pub trimmed: Vec<FlowId>,
}

/// Fails random edges until at least `fraction` of the flows are affected,
/// reroutes the affected flows over new shortest paths in the reduced
/// topology, and trims the result to capacity.
pub fn failure_reroute(
    topology: &Topology,
    config: &NetworkConfig,
    fraction: f64,
    seed: u64,
) -> Result<RerouteOutcome, WorkloadError> {
    assert!(fraction > 0.0 && fraction <= 1.0, "fraction in (0, 1]");
    let mut rng = derive_rng(seed, 3);
    let mut edges: Vec<(SwitchId, SwitchId)> = topology
        .links
        .keys()
        .filter(|(a, b)| a < b)
        .copied()
        .collect();
    let mut reduced = topology.clone();
    let mut failed = Vec::new();
    let mut affected: BTreeSet<FlowId> = BTreeSet::new();
    let needed = (fraction * config.flows.len() as f64).ceil() as usize;
    while affected.len() < needed && !edges.is_empty() {
        let idx = rng.random_range(0..edges.len());
        let (a, b) = edges.swap_remove(idx);
        reduced.links.remove(&(a, b));
        reduced.links.remove(&(b, a));
        failed.push((a, b));
        for f in config.flows.values() {
            if f.links().any(|l| l == (a, b) || l == (b, a)) {
                affected.insert(f.id.clone());
            }
        }
    }
    let mut target = NetworkConfig::new();
    let mut disconnected = Vec::new();
    for f in config.flows.values() {
        if !affected.contains(&f.id) {
            target.insert(f.clone());
            continue;
        }
        let (src, dst) = (f.path[0], *f.path.last().unwrap());
        match shortest_path(&reduced, src, dst) {
            Ok((path, _)) => target.insert(Flow { id: f.id.clone(), volume: f.volume, path }),
            Err(_) => disconnected.push(f.id.clone()),
        }
    }
    let trimmed = trim_to_capacity(&reduced, &mut target);
    Ok(RerouteOutcome { target, failed_edges: failed, disconnected, trimmed })
}

/// Synthetic ISP-style topology: `n` switches placed in a continental
/// bounding box, a random spanning tree biased towards short edges plus
/// extra short links, capacities inversely proportional to link latency.
pub fn synthetic_isp(n: usize, seed: u64) -> Topology {
    assert!(n >= 3);
    let mut rng = derive_rng(seed, 4);
    let mut topo = Topology::new(format!("isp-{n}"));
    for i in 0..n {
        let id = SwitchId(i as u32);
        topo.add_switch(id);
        let lat = 25.0 + 40.0 * rng.random::<f64>();
        let lon = -125.0 + 65.0 * rng.random::<f64>();
        topo.coordinates.insert(id, (lat, lon));
    }
    let dist = |topo: &Topology, a: SwitchId, b: SwitchId| {
        crate::sim::great_circle_km(topo.coordinates[&a], topo.coordinates[&b])
    };
    // Spanning tree: each new node attaches to the closest of a few random
    // earlier nodes.
    let mut drawn: BTreeSet<(SwitchId, SwitchId)> = BTreeSet::new();
    for i in 1..n {
        let id = SwitchId(i as u32);
        let mut best: Option<SwitchId> = None;
        for _ in 0..4 {
            let j = SwitchId(rng.random_range(0..i) as u32);
            if best.map_or(true, |b| dist(&topo, id, j) < dist(&topo, id, b)) {
                best = Some(j);
            }
        }
        drawn.insert((id.min(best.unwrap()), id.max(best.unwrap())));
    }
    // Extra short edges up to ~3x average degree.
    let target_edges = (n * 3) / 2;
    let mut guard = 0;
    while drawn.len() < target_edges && guard < 50 * n {
        guard += 1;
        let a = SwitchId(rng.random_range(0..n) as u32);
        let b = SwitchId(rng.random_range(0..n) as u32);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if drawn.contains(&key) {
            continue;
        }
        // Bias towards short edges: accept with probability shrinking in
        // distance relative to the box diagonal.
        let p = (-3.0 * dist(&topo, a, b) / 6000.0).exp();
        if rng.random::<f64>() < p {
            drawn.insert(key);
        }
    }
    let min_lat = drawn
        .iter()
        .map(|(a, b)| dist(&topo, *a, *b))
        .fold(f64::INFINITY, f64::min)
        .max(1.0);
    for (a, b) in drawn {
        let d = dist(&topo, a, b).max(1.0);
        // RocketFuel-style weights grow with latency; capacity is inversely
        // proportional, scaled into [1, 100].
        let capacity = (100.0 * min_lat / d).clamp(1.0, 100.0);
        topo.add_edge(a, b, capacity, None).unwrap();
    }
    topo
}

/// Knobs for [`random_small_instance`].
#[derive(Debug, Clone)]
pub struct SmallInstanceParams {
    pub max_switches: usize,
    pub max_flows: usize,
    /// Capacities drawn uniformly from this set.
    pub capacities: Vec<f64>,
    /// Probability that a flow is rerouted in the target configuration.
    pub move_probability: f64,
}

impl Default for SmallInstanceParams {
    fn default() -> Self {
        SmallInstanceParams {
            max_switches: 8,
            max_flows: 6,
            capacities: vec![5.0, 10.0],
            move_probability: 0.8,
        }
    }
}

fn random_simple_path(
    topo: &Topology,
    src: SwitchId,
    dst: SwitchId,
    rng: &mut ChaCha12Rng,
) -> Option<Vec<SwitchId>> {
    // Randomized DFS; neighbor order shuffled per step.
    fn dfs(
        topo: &Topology,
        at: SwitchId,
        dst: SwitchId,
        path: &mut Vec<SwitchId>,
        rng: &mut ChaCha12Rng,
    ) -> bool {
        if at == dst {
            return true;
        }
        let mut next: Vec<SwitchId> = topo.successors(at).collect();
        for i in (1..next.len()).rev() {
            next.swap(i, rng.random_range(0..=i));
        }
        for n in next {
            if path.contains(&n) {
                continue;
            }
            path.push(n);
            if dfs(topo, n, dst, path, rng) {
                return true;
            }
            path.pop();
        }
        false
    }
    let mut path = vec![src];
    dfs(topo, src, dst, &mut path, rng).then_some(path)
}

/// A random small update instance: a ring-plus-chords topology with
/// capacities from a small set, a valid initial configuration of random
/// simple-path flows, and a valid target that reroutes most of them (with the
/// occasional pure add or remove). Used by the randomized property suites.
pub fn random_small_instance(
    seed: u64,
    params: &SmallInstanceParams,
) -> crate::controller::UpdateInstance {
    let mut rng = derive_rng(seed, 5);
    let n = rng.random_range(4..=params.max_switches.max(4)) as u32;
    let mut topo = Topology::new(format!("small-{seed}"));
    for i in 0..n {
        topo.add_switch(SwitchId(i));
    }
    let mut cap = || params.capacities[rng.random_range(0..params.capacities.len())];
    for i in 0..n {
        let c = cap();
        topo.add_edge(SwitchId(i), SwitchId((i + 1) % n), c, Some(1.0)).unwrap();
    }
    let mut rng = derive_rng(seed, 6);
    for _ in 0..n / 2 {
        let a = SwitchId(rng.random_range(0..n));
        let b = SwitchId(rng.random_range(0..n));
        if a != b && !topo.adjacent(a, b) {
            let c = params.capacities[rng.random_range(0..params.capacities.len())];
            topo.add_edge(a, b, c, Some(1.0)).unwrap();
        }
    }

    let mut current = NetworkConfig::new();
    let flow_count = rng.random_range(1..=params.max_flows.max(1));
    for f in 0..flow_count {
        let src = SwitchId(rng.random_range(0..n));
        let dst = SwitchId(rng.random_range(0..n));
        if src == dst {
            continue;
        }
        let Some(path) = random_simple_path(&topo, src, dst, &mut rng) else { continue };
        let volume = rng.random_range(1..=5) as f64;
        let flow = Flow::new(format!("f{f}"), volume, path);
        current.insert(flow.clone());
        if !validate_config(&topo, &current).is_empty() {
            current.flows.remove(&flow.id);
        }
    }

    // Target: reroute flows where a valid alternative exists; occasionally
    // drop one or add a fresh one.
    let mut target = current.clone();
    let ids: Vec<FlowId> = current.flows.keys().cloned().collect();
    for id in &ids {
        let roll: f64 = rng.random();
        if roll < 0.1 {
            target.flows.remove(id);
            continue;
        }
        if roll < 1.0 - params.move_probability {
            continue;
        }
        let old = current.flows[id].clone();
        let (src, dst) = (old.path[0], *old.path.last().unwrap());
        if let Some(path) = random_simple_path(&topo, src, dst, &mut rng) {
            let prev = target.flows.insert(
                id.clone(),
                Flow { id: id.clone(), volume: old.volume, path },
            );
            if !validate_config(&topo, &target).is_empty() {
                target.flows.insert(id.clone(), prev.expect("flow existed"));
            }
        }
    }
    if rng.random::<f64>() < 0.3 {
        let src = SwitchId(rng.random_range(0..n));
        let dst = SwitchId(rng.random_range(0..n));
        if src != dst {
            if let Some(path) = random_simple_path(&topo, src, dst, &mut rng) {
                let flow = Flow::new("fnew", rng.random_range(1..=3) as f64, path);
                target.insert(flow.clone());
                if !validate_config(&topo, &target).is_empty() {
                    target.flows.remove(&flow.id);
                }
            }
        }
    }
    debug_assert!(validate_config(&topo, &current).is_empty());
    debug_assert!(validate_config(&topo, &target).is_empty());
    crate::controller::UpdateInstance { topology: topo, current, target }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: u32) -> Topology {
        let mut t = Topology::new("ring");
        for i in 0..n {
            t.add_switch(SwitchId(i));
        }
        for i in 0..n {
            t.add_edge(SwitchId(i), SwitchId((i + 1) % n), 10.0, Some(1.0)).unwrap();
        }
        t
    }

    #[test]
    fn parse_minimal_topology() {
        let text = r#"{
            "name": "t",
            "switches": [{"id": 0}, {"id": 1}],
            "links": [{"src": 0, "dst": 1, "capacity_gbps": 2.5, "latency_ms": 3.0}]
        }"#;
        let topo = parse_topology(text).unwrap();
        assert_eq!(topo.switches.len(), 2);
        assert!(topo.has_link(SwitchId(0), SwitchId(1)));
        assert!(topo.has_link(SwitchId(1), SwitchId(0)));
        assert_eq!(topo.link(SwitchId(0), SwitchId(1)).unwrap().capacity, 2.5);
    }

    #[test]
    fn weight_derived_capacities_scale_inversely() {
        let text = r#"{
            "switches": [{"id": 0}, {"id": 1}, {"id": 2}],
            "links": [
                {"src": 0, "dst": 1, "weight": 1.0, "latency_ms": 1.0},
                {"src": 1, "dst": 2, "weight": 4.0, "latency_ms": 1.0}
            ]
        }"#;
        let topo = parse_topology(text).unwrap();
        assert_eq!(topo.link(SwitchId(0), SwitchId(1)).unwrap().capacity, 100.0);
        assert_eq!(topo.link(SwitchId(1), SwitchId(2)).unwrap().capacity, 25.0);
    }

    #[test]
    fn malformed_link_names_field() {
        let text = r#"{
            "switches": [{"id": 0}, {"id": 1}],
            "links": [{"src": 0, "dst": 1}]
        }"#;
        let err = parse_topology(text).unwrap_err();
        assert!(err.to_string().contains("capacity_gbps or weight"));
    }

    #[test]
    fn gravity_equal_masses_give_equal_volumes() {
        let masses: BTreeMap<SwitchId, f64> =
            (0..4).map(|i| (SwitchId(i), 1.0)).collect();
        let pairs = vec![
            (SwitchId(0), SwitchId(2)),
            (SwitchId(1), SwitchId(3)),
            (SwitchId(2), SwitchId(0)),
        ];
        let vols = gravity_allocate(&masses, &pairs, 9.0);
        assert!(vols.iter().all(|v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn gravity_dominant_mass_dominates() {
        let mut masses: BTreeMap<SwitchId, f64> =
            (0..4).map(|i| (SwitchId(i), 1.0)).collect();
        masses.insert(SwitchId(0), 10.0);
        let pairs = vec![
            (SwitchId(0), SwitchId(2)),
            (SwitchId(1), SwitchId(3)),
        ];
        let vols = gravity_allocate(&masses, &pairs, 11.0);
        assert!((vols[0] / vols[1] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn gravity_pair_draw_is_roughly_uniform() {
        // Chi-square sanity over the ring's non-adjacent ordered pairs at the
        // 10% level (deterministic under the fixed seed).
        let topo = ring(8);
        let draws = gravity_volumes(&topo, 10_000, 42, 0.7).unwrap();
        let mut counts: BTreeMap<(SwitchId, SwitchId), usize> = BTreeMap::new();
        for (s, d, _) in &draws {
            *counts.entry((*s, *d)).or_insert(0) += 1;
        }
        // 8*7 ordered pairs minus 16 adjacent ordered pairs = 40 categories.
        let categories = 40.0;
        let expected = 10_000.0 / categories;
        let chi2: f64 = counts
            .values()
            .map(|c| {
                let d = *c as f64 - expected;
                d * d / expected
            })
            .sum();
        // Upper 10% quantile of chi-square with 39 dof.
        assert!(chi2 < 50.66, "chi2 = {chi2}");
        assert_eq!(counts.len(), 40);
    }

    #[test]
    fn gravity_is_deterministic() {
        let topo = ring(8);
        let a = gravity_volumes(&topo, 50, 7, 0.7).unwrap();
        let b = gravity_volumes(&topo, 50, 7, 0.7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gravity_rejects_clique() {
        let mut t = Topology::new("triangle");
        for i in 0..3 {
            t.add_switch(SwitchId(i));
        }
        t.add_edge(SwitchId(0), SwitchId(1), 1.0, Some(1.0)).unwrap();
        t.add_edge(SwitchId(1), SwitchId(2), 1.0, Some(1.0)).unwrap();
        t.add_edge(SwitchId(0), SwitchId(2), 1.0, Some(1.0)).unwrap();
        assert!(gravity_volumes(&t, 5, 1, 0.7).is_err());
    }

    #[test]
    fn three_paths_respect_stretch_on_ring() {
        let topo = ring(8);
        // Enumerate all simple paths 0 -> 4 to find the shortest; on a ring
        // both directions cost 4, so the stretch bound admits cost <= 6,
        // which only the two 4-hop paths satisfy.
        let paths = three_paths(&topo, SwitchId(0), SwitchId(4), 3).unwrap();
        for p in &paths {
            assert!(crate::model::path_is_simple(p));
            assert!(path_latency(&topo, p) <= 1.5 * 4.0 + 1e-9);
        }
        let again = three_paths(&topo, SwitchId(0), SwitchId(4), 3).unwrap();
        assert_eq!(paths, again);
    }

    #[test]
    fn three_paths_single_option() {
        let mut t = Topology::new("line");
        for i in 0..3 {
            t.add_switch(SwitchId(i));
        }
        t.add_edge(SwitchId(0), SwitchId(1), 1.0, Some(1.0)).unwrap();
        t.add_edge(SwitchId(1), SwitchId(2), 1.0, Some(1.0)).unwrap();
        let paths = three_paths(&t, SwitchId(0), SwitchId(2), 9).unwrap();
        for p in &paths {
            assert_eq!(p, &vec![SwitchId(0), SwitchId(1), SwitchId(2)]);
        }
    }

    #[test]
    fn config_sequence_is_valid_and_deterministic() {
        let topo = ring(8);
        let params = WorkloadParams { flow_pairs: 6, utilization: 0.7, seed: 5 };
        let seq = config_sequence(&topo, 5, &params).unwrap();
        assert_eq!(seq.len(), 5);
        for cfg in &seq {
            assert!(validate_config(&topo, cfg).is_empty());
            assert!(!cfg.flows.is_empty());
        }
        let again = config_sequence(&topo, 5, &params).unwrap();
        assert_eq!(seq, again);
    }

    #[test]
    fn trim_removes_largest_first() {
        let topo = ring(4);
        let mut cfg = NetworkConfig::from_flows([
            Flow::new("big", 9.0, vec![SwitchId(0), SwitchId(1)]),
            Flow::new("small", 3.0, vec![SwitchId(0), SwitchId(1)]),
        ]);
        let removed = trim_to_capacity(&topo, &mut cfg);
        assert_eq!(removed, vec![FlowId::new("big")]);
        assert!(cfg.flows.contains_key(&FlowId::new("small")));
    }

    #[test]
    fn failure_reroute_moves_affected_flows() {
        let topo = ring(8);
        let params = WorkloadParams { flow_pairs: 6, utilization: 0.5, seed: 11 };
        let cfg = &config_sequence(&topo, 1, &params).unwrap()[0];
        let outcome = failure_reroute(&topo, cfg, 0.25, 13).unwrap();
        assert!(!outcome.failed_edges.is_empty());
        assert!(validate_config(&topo, &outcome.target).is_empty());
        // Deterministic under the seed.
        let again = failure_reroute(&topo, cfg, 0.25, 13).unwrap();
        assert_eq!(outcome.target, again.target);
        // No surviving flow crosses a failed edge.
        for f in outcome.target.flows.values() {
            for (a, b) in f.links() {
                assert!(!outcome
                    .failed_edges
                    .iter()
                    .any(|(x, y)| (a, b) == (*x, *y) || (a, b) == (*y, *x)));
            }
        }
    }

    #[test]
    fn synthetic_isp_is_connected_and_deterministic() {
        let a = synthetic_isp(50, 21);
        let b = synthetic_isp(50, 21);
        assert_eq!(a.links.len(), b.links.len());
        assert_eq!(a.coordinates, b.coordinates);
        // Connectivity: shortest path exists between extremes.
        for target in 1..50 {
            assert!(shortest_path(&a, SwitchId(0), SwitchId(target)).is_ok());
        }
        // Round-trips through the file schema.
        let json = topology_to_json(&a);
        let back = parse_topology(&json).unwrap();
        assert_eq!(back.links.len(), a.links.len());
    }
}
