//! Bipartite dependency graph over segment-update operations and links,
//! criticality detection, and the three-level priority assignment.
//!
//! An operation node requires capacity on the links it joins (new subpath
//! minus old) and frees capacity on the links it leaves (old minus new), both
//! weighted by the segment volume. Link nodes carry the residual capacity of
//! the current configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{
    link_loads, path_links, vol_le, LinkKey, NetworkConfig, Topology, VOL_EPS,
};
use crate::segmentation::{Segment, SegmentId};

/// Minimum volume a split may move; smaller residuals count as no progress.
pub const SPLIT_QUANTUM: f64 = 1e-6;

/// One segment-update operation with its capacity footprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpNode {
    pub segment: SegmentId,
    pub volume: f64,
    /// Links on the new subpath that are not on the old one.
    pub requires: Vec<(LinkKey, f64)>,
    /// Links on the old subpath that are not on the new one.
    pub frees: Vec<(LinkKey, f64)>,
}

/// A link with its residual capacity under the current configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkNode {
    pub link: LinkKey,
    pub residual: f64,
}

/// Priority levels of the scheduling heuristic, ordered `Low < Medium < High`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Priority {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DependencyGraph {
    pub ops: BTreeMap<SegmentId, OpNode>,
    pub links: BTreeMap<LinkKey, LinkNode>,
}

/// Outcome of [`classify_deadlock`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeadlockClass {
    /// Some operation is executable; no deadlock.
    None,
    /// Progress is possible by moving a fraction of some operation's volume.
    Splittable,
    /// No property-preserving progress exists.
    Unsplittable,
}

impl DependencyGraph {
    /// Weighted `op -> link` capacity-release edges.
    pub fn e_free(&self) -> impl Iterator<Item = (&SegmentId, LinkKey, f64)> + '_ {
        self.ops
            .values()
            .flat_map(|op| op.frees.iter().map(move |(l, w)| (&op.segment, *l, *w)))
    }

    /// Weighted `link -> op` capacity-requirement edges.
    pub fn e_req(&self) -> impl Iterator<Item = (LinkKey, &SegmentId, f64)> + '_ {
        self.ops
            .values()
            .flat_map(|op| op.requires.iter().map(move |(l, w)| (*l, &op.segment, *w)))
    }

    pub fn residual(&self, link: LinkKey) -> f64 {
        self.links.get(&link).map_or(0.0, |l| l.residual)
    }

    /// An operation is executable when every required link has residual
    /// capacity for its full volume.
    pub fn executable(&self, id: &SegmentId) -> bool {
        self.ops[id]
            .requires
            .iter()
            .all(|(l, w)| vol_le(*w, self.residual(*l)))
    }

    pub fn executable_ops(&self) -> BTreeSet<SegmentId> {
        self.ops
            .keys()
            .filter(|id| self.executable(id))
            .cloned()
            .collect()
    }

    /// Plain-text edge list for debugging.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for l in self.links.values() {
            let _ = writeln!(out, "link {}->{} residual {}", l.link.0, l.link.1, l.residual);
        }
        for op in self.ops.values() {
            for (l, w) in &op.requires {
                let _ = writeln!(out, "req  {}->{} -> {} weight {w}", l.0, l.1, op.segment);
            }
            for (l, w) in &op.frees {
                let _ = writeln!(out, "free {} -> {}->{} weight {w}", op.segment, l.0, l.1);
            }
        }
        out
    }
}

fn footprint(segment: &Segment) -> (Vec<LinkKey>, Vec<LinkKey>) {
    let old: BTreeSet<LinkKey> = path_links(&segment.old_sub).collect();
    let new: BTreeSet<LinkKey> = path_links(&segment.new_sub).collect();
    (
        new.difference(&old).copied().collect(),
        old.difference(&new).copied().collect(),
    )
}

/// Builds the dependency graph for a set of segments against the current
/// configuration's residual capacities. Trivial segments contribute no nodes.
pub fn build_dependency_graph(
    segments: &[Segment],
    topology: &Topology,
    current: &NetworkConfig,
) -> Result<DependencyGraph, ModelError> {
    let loads = link_loads(topology, current);
    let mut g = DependencyGraph::default();
    for (key, link) in &topology.links {
        g.links.insert(
            *key,
            LinkNode { link: *key, residual: (link.capacity - loads[key]).max(0.0) },
        );
    }
    for seg in segments {
        if seg.is_trivial() {
            continue;
        }
        let (required, freed) = footprint(seg);
        for l in required.iter().chain(freed.iter()) {
            if !topology.links.contains_key(l) {
                return Err(ModelError::UnknownLink(l.0, l.1));
            }
        }
        g.ops.insert(
            seg.id.clone(),
            OpNode {
                segment: seg.id.clone(),
                volume: seg.volume,
                requires: required.into_iter().map(|l| (l, seg.volume)).collect(),
                frees: freed.into_iter().map(|l| (l, seg.volume)).collect(),
            },
        );
    }
    Ok(g)
}

/// Operations whose freed capacity directly enables another operation that
/// would otherwise stay blocked.
///
/// "Otherwise blocked" is judged against the optimistic residual: the current
/// residual plus every other operation's release into that link. The enabling
/// test then asks whether this operation's own release closes the gap.
pub fn find_critical_ops(g: &DependencyGraph) -> BTreeSet<SegmentId> {
    let mut critical = BTreeSet::new();
    for op in g.ops.values() {
        'links: for (link, freed) in &op.frees {
            let optimistic: f64 = g.residual(*link)
                + g.ops
                    .values()
                    .filter(|o| o.segment != op.segment)
                    .flat_map(|o| o.frees.iter())
                    .filter(|(l, _)| l == link)
                    .map(|(_, w)| w)
                    .sum::<f64>();
            for other in g.ops.values() {
                if other.segment == op.segment {
                    continue;
                }
                for (l, needed) in &other.requires {
                    if l == link
                        && !vol_le(*needed, optimistic)
                        && vol_le(*needed, optimistic + freed)
                    {
                        critical.insert(op.segment.clone());
                        break 'links;
                    }
                }
            }
        }
    }
    critical
}

/// Op-to-op adjacency: `a -> b` iff `a` frees some link that `b` requires.
fn op_adjacency(g: &DependencyGraph) -> BTreeMap<SegmentId, Vec<SegmentId>> {
    let mut by_req: BTreeMap<LinkKey, Vec<&SegmentId>> = BTreeMap::new();
    for op in g.ops.values() {
        for (l, _) in &op.requires {
            by_req.entry(*l).or_default().push(&op.segment);
        }
    }
    g.ops
        .values()
        .map(|op| {
            let mut next: Vec<SegmentId> = op
                .frees
                .iter()
                .flat_map(|(l, _)| by_req.get(l).into_iter().flatten())
                .filter(|id| ***id != op.segment)
                .map(|id| (*id).clone())
                .collect();
            next.sort_unstable();
            next.dedup();
            (op.segment.clone(), next)
        })
        .collect()
}

fn reachable_from(
    start: &SegmentId,
    adj: &BTreeMap<SegmentId, Vec<SegmentId>>,
) -> BTreeSet<SegmentId> {
    let mut seen = BTreeSet::new();
    let mut queue = std::collections::VecDeque::new();
    for n in &adj[start] {
        if seen.insert(n.clone()) {
            queue.push_back(n.clone());
        }
    }
    while let Some(n) = queue.pop_front() {
        for m in &adj[&n] {
            if seen.insert(m.clone()) {
                queue.push_back(m.clone());
            }
        }
    }
    seen
}

/// Budget of candidate forward paths per (op, critical) query; beyond it the
/// op is conservatively left at Medium.
const CYCLE_SEARCH_BUDGET: usize = 64;

/// Searches for a simple cycle through both `a` and `b`: a simple path
/// `a -> b` plus a return path `b -> a` avoiding its interior. Enumerates
/// forward candidates depth-first with reachability pruning, bounded by
/// [`CYCLE_SEARCH_BUDGET`]. On success returns all ops on the found cycle.
fn simple_cycle_through(
    adj: &BTreeMap<SegmentId, Vec<SegmentId>>,
    reach: &BTreeMap<&SegmentId, BTreeSet<SegmentId>>,
    a: &SegmentId,
    b: &SegmentId,
) -> Option<Vec<SegmentId>> {
    fn return_path(
        adj: &BTreeMap<SegmentId, Vec<SegmentId>>,
        from: &SegmentId,
        to: &SegmentId,
        avoid: &[SegmentId],
    ) -> Option<Vec<SegmentId>> {
        let mut prev: BTreeMap<SegmentId, SegmentId> = BTreeMap::new();
        let mut queue = std::collections::VecDeque::from([from.clone()]);
        let mut seen: BTreeSet<SegmentId> = BTreeSet::from([from.clone()]);
        while let Some(n) = queue.pop_front() {
            for m in &adj[&n] {
                if m == to {
                    let mut path = vec![n.clone()];
                    let mut cur = n.clone();
                    while let Some(p) = prev.get(&cur) {
                        path.push(p.clone());
                        cur = p.clone();
                    }
                    path.reverse();
                    return Some(path); // from .. to-predecessor
                }
                if avoid.contains(m) || m == from || !seen.insert(m.clone()) {
                    continue;
                }
                prev.insert(m.clone(), n.clone());
                queue.push_back(m.clone());
            }
        }
        None
    }

    fn dfs(
        adj: &BTreeMap<SegmentId, Vec<SegmentId>>,
        reach: &BTreeMap<&SegmentId, BTreeSet<SegmentId>>,
        a: &SegmentId,
        b: &SegmentId,
        stack: &mut Vec<SegmentId>,
        budget: &mut usize,
    ) -> Option<Vec<SegmentId>> {
        let last = stack.last().unwrap().clone();
        for next in &adj[&last] {
            if *budget == 0 {
                return None;
            }
            if next == b {
                *budget -= 1;
                // stack = a .. last; interior excludes the endpoints.
                if let Some(ret) = return_path(adj, b, a, &stack[1..]) {
                    let mut cycle = stack.clone();
                    cycle.extend(ret);
                    return Some(cycle);
                }
                continue;
            }
            if next == a || stack.contains(next) || !reach[next].contains(b) {
                continue;
            }
            stack.push(next.clone());
            if let Some(found) = dfs(adj, reach, a, b, stack, budget) {
                return Some(found);
            }
            stack.pop();
        }
        None
    }

    let mut budget = CYCLE_SEARCH_BUDGET;
    let mut stack = vec![a.clone()];
    dfs(adj, reach, a, b, &mut stack, &mut budget)
}

/// Assigns a priority to every operation node.
///
/// Low: the op lies on no directed cycle. High: some simple cycle through
/// the op contains a critical op. Medium: on cycles, none critical. Cycle
/// search runs on the op projection (two ops are adjacent when one frees a
/// link the other requires) with one reachability pass per op.
pub fn assign_priorities(g: &DependencyGraph) -> BTreeMap<SegmentId, Priority> {
    let critical = find_critical_ops(g);
    let adj = op_adjacency(g);
    let reach: BTreeMap<&SegmentId, BTreeSet<SegmentId>> = g
        .ops
        .keys()
        .map(|id| (id, reachable_from(id, &adj)))
        .collect();
    let on_cycle =
        |id: &SegmentId| reach[id].contains(id);

    let mut high: BTreeSet<SegmentId> = BTreeSet::new();
    for c in &critical {
        if on_cycle(c) {
            high.insert(c.clone());
        }
    }
    for id in g.ops.keys() {
        if high.contains(id) || !on_cycle(id) {
            continue;
        }
        for c in &critical {
            if c == id || !reach[id].contains(c) || !reach[c].contains(id) {
                continue;
            }
            if let Some(cycle) = simple_cycle_through(&adj, &reach, id, c) {
                // Every op on the found cycle shares it with the critical op.
                high.extend(cycle);
                break;
            }
        }
    }

    g.ops
        .keys()
        .map(|id| {
            let prio = if !on_cycle(id) {
                Priority::Low
            } else if high.contains(id) {
                Priority::High
            } else {
                Priority::Medium
            };
            (id.clone(), prio)
        })
        .collect()
}

/// Classifies a blocked state. `executable` is the set of currently
/// executable ops; if non-empty there is no deadlock. Otherwise the state is
/// splittable when some op can move at least [`SPLIT_QUANTUM`] over every link
/// it requires, and unsplittable when no fraction of anything fits.
pub fn classify_deadlock(
    g: &DependencyGraph,
    executable: &BTreeSet<SegmentId>,
) -> DeadlockClass {
    if !executable.is_empty() {
        return DeadlockClass::None;
    }
    if g.ops.is_empty() {
        return DeadlockClass::None;
    }
    let splittable = g.ops.values().any(|op| {
        op.requires
            .iter()
            .all(|(l, _)| g.residual(*l) >= SPLIT_QUANTUM - VOL_EPS)
    });
    if splittable {
        DeadlockClass::Splittable
    } else {
        DeadlockClass::Unsplittable
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::active_segments;
    use crate::model::SwitchId;
    use crate::scenarios;
    use crate::segmentation::SegmentKind;

    fn lk(a: u32, b: u32) -> LinkKey {
        (SwitchId(a), SwitchId(b))
    }

    /// Hand-built graph for quick tests, residuals given explicitly.
    fn graph(
        links: &[(LinkKey, f64)],
        ops: &[(&str, &[(LinkKey, f64)], &[(LinkKey, f64)])],
    ) -> DependencyGraph {
        let mut g = DependencyGraph::default();
        for (l, r) in links {
            g.links.insert(*l, LinkNode { link: *l, residual: *r });
        }
        for (name, req, free) in ops {
            let id = SegmentId::new(crate::model::FlowId::new(*name), 0);
            g.ops.insert(
                id.clone(),
                OpNode {
                    segment: id,
                    volume: req.first().or(free.first()).map_or(1.0, |(_, w)| *w),
                    requires: req.to_vec(),
                    frees: free.to_vec(),
                },
            );
        }
        g
    }

    fn fig4_graph() -> DependencyGraph {
        let inst = scenarios::fig4();
        let segments = active_segments(&inst, true);
        build_dependency_graph(&segments, &inst.topology, &inst.current).unwrap()
    }

    #[test]
    fn fig4_graph_edges_and_residuals() {
        let g = fig4_graph();
        assert_eq!(g.residual(lk(2, 3)), 0.0);
        assert_eq!(g.residual(lk(2, 6)), 6.0);
        assert_eq!(g.residual(lk(6, 3)), 6.0);

        // Segmentation leaves one active op per flow here (ordinals differ
        // per flow), so look ops up by flow id.
        let op = |flow: &str| {
            g.ops
                .values()
                .find(|o| o.segment.flow.0 == flow)
                .unwrap_or_else(|| panic!("op for flow {flow}"))
        };
        let pi_r = op("R");
        assert_eq!(pi_r.requires, vec![(lk(2, 6), 4.0), (lk(6, 3), 4.0)]);
        assert_eq!(pi_r.frees, vec![(lk(2, 3), 4.0)]);
        let pi_g = op("G");
        assert_eq!(pi_g.requires, vec![(lk(2, 6), 3.0), (lk(6, 3), 3.0)]);
        assert_eq!(pi_g.frees, vec![(lk(2, 3), 3.0)]);
        let pi_b = op("B");
        assert_eq!(pi_b.requires, vec![(lk(2, 3), 4.0)]);
        assert_eq!(pi_b.frees, vec![(lk(2, 6), 4.0), (lk(6, 3), 4.0)]);
    }

    #[test]
    fn fig4_critical_is_pi_r() {
        let g = fig4_graph();
        let critical = find_critical_ops(&g);
        let flows: Vec<&str> =
            critical.iter().map(|id| id.flow.0.as_str()).collect();
        assert_eq!(flows, vec!["R"]);
    }

    #[test]
    fn no_critical_when_residuals_cover_requirements() {
        let g = graph(
            &[(lk(0, 1), 10.0), (lk(1, 2), 10.0)],
            &[
                ("a", &[(lk(0, 1), 4.0)], &[(lk(1, 2), 4.0)]),
                ("b", &[(lk(1, 2), 4.0)], &[(lk(0, 1), 4.0)]),
            ],
        );
        assert!(find_critical_ops(&g).is_empty());
    }

    /// Definition-checking brute force over (op, other, link) triples.
    fn critical_brute(g: &DependencyGraph) -> BTreeSet<SegmentId> {
        let mut out = BTreeSet::new();
        for pi in g.ops.values() {
            for other in g.ops.values() {
                if other.segment == pi.segment {
                    continue;
                }
                for (l, req) in &other.requires {
                    let freed = pi
                        .frees
                        .iter()
                        .find(|(fl, _)| fl == l)
                        .map(|(_, w)| *w)
                        .unwrap_or(0.0);
                    if freed == 0.0 {
                        continue;
                    }
                    let others: f64 = g
                        .ops
                        .values()
                        .filter(|o| o.segment != pi.segment)
                        .flat_map(|o| o.frees.iter())
                        .filter(|(fl, _)| fl == l)
                        .map(|(_, w)| w)
                        .sum();
                    let opt = g.residual(*l) + others;
                    if *req > opt + VOL_EPS && *req <= opt + freed + VOL_EPS {
                        out.insert(pi.segment.clone());
                    }
                }
            }
        }
        out
    }

    #[test]
    fn critical_matches_brute_force_on_random_graphs() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(11);
        for _ in 0..200 {
            let links: Vec<(LinkKey, f64)> = (0..4)
                .map(|i| (lk(i, i + 1), rng.random_range(0..6) as f64))
                .collect();
            let mut g = DependencyGraph::default();
            for (l, r) in &links {
                g.links.insert(*l, LinkNode { link: *l, residual: *r });
            }
            for i in 0..4 {
                let id = SegmentId::new(crate::model::FlowId::new(format!("f{i}")), 0);
                let mut req = Vec::new();
                let mut free = Vec::new();
                for (l, _) in &links {
                    match rng.random_range(0..4) {
                        0 => req.push((*l, rng.random_range(1..5) as f64)),
                        1 => free.push((*l, rng.random_range(1..5) as f64)),
                        _ => {}
                    }
                }
                let volume = req.first().or(free.first()).map_or(1.0, |(_, w)| *w);
                g.ops.insert(
                    id.clone(),
                    OpNode { segment: id, volume, requires: req, frees: free },
                );
            }
            assert_eq!(find_critical_ops(&g), critical_brute(&g));
        }
    }

    /// Simple-cycle enumeration oracle for the fig. 4 priority example.
    fn cycles_through(
        g: &DependencyGraph,
        start: &SegmentId,
    ) -> Vec<Vec<SegmentId>> {
        let adj = op_adjacency(g);
        let mut found = Vec::new();
        let mut stack = vec![start.clone()];
        fn dfs(
            adj: &BTreeMap<SegmentId, Vec<SegmentId>>,
            start: &SegmentId,
            stack: &mut Vec<SegmentId>,
            found: &mut Vec<Vec<SegmentId>>,
        ) {
            let last = stack.last().unwrap().clone();
            for next in &adj[&last] {
                if next == start {
                    found.push(stack.clone());
                } else if !stack.contains(next) {
                    stack.push(next.clone());
                    dfs(adj, start, stack, found);
                    stack.pop();
                }
            }
        }
        dfs(&adj, start, &mut stack, &mut found);
        found
    }

    #[test]
    fn fig4_priorities() {
        let g = fig4_graph();
        let critical = find_critical_ops(&g);
        let prios = assign_priorities(&g);
        let by_flow = |flow: &str| {
            prios
                .iter()
                .find(|(id, _)| id.flow.0 == flow)
                .map(|(_, p)| *p)
                .unwrap()
        };
        assert_eq!(by_flow("R"), Priority::High);
        assert_eq!(by_flow("B"), Priority::High);
        assert_eq!(by_flow("G"), Priority::Medium);

        // Cross-check against explicit cycle enumeration.
        for (id, prio) in &prios {
            let cycles = cycles_through(&g, id);
            let expect = if cycles.is_empty() {
                Priority::Low
            } else if cycles
                .iter()
                .any(|c| c.iter().any(|n| critical.contains(n)))
            {
                Priority::High
            } else {
                Priority::Medium
            };
            assert_eq!(*prio, expect, "priority of {id}");
        }
    }

    #[test]
    fn acyclic_graph_is_all_low() {
        let g = graph(
            &[(lk(0, 1), 0.0), (lk(1, 2), 5.0)],
            &[
                ("a", &[(lk(1, 2), 4.0)], &[(lk(0, 1), 4.0)]),
                ("b", &[(lk(0, 1), 4.0)], &[]),
            ],
        );
        let prios = assign_priorities(&g);
        assert!(prios.values().all(|p| *p == Priority::Low));
    }

    #[test]
    fn fig2_graph_is_zero_residual_two_cycle() {
        let inst = scenarios::fig2();
        // Whole-flow update operations (no segmentation).
        let segments = active_segments(&inst, false);
        let g = build_dependency_graph(&segments, &inst.topology, &inst.current).unwrap();
        assert_eq!(g.ops.len(), 2);
        assert_eq!(g.residual(lk(2, 3)), 0.0);
        assert_eq!(g.residual(lk(3, 4)), 0.0);
        let prios = assign_priorities(&g);
        assert!(prios.values().all(|p| *p != Priority::Low));
        assert_eq!(classify_deadlock(&g, &g.executable_ops()), DeadlockClass::Unsplittable);
    }

    #[test]
    fn fig6a_state_is_splittable() {
        // Post-(pi_G) state of the fig. 4 scenario: residuals 3, requirements 4.
        let g = graph(
            &[(lk(2, 3), 3.0), (lk(2, 6), 3.0), (lk(6, 3), 3.0)],
            &[
                ("R", &[(lk(2, 6), 4.0), (lk(6, 3), 4.0)], &[(lk(2, 3), 4.0)]),
                ("B", &[(lk(2, 3), 4.0)], &[(lk(2, 6), 4.0), (lk(6, 3), 4.0)]),
            ],
        );
        assert_eq!(classify_deadlock(&g, &g.executable_ops()), DeadlockClass::Splittable);
        let prios = assign_priorities(&g);
        assert!(prios.values().all(|p| *p != Priority::Low));
    }

    #[test]
    fn executable_op_means_no_deadlock() {
        let g = graph(
            &[(lk(0, 1), 5.0)],
            &[("a", &[(lk(0, 1), 4.0)], &[])],
        );
        assert_eq!(classify_deadlock(&g, &g.executable_ops()), DeadlockClass::None);
    }

    #[test]
    fn low_priority_ops_break_no_cycles() {
        // Removing a Low op must not change cycle membership of the rest.
        let inst = scenarios::fig1();
        let segments = active_segments(&inst, true);
        let mut g =
            build_dependency_graph(&segments, &inst.topology, &inst.current).unwrap();
        let prios = assign_priorities(&g);
        let low: Vec<SegmentId> = prios
            .iter()
            .filter(|(_, p)| **p == Priority::Low)
            .map(|(id, _)| id.clone())
            .collect();
        let adj = op_adjacency(&g);
        let on_cycle_before: BTreeMap<SegmentId, bool> = g
            .ops
            .keys()
            .map(|id| (id.clone(), reachable_from(id, &adj).contains(id)))
            .collect();
        for id in &low {
            g.ops.remove(id);
        }
        let adj = op_adjacency(&g);
        for id in g.ops.keys() {
            assert_eq!(
                reachable_from(id, &adj).contains(id),
                on_cycle_before[id],
            );
        }
    }

    #[test]
    fn fig1_segment_ops_footprints() {
        let inst = scenarios::fig1();
        let segments = active_segments(&inst, true);
        // Two active segments per updated flow, split at s3.
        assert_eq!(segments.len(), 4);
        assert!(segments.iter().all(|s| s.kind == SegmentKind::NotInLoop));
        let starts: Vec<SwitchId> = segments.iter().map(|s| s.old_sub[0]).collect();
        assert_eq!(starts.iter().filter(|s| **s == SwitchId(2)).count(), 2);
        assert_eq!(starts.iter().filter(|s| **s == SwitchId(3)).count(), 2);
    }
}
