//! Decomposes a flow update into independently updatable segments.
//!
//! A segment pairs a subpath of the old path with a subpath of the new path
//! that start at the same switch. Segments classified `InLoop` would create a
//! transient forwarding loop if executed too early; each one carries a
//! dependency on the `NotInLoop` segment that must complete first, so the
//! longest dependency chain has length one.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{FlowId, FlowUpdate, SwitchId};

/// Identifies a segment as flow id plus per-flow ordinal.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SegmentId {
    pub flow: FlowId,
    pub index: u32,
}

impl SegmentId {
    pub fn new(flow: FlowId, index: u32) -> Self {
        SegmentId { flow, index }
    }
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.flow, self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SegmentKind {
    NotInLoop,
    InLoop,
}

/// An independently updatable (old subpath, new subpath) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: SegmentId,
    pub flow: FlowId,
    pub volume: f64,
    /// Empty for pure adds.
    pub old_sub: Vec<SwitchId>,
    /// Empty for pure removes.
    pub new_sub: Vec<SwitchId>,
    pub kind: SegmentKind,
    /// Set iff `kind == InLoop`; names the `NotInLoop` segment of the same
    /// flow that must complete before this one starts.
    pub dep: Option<SegmentId>,
}

impl Segment {
    /// A segment whose subpaths coincide requires no protocol action.
    pub fn is_trivial(&self) -> bool {
        self.old_sub == self.new_sub
    }

    pub fn is_pure_add(&self) -> bool {
        self.old_sub.is_empty() && !self.new_sub.is_empty()
    }

    pub fn is_pure_remove(&self) -> bool {
        self.new_sub.is_empty() && !self.old_sub.is_empty()
    }
}

/// The selected reversed pairs: non-nesting, covering every switch that occurs
/// in a reversed pair, and of minimal cardinality.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReversedPairSet {
    pub pairs: Vec<(SwitchId, SwitchId)>,
}

/// Switches present on both paths, in old-path order.
pub fn common_switches(old_path: &[SwitchId], new_path: &[SwitchId]) -> Vec<SwitchId> {
    old_path
        .iter()
        .copied()
        .filter(|s| new_path.contains(s))
        .collect()
}

/// All ordered pairs of common switches `(u, w)` with `u` before `w` on the
/// old path and `w` before `u` on the new path.
pub fn reversed_pairs(
    old_path: &[SwitchId],
    new_path: &[SwitchId],
) -> Vec<(SwitchId, SwitchId)> {
    let commons = common_switches(old_path, new_path);
    let new_pos: BTreeMap<SwitchId, usize> =
        new_path.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let mut out = Vec::new();
    for (i, &u) in commons.iter().enumerate() {
        for &w in &commons[i + 1..] {
            if new_pos[&w] < new_pos[&u] {
                out.push((u, w));
            }
        }
    }
    out
}

/// Selects a minimal set of reversed pairs whose old-path spans are pairwise
/// disjoint and each contain every reversed pair they touch.
///
/// The non-nesting property forbids a selected pair's endpoint inside
/// another's span, so selected spans are pairwise disjoint and each must
/// begin exactly at the leftmost pair switch it covers. Containment has to
/// hold per pair, not per switch: a reversed pair straddling two selected
/// spans lets an early install close a forwarding loop between them. A
/// right-to-left scan over the candidate spans, minimizing the count and
/// breaking ties towards the shorter span, is exact and deterministic.
/// Returns `None` when no valid selection exists, in which case the caller
/// falls back to updating the whole flow as one segment.
pub fn select_minimal_pairs(
    pairs: &[(SwitchId, SwitchId)],
    old_path: &[SwitchId],
) -> Option<ReversedPairSet> {
    if pairs.is_empty() {
        return Some(ReversedPairSet { pairs: Vec::new() });
    }
    let old_pos: BTreeMap<SwitchId, usize> =
        old_path.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let spans: Vec<(usize, usize)> = pairs
        .iter()
        .map(|(u, w)| (old_pos[u], old_pos[w]))
        .collect();
    let mut members: Vec<usize> = spans.iter().flat_map(|(a, b)| [*a, *b]).collect();
    members.sort_unstable();
    members.dedup();

    // A span may not contain exactly one endpoint of any reversed pair.
    let splits_a_pair = |lo: usize, hi: usize| {
        spans.iter().any(|(a, b)| {
            let ca = lo <= *a && *a <= hi;
            let cb = lo <= *b && *b <= hi;
            ca != cb
        })
    };

    let m = members.len();
    let next_member = |end: usize| members.partition_point(|p| *p <= end);
    // choice[i]: span starting at members[i] that covers members[i..] with
    // the fewest spans; best_after[i]: that count (MAX when impossible).
    let mut choice: Vec<Option<(usize, usize)>> = vec![None; m];
    let mut best_after: Vec<usize> = vec![usize::MAX; m + 1];
    best_after[m] = 0;
    for i in (0..m).rev() {
        let start = members[i];
        for (lo, hi) in &spans {
            if *lo != start || splits_a_pair(*lo, *hi) {
                continue;
            }
            let j = next_member(*hi);
            if best_after[j] == usize::MAX {
                continue;
            }
            let total = 1 + best_after[j];
            let better = match choice[i] {
                None => true,
                Some((_, h)) => total < best_after[i] || (total == best_after[i] && *hi < h),
            };
            if better {
                choice[i] = Some((*lo, *hi));
                best_after[i] = total;
            }
        }
    }

    let mut selected = Vec::new();
    let mut i = 0;
    while i < m {
        let (lo, hi) = choice[i]?;
        selected.push((old_path[lo], old_path[hi]));
        i = next_member(hi);
    }
    Some(ReversedPairSet { pairs: selected })
}

/// Marker roles produced by the pair selection.
struct Markers {
    /// First elements of selected pairs (start `NotInLoop` segments).
    firsts: Vec<SwitchId>,
    /// Second elements of selected pairs (start `InLoop` segments).
    seconds: Vec<SwitchId>,
    /// Common switches covered by no selected span.
    uncovered: Vec<SwitchId>,
    /// Pair partner of each second element.
    partner: BTreeMap<SwitchId, SwitchId>,
}

fn markers(
    commons: &[SwitchId],
    selection: &ReversedPairSet,
    old_path: &[SwitchId],
) -> Markers {
    let old_pos: BTreeMap<SwitchId, usize> =
        old_path.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let spans: Vec<(usize, usize)> = selection
        .pairs
        .iter()
        .map(|(u, w)| (old_pos[u], old_pos[w]))
        .collect();
    let covered = |s: SwitchId| {
        let p = old_pos[&s];
        spans.iter().any(|(lo, hi)| *lo <= p && p <= *hi)
    };
    let mut m = Markers {
        firsts: selection.pairs.iter().map(|(u, _)| *u).collect(),
        seconds: selection.pairs.iter().map(|(_, w)| *w).collect(),
        uncovered: commons.iter().copied().filter(|s| !covered(*s)).collect(),
        partner: selection.pairs.iter().map(|(u, w)| (*w, *u)).collect(),
    };
    m.firsts.sort_by_key(|s| old_pos[s]);
    m.seconds.sort_by_key(|s| old_pos[s]);
    m
}

/// A whole-flow update executed as a single `NotInLoop` segment.
pub fn whole_flow_segment(update: &FlowUpdate) -> Segment {
    Segment {
        id: SegmentId::new(update.flow.clone(), 0),
        flow: update.flow.clone(),
        volume: if update.new_path.is_empty() { update.old_volume } else { update.volume },
        old_sub: update.old_path.clone(),
        new_sub: update.new_path.clone(),
        kind: SegmentKind::NotInLoop,
        dep: None,
    }
}

/// Segments a flow update with the reversed-pair heuristic.
///
/// Pure adds and removes bypass segmentation: with no old (new) path there is
/// no reordering hazard, so they become one segment. When no valid pair
/// selection exists the whole flow is likewise returned as one segment.
pub fn segment_flow(update: &FlowUpdate) -> Vec<Segment> {
    if update.old_path == update.new_path {
        return Vec::new();
    }
    if update.old_path.is_empty() || update.new_path.is_empty() {
        return vec![whole_flow_segment(update)];
    }

    let old_path = &update.old_path;
    let new_path = &update.new_path;
    let commons = common_switches(old_path, new_path);
    let pairs = reversed_pairs(old_path, new_path);
    let selection = match select_minimal_pairs(&pairs, old_path) {
        Some(sel) => sel,
        None => return vec![whole_flow_segment(update)],
    };
    let m = markers(&commons, &selection, old_path);

    let old_pos: BTreeMap<SwitchId, usize> =
        old_path.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let new_pos: BTreeMap<SwitchId, usize> =
        new_path.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let mut marker_set: Vec<SwitchId> = m
        .firsts
        .iter()
        .chain(m.seconds.iter())
        .chain(m.uncovered.iter())
        .copied()
        .collect();
    marker_set.sort_by_key(|s| old_pos[s]);

    let egress = *old_path.last().expect("non-empty old path");
    let sub_to_next = |path: &[SwitchId], pos: &BTreeMap<SwitchId, usize>, start: SwitchId| {
        let from = pos[&start];
        let next = marker_set
            .iter()
            .filter(|r| pos[*r] > from)
            .min_by_key(|r| pos[*r])
            .expect("marker after a non-egress marker");
        path[from..=pos[next]].to_vec()
    };

    // Enumeration order fixes the per-flow ordinals: NotInLoop segments at
    // pair-first switches, then at uncovered commons, then InLoop segments.
    let mut starts: Vec<(SwitchId, SegmentKind)> = Vec::new();
    for &s in &m.firsts {
        starts.push((s, SegmentKind::NotInLoop));
    }
    for &s in &m.uncovered {
        if s != egress {
            starts.push((s, SegmentKind::NotInLoop));
        }
    }
    for &s in &m.seconds {
        starts.push((s, SegmentKind::InLoop));
    }

    let id_of: BTreeMap<SwitchId, SegmentId> = starts
        .iter()
        .enumerate()
        .map(|(i, (s, _))| (*s, SegmentId::new(update.flow.clone(), i as u32)))
        .collect();

    starts
        .iter()
        .map(|(s, kind)| {
            let new_sub = sub_to_next(new_path, &new_pos, *s);
            let dep = match kind {
                SegmentKind::InLoop => {
                    let partner = m.partner[s];
                    debug_assert_eq!(*new_sub.last().unwrap(), partner);
                    Some(id_of[&partner].clone())
                }
                SegmentKind::NotInLoop => None,
            };
            Segment {
                id: id_of[s].clone(),
                flow: update.flow.clone(),
                volume: update.volume,
                old_sub: sub_to_next(old_path, &old_pos, *s),
                new_sub,
                kind: *kind,
                dep,
            }
        })
        .collect()
}

/// Middlebox policy guard: a policy-constrained flow may only be segmented
/// when no `InLoop` segment exists, because mixing subpaths across a reversed
/// pair can skip the middlebox chain.
pub fn middlebox_guard(update: &FlowUpdate, policy_constrained: bool) -> bool {
    if !policy_constrained {
        return true;
    }
    !segment_flow(update)
        .iter()
        .any(|s| s.kind == SegmentKind::InLoop)
}
