//! Canonical regression scenarios: the worked examples used throughout the
//! tests and the CLI `scenario` subcommand.
//!
//! All links carry 10 units of capacity and 1 ms of latency; flows are named
//! R, G, B, N.

use crate::controller::UpdateInstance;
use crate::model::{Flow, FlowId, FlowUpdate, NetworkConfig, SwitchId, Topology, UpdateKind};

fn sw(ids: &[u32]) -> Vec<SwitchId> {
    ids.iter().map(|&i| SwitchId(i)).collect()
}

/// Seven-switch network shared by the first three scenarios.
pub fn seven_switch_topology() -> Topology {
    let mut t = Topology::new("seven-switch");
    for i in 1..=7 {
        t.add_switch(SwitchId(i));
    }
    for (a, b) in [(1, 2), (2, 3), (2, 6), (3, 4), (3, 6), (3, 7), (4, 5), (4, 7)] {
        t.add_edge(SwitchId(a), SwitchId(b), 10.0, Some(1.0)).unwrap();
    }
    t
}

fn five_switch_topology() -> Topology {
    let mut t = Topology::new("five-switch");
    for i in [1, 2, 3, 4, 6] {
        t.add_switch(SwitchId(i));
    }
    for (a, b) in [(1, 2), (2, 3), (2, 6), (3, 4), (3, 6)] {
        t.add_edge(SwitchId(a), SwitchId(b), 10.0, Some(1.0)).unwrap();
    }
    t
}

/// Parallelizable update: moving R and B swaps their middle subpaths while G
/// stays on (s2 s6 s3). Both flows decompose into independent parts at s3.
pub fn fig1() -> UpdateInstance {
    let topology = seven_switch_topology();
    let current = NetworkConfig::from_flows([
        Flow::new("R", 5.0, sw(&[2, 3, 7, 4, 5])),
        Flow::new("G", 5.0, sw(&[2, 6, 3])),
        Flow::new("B", 5.0, sw(&[1, 2, 6, 3, 4])),
    ]);
    let target = NetworkConfig::from_flows([
        Flow::new("R", 5.0, sw(&[2, 6, 3, 4, 5])),
        Flow::new("G", 5.0, sw(&[2, 6, 3])),
        Flow::new("B", 5.0, sw(&[1, 2, 3, 7, 4])),
    ]);
    UpdateInstance { topology, current, target }
}

/// Segment deadlock: whole-flow moves of R and B block each other on the
/// zero-residual links l2,3 and l3,4; segmentation dissolves the cycle.
pub fn fig2() -> UpdateInstance {
    let topology = seven_switch_topology();
    let current = NetworkConfig::from_flows([
        Flow::new("R", 5.0, sw(&[2, 3, 7, 4, 5])),
        Flow::new("G", 5.0, sw(&[2, 3, 4])),
        Flow::new("B", 5.0, sw(&[1, 2, 6, 3, 4])),
    ]);
    let target = NetworkConfig::from_flows([
        Flow::new("R", 5.0, sw(&[2, 6, 3, 4, 5])),
        Flow::new("G", 5.0, sw(&[2, 3, 4])),
        Flow::new("B", 5.0, sw(&[1, 2, 3, 7, 4])),
    ]);
    UpdateInstance { topology, current, target }
}

/// Splittable deadlock: with flows of size 4 the s2-side segments of R and B
/// each find only 2 spare units, so s2 moves a 2-unit fraction of B first.
pub fn fig3() -> UpdateInstance {
    let topology = seven_switch_topology();
    let current = NetworkConfig::from_flows([
        Flow::new("R", 4.0, sw(&[2, 3, 7, 4, 5])),
        Flow::new("G", 4.0, sw(&[2, 6, 3])),
        Flow::new("B", 4.0, sw(&[1, 2, 6, 3, 4])),
        Flow::new("N", 4.0, sw(&[2, 3, 4])),
    ]);
    let target = NetworkConfig::from_flows([
        Flow::new("R", 4.0, sw(&[2, 6, 3, 4, 5])),
        Flow::new("G", 4.0, sw(&[2, 6, 3])),
        Flow::new("B", 4.0, sw(&[1, 2, 3, 7, 4])),
        Flow::new("N", 4.0, sw(&[2, 3, 4])),
    ]);
    UpdateInstance { topology, current, target }
}

/// Scheduling example: updating R first releases the 4 units B needs on
/// l2,3, while G's 3 units would not suffice. R is critical, G is not.
pub fn fig4() -> UpdateInstance {
    let topology = five_switch_topology();
    let current = NetworkConfig::from_flows([
        Flow::new("R", 4.0, sw(&[1, 2, 3])),
        Flow::new("G", 3.0, sw(&[2, 3])),
        Flow::new("B", 4.0, sw(&[1, 2, 6, 3, 4])),
        Flow::new("N", 3.0, sw(&[2, 3, 4])),
    ]);
    let target = NetworkConfig::from_flows([
        Flow::new("R", 4.0, sw(&[1, 2, 6, 3])),
        Flow::new("G", 3.0, sw(&[2, 6, 3])),
        Flow::new("B", 4.0, sw(&[1, 2, 3, 4])),
        Flow::new("N", 3.0, sw(&[2, 3, 4])),
    ]);
    UpdateInstance { topology, current, target }
}

fn path_update(old: &[u32], new: &[u32]) -> FlowUpdate {
    FlowUpdate {
        flow: FlowId::new("F"),
        kind: UpdateKind::Move,
        volume: 1.0,
        old_volume: 1.0,
        old_path: sw(old),
        new_path: sw(new),
    }
}

/// No reversed-order common switches: two parallel segments plus a trivial
/// trailing one.
pub fn fig5a() -> FlowUpdate {
    path_update(&[0, 4, 1, 5, 2, 3], &[0, 6, 1, 7, 2, 3])
}

/// One reversed pair (s1, s2): the segment at s2 must wait for the one at s1.
pub fn fig5b() -> FlowUpdate {
    path_update(&[0, 4, 1, 5, 2, 6, 3], &[0, 8, 2, 1, 7, 3])
}

/// Two reversed pairs (s1, s3) and (s4, s5): three NotInLoop segments and two
/// InLoop segments with dependencies.
pub fn fig5c() -> FlowUpdate {
    path_update(&[0, 1, 2, 3, 4, 5, 6], &[0, 7, 3, 2, 8, 1, 9, 5, 10, 4, 6])
}
