//! Decentralized consistent network updates.
//!
//! A controller plans a network update once — segmentation, dependency
//! graph, priorities — and ships per-switch instructions; the switches then
//! coordinate the execution among themselves with `GoodToMove` and
//! `Removing` messages, splitting flow volumes to escape deadlocks. The
//! whole protocol runs inside a deterministic discrete-event simulator, with
//! a centralized baseline for comparison and a trace verifier for the three
//! update properties: black-hole, loop and congestion freedom.

pub mod agent;
pub mod controller;
pub mod depgraph;
pub mod error;
pub mod model;
pub mod scenarios;
pub mod segmentation;
pub mod sim;
pub mod verifier;
pub mod workload;

pub use controller::{
    halt_and_query, plan_update, run_centralized, run_decentralized, CompletionReport, Mode,
    PlanOptions, SimSettings, UpdateInstance, UpdatePlan,
};
pub use model::{Flow, FlowId, NetworkConfig, SwitchId, Topology};
pub use segmentation::{Segment, SegmentId, SegmentKind};
pub use verifier::{check_properties, Violation, ViolationKind};
