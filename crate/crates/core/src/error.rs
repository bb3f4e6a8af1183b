//! Error types shared across the crate.

use thiserror::Error;

use crate::model::SwitchId;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown switch {0}")]
    UnknownSwitch(SwitchId),
    #[error("unknown link {0} -> {1}")]
    UnknownLink(SwitchId, SwitchId),
    #[error("link {0} -> {1} declared twice")]
    DuplicateLink(SwitchId, SwitchId),
    #[error("self loop at {0}")]
    SelfLoop(SwitchId),
    #[error("link {0} -> {1} must have positive capacity")]
    BadCapacity(SwitchId, SwitchId),
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("target configuration is invalid: {0}")]
    InvalidTarget(String),
    #[error("current configuration is invalid: {0}")]
    InvalidCurrent(String),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("no latency available between {0} and {1}: no coordinates and no explicit link latency")]
    NoLatency(String, String),
    #[error("unknown actor {0}")]
    UnknownActor(String),
    #[error("protocol error at {actor}: {detail}")]
    Protocol { actor: String, detail: String },
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("trace record {index}: {detail}")]
    BadRecord { index: usize, detail: String },
    #[error("instance too large for exhaustive search: {segments} segments (limit {limit})")]
    TooLarge { segments: usize, limit: usize },
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {detail}")]
    Parse { path: String, detail: String },
    #[error("invalid topology field: {0}")]
    Schema(String),
    #[error("topology too small: {0}")]
    TooSmall(String),
    #[error("no path between {0} and {1}")]
    NoPath(SwitchId, SwitchId),
}
