use thiserror::Error;

use crate::model::{Edge, NodeId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node {0} is not in the target set")]
    NotATarget(NodeId),

    #[error("node {node} out of range (network has {nodes} nodes)")]
    NodeOutOfRange { node: NodeId, nodes: usize },

    #[error("invalid network state: {0}")]
    InvalidState(String),

    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("infeasible decision: {0}")]
    Infeasible(crate::model::Violation),

    #[error("score context for node {ctx_node} at t={ctx_clock} used for edge {edge} at t={clock}")]
    StaleContext {
        ctx_node: NodeId,
        ctx_clock: u32,
        edge: Edge,
        clock: u32,
    },

    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error("distribution spec error at {location}: {message}")]
    Distribution { location: String, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
