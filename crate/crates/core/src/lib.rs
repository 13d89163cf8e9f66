//! Simulation and optimization engine for dynamic network-based health
//! interventions.
//!
//! Agents sit on a weighted directed influence graph. Each step a planner may
//! add mentor edges from healthy agents into target agents; every addition
//! displaces an existing in-edge at random, weights drift toward uniform, and
//! health spreads by DeGroot-style averaging.

pub mod dynamics;
pub mod config;
pub mod error;
pub mod gradient;
pub mod harness;
pub mod model;
pub mod netgen;
pub mod objectives;
pub mod oracle;
pub mod policies;
pub mod validation;

pub use error::{Error, Result};
pub use model::{
    candidate_edges, validate_decision, Edge, EdgeAdditionSet, InEdge, ModelParams, NetworkState,
    NodeId, ObjectiveKind, PenaltyAtZero, RemovalSet, Violation, WeightDynamics,
};
pub use policies::{Decision, PolicyKind, PolicySpec};
