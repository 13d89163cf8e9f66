//! Baseline and heuristic intervention policies and their schedules.

mod score;
mod select;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradient::{run_gradient_policy, GradientIteration};
use crate::model::{Edge, EdgeAdditionSet, ModelParams, NetworkState, NodeId};

pub use score::{lookahead_score, myopic_score, ScoreContext, ScoreKind};
pub use select::{heuristic_select, top_k, Scorer, Selection};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Control,
    InitialRandom,
    PerpetualRandom,
    HeuristicMyopic,
    HeuristicLookahead,
    GradientBased,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 6] = [
        PolicyKind::Control,
        PolicyKind::InitialRandom,
        PolicyKind::PerpetualRandom,
        PolicyKind::HeuristicMyopic,
        PolicyKind::HeuristicLookahead,
        PolicyKind::GradientBased,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Control => "control",
            PolicyKind::InitialRandom => "initial_random",
            PolicyKind::PerpetualRandom => "perpetual_random",
            PolicyKind::HeuristicMyopic => "heuristic_myopic",
            PolicyKind::HeuristicLookahead => "heuristic_lookahead",
            PolicyKind::GradientBased => "gradient_based",
        }
    }

    /// Whether a policy of this kind acts at clock `t`.
    pub fn acts_at(self, t: u32) -> bool {
        match self {
            PolicyKind::Control => false,
            PolicyKind::InitialRandom | PolicyKind::GradientBased => t == 0,
            PolicyKind::PerpetualRandom | PolicyKind::HeuristicMyopic => true,
            PolicyKind::HeuristicLookahead => t.is_multiple_of(2),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = PolicyKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!("unknown policy {s:?} (expected one of {})", names.join(", ")))
            })
    }
}

fn default_samples() -> usize {
    10
}

fn default_iterations() -> usize {
    10
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Removal samples per gradient iteration.
    #[serde(default = "default_samples")]
    pub n: usize,
    /// Gradient iterations.
    #[serde(default = "default_iterations", rename = "L", alias = "l")]
    pub l: usize,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        PolicySpec {
            kind,
            n: default_samples(),
            l: default_iterations(),
        }
    }

    pub fn acts_at(&self, t: u32) -> bool {
        self.kind.acts_at(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == PolicyKind::GradientBased && (self.n == 0 || self.l == 0) {
            return Err(Error::Config(format!(
                "gradient_based needs n ≥ 1 and L ≥ 1 (got n={}, L={})",
                self.n, self.l
            )));
        }
        Ok(())
    }

    /// Decision at the state's clock, or `∅` off-schedule.
    pub fn decide<R: Rng + ?Sized>(
        &self,
        state: &NetworkState,
        params: &ModelParams,
        rng: &mut R,
    ) -> Result<Decision> {
        if !self.acts_at(state.clock()) {
            return Ok(Decision::default());
        }
        match self.kind {
            PolicyKind::Control => Ok(Decision::default()),
            PolicyKind::InitialRandom | PolicyKind::PerpetualRandom => {
                Ok(Decision::from_edges(random_policy(state, rng)))
            }
            PolicyKind::HeuristicMyopic | PolicyKind::HeuristicLookahead => {
                let scorer = if self.kind == PolicyKind::HeuristicMyopic {
                    Scorer::Myopic
                } else {
                    Scorer::Lookahead
                };
                let sel = heuristic_select(state, params, scorer)?;
                Ok(Decision {
                    scores: Some(sel.scored.iter().map(|&(_, s)| s).collect()),
                    edges: sel.scored.into_iter().map(|(e, _)| e).collect(),
                    gradient: None,
                })
            }
            PolicyKind::GradientBased => {
                let out = run_gradient_policy(state, params, self.n, self.l, rng)?;
                Ok(Decision {
                    edges: out.decision.iter().copied().collect(),
                    scores: None,
                    gradient: Some(out.iterations),
                })
            }
        }
    }
}

/// A policy's output at one clock value. `edges` keeps selection order and
/// lines up with `scores` when present.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub edges: Vec<Edge>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient: Option<Vec<GradientIteration>>,
}

impl Decision {
    pub fn from_edges(set: EdgeAdditionSet) -> Self {
        Decision {
            edges: set.iter().copied().collect(),
            ..Decision::default()
        }
    }

    pub fn additions(&self) -> EdgeAdditionSet {
        self.edges.iter().copied().collect()
    }
}

pub fn control_policy(_state: &NetworkState) -> EdgeAdditionSet {
    EdgeAdditionSet::new()
}

/// Each healthy node, in id order, proposes one edge to a uniformly chosen
/// target it does not already reach; proposals breaking a cap are dropped.
pub fn random_policy<R: Rng + ?Sized>(state: &NetworkState, rng: &mut R) -> EdgeAdditionSet {
    let mut out = EdgeAdditionSet::new();
    let mut added = vec![0usize; state.node_count()];
    let mut open: Vec<NodeId> = Vec::with_capacity(state.targets().len());
    for &u in state.healthy() {
        open.clear();
        open.extend(
            state
                .targets()
                .iter()
                .copied()
                .filter(|&v| !state.has_edge(Edge::new(u, v))),
        );
        let Some(&v) = open.choose(rng) else { continue };
        if added[v.index()] < state.in_degree(v) {
            added[v.index()] += 1;
            out.insert(Edge::new(u, v));
        }
    }
    out
}
