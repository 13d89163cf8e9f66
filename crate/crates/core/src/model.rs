//! Network state, decisions and feasibility queries.
//!
//! A [`NetworkState`] holds the directed influence graph as per-node in-edge
//! lists (influence flows source → sink), the edge weights, the health value
//! of every agent, their susceptibilities and the target/healthy role sets.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the per-node weight normalization invariant.
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Dense node identifier in `[0, |V|)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ordered pair `(source, sink)`. Ordering is by source then sink.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct Edge {
    pub source: NodeId,
    pub sink: NodeId,
}

impl Edge {
    pub fn new(source: impl Into<NodeId>, sink: impl Into<NodeId>) -> Self {
        Edge {
            source: source.into(),
            sink: sink.into(),
        }
    }
}

impl From<[u32; 2]> for Edge {
    fn from([u, v]: [u32; 2]) -> Self {
        Edge::new(NodeId(u), NodeId(v))
    }
}

impl From<Edge> for [u32; 2] {
    fn from(e: Edge) -> Self {
        [e.source.0, e.sink.0]
    }
}

impl From<NodeId> for u32 {
    fn from(n: NodeId) -> Self {
        n.0
    }
}

impl From<u32> for NodeId {
    fn from(n: u32) -> Self {
        NodeId(n)
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.source, self.sink)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InEdge {
    pub source: NodeId,
    pub weight: f64,
}

impl InEdge {
    pub fn new(source: impl Into<NodeId>, weight: f64) -> Self {
        InEdge {
            source: source.into(),
            weight,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Target,
    Healthy,
    Bystander,
}

/// Full system state at one clock value.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    pub(crate) in_edges: Vec<Vec<InEdge>>,
    pub(crate) health: Vec<f64>,
    pub(crate) susceptibility: Vec<f64>,
    pub(crate) target: Vec<NodeId>,
    pub(crate) healthy: Vec<NodeId>,
    pub(crate) roles: Vec<Role>,
    pub(crate) clock: u32,
}

impl NetworkState {
    /// Builds a state and checks every invariant. Role sets are stored sorted.
    pub fn new(
        in_edges: Vec<Vec<InEdge>>,
        health: Vec<f64>,
        susceptibility: Vec<f64>,
        target: impl IntoIterator<Item = NodeId>,
        healthy: impl IntoIterator<Item = NodeId>,
        clock: u32,
    ) -> Result<Self> {
        let n = in_edges.len();
        let mut target: Vec<NodeId> = target.into_iter().collect();
        let mut healthy: Vec<NodeId> = healthy.into_iter().collect();
        target.sort_unstable();
        healthy.sort_unstable();
        if target.windows(2).any(|w| w[0] == w[1]) || healthy.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidState("duplicate node in a role set".into()));
        }
        let mut roles = vec![Role::Bystander; n];
        for &v in &target {
            check_range(v, n)?;
            roles[v.index()] = Role::Target;
        }
        for &u in &healthy {
            check_range(u, n)?;
            if roles[u.index()] == Role::Target {
                return Err(Error::InvalidState(format!(
                    "node {u} is in both the target and healthy sets"
                )));
            }
            roles[u.index()] = Role::Healthy;
        }
        let state = NetworkState {
            in_edges,
            health,
            susceptibility,
            target,
            healthy,
            roles,
            clock,
        };
        state.check_invariants()?;
        Ok(state)
    }

    /// Verifies structure, value ranges and per-node weight normalization.
    pub fn check_invariants(&self) -> Result<()> {
        let n = self.in_edges.len();
        if self.health.len() != n || self.susceptibility.len() != n {
            return Err(Error::InvalidState(format!(
                "{n} nodes but {} health values and {} susceptibilities",
                self.health.len(),
                self.susceptibility.len()
            )));
        }
        for (v, edges) in self.in_edges.iter().enumerate() {
            let mut seen: Vec<NodeId> = Vec::with_capacity(edges.len());
            let mut sum = 0.0;
            for e in edges {
                check_range(e.source, n)?;
                if e.source.index() == v {
                    return Err(Error::InvalidState(format!("self-loop at node {v}")));
                }
                if !(0.0..=1.0).contains(&e.weight) {
                    return Err(Error::InvalidState(format!(
                        "weight {} on edge ({},{v}) outside [0,1]",
                        e.weight, e.source
                    )));
                }
                seen.push(e.source);
                sum += e.weight;
            }
            seen.sort_unstable();
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidState(format!("multi-edge into node {v}")));
            }
            if !edges.is_empty() && (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(Error::InvalidState(format!(
                    "in-weights of node {v} sum to {sum}"
                )));
            }
        }
        for (v, (&x, &l)) in self.health.iter().zip(&self.susceptibility).enumerate() {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidState(format!("health {x} of node {v} outside [0,1]")));
            }
            if !(0.0..=1.0).contains(&l) {
                return Err(Error::InvalidState(format!(
                    "susceptibility {l} of node {v} outside [0,1]"
                )));
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.in_edges.len()
    }

    pub fn edge_count(&self) -> usize {
        self.in_edges.iter().map(Vec::len).sum()
    }

    pub fn in_edges(&self, v: NodeId) -> &[InEdge] {
        &self.in_edges[v.index()]
    }

    pub fn in_degree(&self, v: NodeId) -> usize {
        self.in_edges[v.index()].len()
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        self.in_edges.iter().map(Vec::len).collect()
    }

    pub fn health(&self) -> &[f64] {
        &self.health
    }

    pub fn susceptibility(&self) -> &[f64] {
        &self.susceptibility
    }

    pub fn targets(&self) -> &[NodeId] {
        &self.target
    }

    pub fn healthy(&self) -> &[NodeId] {
        &self.healthy
    }

    pub fn role(&self, v: NodeId) -> Role {
        self.roles[v.index()]
    }

    pub fn is_target(&self, v: NodeId) -> bool {
        self.roles.get(v.index()) == Some(&Role::Target)
    }

    pub fn is_healthy(&self, v: NodeId) -> bool {
        self.roles.get(v.index()) == Some(&Role::Healthy)
    }

    pub fn clock(&self) -> u32 {
        self.clock
    }

    pub fn has_edge(&self, e: Edge) -> bool {
        self.in_edges
            .get(e.sink.index())
            .is_some_and(|l| l.iter().any(|ie| ie.source == e.source))
    }

    pub fn weight(&self, e: Edge) -> Option<f64> {
        self.in_edges
            .get(e.sink.index())?
            .iter()
            .find(|ie| ie.source == e.source)
            .map(|ie| ie.weight)
    }

    /// Iterates every edge as `(edge, weight)`, grouped by sink.
    pub fn edges(&self) -> impl Iterator<Item = (Edge, f64)> + '_ {
        self.in_edges.iter().enumerate().flat_map(|(v, l)| {
            l.iter()
                .map(move |ie| (Edge::new(ie.source, NodeId::from(v)), ie.weight))
        })
    }

    /// Same graph with every in-weight set to `1/|δ^in(v)|`.
    pub fn with_uniform_weights(&self) -> NetworkState {
        let mut s = self.clone();
        for l in &mut s.in_edges {
            let k = l.len() as f64;
            for e in l.iter_mut() {
                e.weight = 1.0 / k;
            }
        }
        s
    }

    pub fn with_clock(mut self, clock: u32) -> NetworkState {
        self.clock = clock;
        self
    }

    pub fn candidate_edges(&self, v: NodeId) -> Result<Vec<Edge>> {
        candidate_edges(self, v)
    }

    pub fn to_snapshot(&self) -> Snapshot {
        Snapshot {
            version: SNAPSHOT_VERSION,
            nodes: self.node_count(),
            edges: self
                .edges()
                .map(|(e, w)| SnapshotEdge {
                    src: e.source.0,
                    dst: e.sink.0,
                    weight: w,
                })
                .collect(),
            health: self.health.clone(),
            lambda: self.susceptibility.clone(),
            target: self.target.iter().map(|v| v.0).collect(),
            healthy: self.healthy.iter().map(|v| v.0).collect(),
            clock: self.clock,
        }
    }
}

fn check_range(v: NodeId, nodes: usize) -> Result<()> {
    if v.index() >= nodes {
        Err(Error::NodeOutOfRange { node: v, nodes })
    } else {
        Ok(())
    }
}

/// Candidate edges into target `v`: every `(u, v)` with `u ∈ H` not already present.
pub fn candidate_edges(state: &NetworkState, v: NodeId) -> Result<Vec<Edge>> {
    if !state.is_target(v) {
        return Err(Error::NotATarget(v));
    }
    let mut present: Vec<NodeId> = state.in_edges(v).iter().map(|e| e.source).collect();
    present.sort_unstable();
    Ok(state
        .healthy
        .iter()
        .filter(|&&u| u != v && present.binary_search(&u).is_err())
        .map(|&u| Edge::new(u, v))
        .collect())
}

/// A decision `A_t`: edges `H → S` to add.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeAdditionSet {
    edges: BTreeSet<Edge>,
}

impl EdgeAdditionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, e: Edge) -> bool {
        self.edges.insert(e)
    }

    pub fn extend(&mut self, other: impl IntoIterator<Item = Edge>) {
        self.edges.extend(other)
    }

    pub fn contains(&self, e: &Edge) -> bool {
        self.edges.contains(e)
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter()
    }

    /// `χ_v^in(A)` for every sink receiving at least one edge.
    pub fn counts_by_sink(&self) -> BTreeMap<NodeId, usize> {
        sink_counts(self.edges.iter())
    }

    pub fn count_into(&self, v: NodeId) -> usize {
        self.edges.iter().filter(|e| e.sink == v).count()
    }

    /// Sources of the edges into `v`, ascending.
    pub fn sources_into(&self, v: NodeId) -> Vec<NodeId> {
        self.edges
            .iter()
            .filter(|e| e.sink == v)
            .map(|e| e.source)
            .collect()
    }

    pub fn restricted_to_sink(&self, v: NodeId) -> EdgeAdditionSet {
        self.edges.iter().copied().filter(|e| e.sink == v).collect()
    }
}

impl FromIterator<Edge> for EdgeAdditionSet {
    fn from_iter<I: IntoIterator<Item = Edge>>(iter: I) -> Self {
        EdgeAdditionSet {
            edges: iter.into_iter().collect(),
        }
    }
}

impl<'a> IntoIterator for &'a EdgeAdditionSet {
    type Item = &'a Edge;
    type IntoIter = std::collections::btree_set::Iter<'a, Edge>;
    fn into_iter(self) -> Self::IntoIter {
        self.edges.iter()
    }
}

/// Exogenous removals `R_t`, each edge currently present.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RemovalSet {
    edges: BTreeSet<Edge>,
}

impl RemovalSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, e: Edge) -> bool {
        self.edges.insert(e)
    }

    pub fn contains(&self, e: &Edge) -> bool {
        self.edges.contains(e)
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter()
    }

    /// `rem_v(R)` for every sink losing at least one edge.
    pub fn counts_by_sink(&self) -> BTreeMap<NodeId, usize> {
        sink_counts(self.edges.iter())
    }

    /// True when `rem_v(R) = χ_v^in(A)` for every node.
    pub fn pairs_with(&self, additions: &EdgeAdditionSet) -> bool {
        self.counts_by_sink() == additions.counts_by_sink()
    }
}

impl FromIterator<Edge> for RemovalSet {
    fn from_iter<I: IntoIterator<Item = Edge>>(iter: I) -> Self {
        RemovalSet {
            edges: iter.into_iter().collect(),
        }
    }
}

impl<'a> IntoIterator for &'a RemovalSet {
    type Item = &'a Edge;
    type IntoIter = std::collections::btree_set::Iter<'a, Edge>;
    fn into_iter(self) -> Self::IntoIter {
        self.edges.iter()
    }
}

fn sink_counts<'a>(edges: impl Iterator<Item = &'a Edge>) -> BTreeMap<NodeId, usize> {
    let mut m = BTreeMap::new();
    for e in edges {
        *m.entry(e.sink).or_insert(0) += 1;
    }
    m
}

/// First constraint a decision violates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NodeOutOfRange(Edge),
    SelfLoop(Edge),
    SourceNotHealthy(Edge),
    SinkNotTarget(Edge),
    AlreadyPresent(Edge),
    CapExceeded {
        node: NodeId,
        added: usize,
        in_degree: usize,
    },
}

impl Violation {
    /// True for every variant meaning "edge is not in the candidate set".
    pub fn is_not_candidate(&self) -> bool {
        !matches!(self, Violation::CapExceeded { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NodeOutOfRange(e) => write!(f, "edge {e} references a node out of range"),
            Violation::SelfLoop(e) => write!(f, "edge {e} is a self-loop"),
            Violation::SourceNotHealthy(e) => {
                write!(f, "edge {e} not in candidate set: source not in healthy set")
            }
            Violation::SinkNotTarget(e) => {
                write!(f, "edge {e} not in candidate set: sink not in target set")
            }
            Violation::AlreadyPresent(e) => {
                write!(f, "edge {e} not in candidate set: already present")
            }
            Violation::CapExceeded {
                node,
                added,
                in_degree,
            } => write!(
                f,
                "cap exceeded at node {node}: {added} additions but in-degree {in_degree}"
            ),
        }
    }
}

/// Checks `A ⊆ Ē_t` edge by edge, then the per-node cap `χ_v^in(A) ≤ |δ^in(v)|`.
pub fn validate_decision(
    state: &NetworkState,
    additions: &EdgeAdditionSet,
) -> std::result::Result<(), Violation> {
    let n = state.node_count();
    for &e in additions.iter() {
        if e.source.index() >= n || e.sink.index() >= n {
            return Err(Violation::NodeOutOfRange(e));
        }
        if e.source == e.sink {
            return Err(Violation::SelfLoop(e));
        }
        if !state.is_healthy(e.source) {
            return Err(Violation::SourceNotHealthy(e));
        }
        if !state.is_target(e.sink) {
            return Err(Violation::SinkNotTarget(e));
        }
        if state.has_edge(e) {
            return Err(Violation::AlreadyPresent(e));
        }
    }
    for (node, added) in additions.counts_by_sink() {
        let in_degree = state.in_degree(node);
        if added > in_degree {
            return Err(Violation::CapExceeded {
                node,
                added,
                in_degree,
            });
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Terminal,
    #[default]
    Cumulative,
}

/// Edge-weight law used by the transition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDynamics {
    /// Drift toward uniform at rate μ; new edges start at `1/|δ^in|²` then renormalize.
    #[default]
    Adaptive,
    /// Simplified environment: every in-weight is `1/|δ^in(v)|` at all times.
    Uniform,
}

/// Penalty weight charged for a decision taken at clock 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyAtZero {
    Alpha,
    #[default]
    AlphaBeta,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub horizon: u32,
    pub objective: ObjectiveKind,
    pub weight_dynamics: WeightDynamics,
    pub penalty_at_zero: PenaltyAtZero,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            mu: 0.1,
            alpha: 0.01,
            beta: 1.1,
            horizon: 8,
            objective: ObjectiveKind::Cumulative,
            weight_dynamics: WeightDynamics::Adaptive,
            penalty_at_zero: PenaltyAtZero::AlphaBeta,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(Error::InvalidParams(format!("mu = {} not in (0,1)", self.mu)));
        }
        // α = 0 is accepted so penalty-free runs can be configured.
        if !(self.alpha >= 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParams(format!("alpha = {} not in [0,1)", self.alpha)));
        }
        if !(self.beta > 1.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParams(format!("beta = {} must exceed 1", self.beta)));
        }
        if self.horizon < 1 {
            return Err(Error::InvalidParams("horizon must be at least 1".into()));
        }
        Ok(())
    }
}

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotEdge {
    pub src: u32,
    pub dst: u32,
    pub weight: f64,
}

/// Versioned JSON network snapshot. Floats are written in shortest
/// round-trip decimal form, so reading a snapshot back is bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub version: u32,
    pub nodes: usize,
    pub edges: Vec<SnapshotEdge>,
    pub health: Vec<f64>,
    pub lambda: Vec<f64>,
    pub target: Vec<u32>,
    pub healthy: Vec<u32>,
    pub clock: u32,
}

impl Snapshot {
    pub fn into_state(self) -> Result<NetworkState> {
        if self.version != SNAPSHOT_VERSION {
            return Err(Error::InvalidState(format!(
                "unsupported snapshot version {}",
                self.version
            )));
        }
        let mut in_edges = vec![Vec::new(); self.nodes];
        for e in &self.edges {
            let dst = e.dst as usize;
            if dst >= self.nodes {
                return Err(Error::NodeOutOfRange {
                    node: NodeId(e.dst),
                    nodes: self.nodes,
                });
            }
            in_edges[dst].push(InEdge::new(NodeId(e.src), e.weight));
        }
        NetworkState::new(
            in_edges,
            self.health,
            self.lambda,
            self.target.into_iter().map(NodeId),
            self.healthy.into_iter().map(NodeId),
            self.clock,
        )
    }

    pub fn to_writer(&self, w: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn from_reader(r: impl Read) -> Result<Self> {
        Ok(serde_json::from_reader(r)?)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.to_writer(f)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::from_reader(f)
    }
}
