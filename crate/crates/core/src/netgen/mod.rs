//! Synthetic populations and influence networks.
//!
//! Agents are drawn from a region distribution, wired by spatial preferential
//! attachment over their demographic features, and given random normalized
//! in-weights, scalar health and susceptibility.

mod profile;

use std::path::PathBuf;

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InEdge, NetworkState, NodeId};

pub use profile::{
    sample_agents, AgeBand, AgentProfile, DistributionSpec, Employment, FactoredSpec, Gender,
    HealthCategory, JointEntry, ProfileSampler, Race, Student, AGE_BANDS, DISTRIBUTION_VERSION,
};

fn default_nodes() -> usize {
    200
}
fn default_m() -> usize {
    4
}
fn default_rho() -> f64 {
    0.1
}
fn default_half() -> f64 {
    0.5
}
fn default_health_cuts() -> [f64; 2] {
    [0.35, 0.65]
}
fn default_lambda_range() -> [f64; 2] {
    [0.0, 1.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    /// Population size `N`.
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// Links formed by each arriving agent.
    #[serde(default = "default_m")]
    pub m: usize,
    /// Seed clique size; defaults to `m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m0: Option<usize>,
    /// Decay of attachment probability with feature distance.
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Fraction of obese agents enrolled as targets.
    #[serde(default = "default_half")]
    pub a: f64,
    /// Fraction of non-obese agents enrolled as mentors.
    #[serde(default = "default_half")]
    pub b: f64,
    /// Health cut points between obese / overweight / non-overweight.
    #[serde(default = "default_health_cuts")]
    pub health_cuts: [f64; 2],
    /// Susceptibility is uniform on this interval.
    #[serde(default = "default_lambda_range")]
    pub lambda_range: [f64; 2],
    /// Region distribution file; the built-in illustrative one when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<PathBuf>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            nodes: default_nodes(),
            m: default_m(),
            m0: None,
            rho: default_rho(),
            a: default_half(),
            b: default_half(),
            health_cuts: default_health_cuts(),
            lambda_range: default_lambda_range(),
            distribution: None,
        }
    }
}

impl GenConfig {
    pub fn seed_size(&self) -> usize {
        self.m0.unwrap_or(self.m)
    }

    pub fn validate(&self) -> Result<()> {
        let m0 = self.seed_size();
        let bad = |msg: String| Err(Error::Config(msg));
        if self.m < 2 {
            return bad(format!("m must be at least 2 (got {})", self.m));
        }
        if self.m > m0 || m0 >= self.nodes {
            return bad(format!(
                "need 2 ≤ m ≤ m0 < N (got m={}, m0={m0}, N={})",
                self.m, self.nodes
            ));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return bad(format!("rho must be a finite non-negative number (got {})", self.rho));
        }
        for (name, f) in [("a", self.a), ("b", self.b)] {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("{name} must lie in [0, 1] (got {f})"));
            }
        }
        let [lo, hi] = self.health_cuts;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return bad(format!("health cuts must satisfy 0 < lo < hi < 1 (got {lo}, {hi})"));
        }
        let [l0, l1] = self.lambda_range;
        if !(0.0 <= l0 && l0 <= l1 && l1 <= 1.0) {
            return bad(format!("lambda range must lie within [0, 1] (got {l0}, {l1})"));
        }
        Ok(())
    }

    pub fn load_distribution(&self) -> Result<DistributionSpec> {
        match &self.distribution {
            Some(p) => DistributionSpec::read_file(p),
            None => Ok(DistributionSpec::illustrative()),
        }
    }
}

/// Undirected link lists; every link stands for both directed edges.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub neighbors: Vec<Vec<usize>>,
}

impl Topology {
    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }
}

fn distance(a: &[f64; 8], b: &[f64; 8]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Spatial preferential attachment. The first `m0` agents form a complete
/// digraph; each later agent links to `m` distinct earlier agents, drawn one at
/// a time with probability proportional to `exp(−ρ‖y_u − y_v‖)·d(v)` among
/// those not yet chosen, `d` being the current in-degree.
pub fn build_topology<R: Rng + ?Sized>(
    agents: &[AgentProfile],
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<Topology> {
    let n = agents.len();
    let cfg = GenConfig { nodes: n, ..cfg.clone() };
    cfg.validate()?;
    let m0 = cfg.seed_size();
    let feats: Vec<[f64; 8]> = agents.iter().map(AgentProfile::features).collect();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for u in 0..m0 {
        neighbors[u] = (0..m0).filter(|&v| v != u).collect();
    }
    let mut logw = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for u in m0..n {
        logw.clear();
        logw.extend((0..u).map(|v| {
            -cfg.rho * distance(&feats[u], &feats[v]) + (neighbors[v].len() as f64).ln()
        }));
        let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        weights.clear();
        weights.extend(logw.iter().map(|l| (l - top).exp()));
        for _ in 0..cfg.m {
            let total: f64 = weights.iter().sum();
            let mut r = rng.gen::<f64>() * total;
            let mut pick = None;
            for (v, &w) in weights.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(v);
                    if r < w {
                        break;
                    }
                    r -= w;
                }
            }
            let v = pick.expect("enough positive-weight nodes remain");
            weights[v] = 0.0;
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
    }
    Ok(Topology { neighbors })
}

/// Random targets among obese agents and mentors among the rest, with sizes
/// `round(a·|obese|)` and `round(b·|non-obese|)`.
pub fn assign_roles<R: Rng + ?Sized>(
    agents: &[AgentProfile],
    a: f64,
    b: f64,
    rng: &mut R,
) -> (Vec<NodeId>, Vec<NodeId>) {
    let (obese, rest): (Vec<usize>, Vec<usize>) = (0..agents.len()).partition(|&i| agents[i].is_obese());
    let mut pick = |pool: &[usize], frac: f64| -> Vec<NodeId> {
        let k = ((frac * pool.len() as f64).round() as usize).min(pool.len());
        let mut ids: Vec<NodeId> = sample_indices(rng, pool.len(), k)
            .into_iter()
            .map(|i| NodeId::from(pool[i]))
            .collect();
        ids.sort_unstable();
        ids
    };
    let target = pick(&obese, a);
    let healthy = pick(&rest, b);
    (target, healthy)
}

/// Independent uniform draws per in-edge, normalized per sink. Exact zeros are redrawn.
pub fn init_weights<R: Rng + ?Sized>(topology: &Topology, rng: &mut R) -> Vec<Vec<InEdge>> {
    topology
        .neighbors
        .iter()
        .map(|srcs| {
            let raw: Vec<f64> = srcs
                .iter()
                .map(|_| loop {
                    let w = rng.gen::<f64>();
                    if w > 0.0 {
                        break w;
                    }
                })
                .collect();
            let total: f64 = raw.iter().sum();
            srcs.iter()
                .zip(raw)
                .map(|(&u, w)| InEdge::new(u as u32, if srcs.len() == 1 { 1.0 } else { w / total }))
                .collect()
        })
        .collect()
}

/// Scalar health drawn uniformly inside the category's band.
pub fn health_to_scalar<R: Rng + ?Sized>(category: HealthCategory, cuts: [f64; 2], rng: &mut R) -> f64 {
    match category {
        HealthCategory::Obese => rng.gen_range(0.0..cuts[0]),
        HealthCategory::Overweight => rng.gen_range(cuts[0]..cuts[1]),
        HealthCategory::NonOverweight => rng.gen_range(cuts[1]..=1.0),
    }
}

#[derive(Clone, Debug)]
pub struct GeneratedNetwork {
    pub agents: Vec<AgentProfile>,
    pub state: NetworkState,
}

/// Full pipeline: agents, topology, roles, weights, health and susceptibility, in that draw order.
pub fn generate_network<R: Rng + ?Sized>(
    dist: &DistributionSpec,
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<GeneratedNetwork> {
    cfg.validate()?;
    let agents = sample_agents(dist, cfg.nodes, rng)?;
    let topology = build_topology(&agents, cfg, rng)?;
    let (target, healthy) = assign_roles(&agents, cfg.a, cfg.b, rng);
    let in_edges = init_weights(&topology, rng);
    let health = agents
        .iter()
        .map(|a| health_to_scalar(a.health_category, cfg.health_cuts, rng))
        .collect();
    let [l0, l1] = cfg.lambda_range;
    let lambda = (0..cfg.nodes)
        .map(|_| if l0 == l1 { l0 } else { rng.gen_range(l0..=l1) })
        .collect();
    let state = NetworkState::new(in_edges, health, lambda, target, healthy, 0)?;
    Ok(GeneratedNetwork { agents, state })
}
