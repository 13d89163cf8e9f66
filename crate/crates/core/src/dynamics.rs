//! Transition function: weighted edge removals, edge-weight updates and
//! health propagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    validate_decision, EdgeAdditionSet, Edge, InEdge, ModelParams, NetworkState, NodeId,
    RemovalSet, WeightDynamics,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub pre_clock: u32,
    pub additions: EdgeAdditionSet,
    pub removals: RemovalSet,
    pub post_health: Vec<f64>,
}

/// Removal mass of each in-edge, `1 − w`.
fn removal_masses(edges: &[InEdge]) -> Vec<f64> {
    edges.iter().map(|e| (1.0 - e.weight).max(0.0)).collect()
}

/// Marginal probability that each in-edge of a node is removed when exactly
/// one edge is added to it: `(1 − w_r) / (|δ^in| − 1)`.
///
/// A node with a single in-edge loses it with probability 1. If all masses
/// vanish the removal is uniform.
pub fn removal_marginals(edges: &[InEdge]) -> Vec<f64> {
    let masses = removal_masses(edges);
    let total: f64 = masses.iter().sum();
    if total > 0.0 {
        masses.iter().map(|m| m / total).collect()
    } else {
        vec![1.0 / edges.len() as f64; edges.len()]
    }
}

/// Draws `R_t` for decision `additions`.
///
/// Each node receiving `χ` additions loses `χ` distinct in-edges, drawn one at
/// a time with probability proportional to `1 − w` over the edges not yet
/// drawn. Nodes are processed in ascending id order.
pub fn sample_removals<R: Rng + ?Sized>(
    state: &NetworkState,
    additions: &EdgeAdditionSet,
    rng: &mut R,
) -> Result<RemovalSet> {
    validate_decision(state, additions).map_err(Error::Infeasible)?;
    let mut removals = RemovalSet::new();
    for (v, count) in additions.counts_by_sink() {
        let mut remaining: Vec<InEdge> = state.in_edges(v).to_vec();
        if remaining.len() < count {
            return Err(Error::Contract(format!(
                "node {v} receives {count} additions but has in-degree {}",
                remaining.len()
            )));
        }
        for _ in 0..count {
            let masses = removal_masses(&remaining);
            let total: f64 = masses.iter().sum();
            let pick = if total > 0.0 {
                let mut target = rng.gen::<f64>() * total;
                let mut idx = remaining.len() - 1;
                for (i, m) in masses.iter().enumerate() {
                    if target < *m {
                        idx = i;
                        break;
                    }
                    target -= m;
                }
                // Rounding can leave `target` just above the last mass; skip zero-mass tails.
                while masses[idx] == 0.0 && idx > 0 {
                    idx -= 1;
                }
                idx
            } else {
                rng.gen_range(0..remaining.len())
            };
            let removed = remaining.remove(pick);
            removals.insert(Edge::new(removed.source, v));
        }
    }
    Ok(removals)
}

fn check_consistent(
    state: &NetworkState,
    additions: &EdgeAdditionSet,
    removals: &RemovalSet,
) -> Result<()> {
    validate_decision(state, additions).map_err(Error::Infeasible)?;
    for e in removals.iter() {
        if !state.has_edge(*e) {
            return Err(Error::Contract(format!("removed edge {e} is not present")));
        }
    }
    if !removals.pairs_with(additions) {
        return Err(Error::Contract(
            "per-node removal counts do not match addition counts".into(),
        ));
    }
    Ok(())
}

/// Edge-weight update. Returns the in-edge lists of `E_{t+1}` with weights
/// `w(t+1)`; surviving edges keep their order, new edges follow in ascending
/// source order.
pub fn update_weights(
    state: &NetworkState,
    additions: &EdgeAdditionSet,
    removals: &RemovalSet,
    params: &ModelParams,
) -> Result<Vec<Vec<InEdge>>> {
    check_consistent(state, additions, removals)?;
    let added = additions.counts_by_sink();
    let mut out = Vec::with_capacity(state.node_count());
    for (vi, edges) in state.in_edges.iter().enumerate() {
        let v = NodeId::from(vi);
        let k = edges.len();
        if k == 0 {
            out.push(Vec::new());
            continue;
        }
        let kf = k as f64;
        let mut next: Vec<InEdge>;
        if !added.contains_key(&v) {
            next = match params.weight_dynamics {
                WeightDynamics::Adaptive => edges
                    .iter()
                    .map(|e| InEdge::new(e.source, (1.0 - params.mu) * e.weight + params.mu / kf))
                    .collect(),
                WeightDynamics::Uniform => edges.clone(),
            };
        } else {
            next = edges
                .iter()
                .filter(|e| !removals.contains(&Edge::new(e.source, v)))
                .copied()
                .collect();
            next.extend(
                additions
                    .sources_into(v)
                    .into_iter()
                    .map(|u| InEdge::new(u, 1.0 / (kf * kf))),
            );
            debug_assert_eq!(next.len(), k);
            let sum: f64 = next.iter().map(|e| e.weight).sum();
            for e in &mut next {
                e.weight /= sum;
            }
        }
        if params.weight_dynamics == WeightDynamics::Uniform {
            for e in &mut next {
                e.weight = 1.0 / kf;
            }
        }
        out.push(next);
    }
    Ok(out)
}

/// `x_v(t+1) = (1 − λ_v) x_v(t) + λ_v Σ_u w_(u,v)(t+1) x_u(t)`; nodes without
/// in-edges keep their value.
pub fn propagate_health(state: &NetworkState, new_in_edges: &[Vec<InEdge>]) -> Vec<f64> {
    let x = &state.health;
    new_in_edges
        .iter()
        .enumerate()
        .map(|(v, edges)| {
            if edges.is_empty() {
                return x[v];
            }
            let lam = state.susceptibility[v];
            let avg: f64 = edges.iter().map(|e| e.weight * x[e.source.index()]).sum();
            ((1.0 - lam) * x[v] + lam * avg).clamp(0.0, 1.0)
        })
        .collect()
}

/// Health at `t+1` if no edges are added anywhere (deterministic).
pub fn no_action_forecast(state: &NetworkState, params: &ModelParams) -> Vec<f64> {
    let x = &state.health;
    state
        .in_edges
        .iter()
        .enumerate()
        .map(|(v, edges)| {
            if edges.is_empty() {
                return x[v];
            }
            let k = edges.len() as f64;
            let lam = state.susceptibility[v];
            let avg: f64 = match params.weight_dynamics {
                WeightDynamics::Adaptive => edges
                    .iter()
                    .map(|e| ((1.0 - params.mu) * e.weight + params.mu / k) * x[e.source.index()])
                    .sum(),
                WeightDynamics::Uniform => {
                    edges.iter().map(|e| x[e.source.index()]).sum::<f64>() / k
                }
            };
            ((1.0 - lam) * x[v] + lam * avg).clamp(0.0, 1.0)
        })
        .collect()
}

/// Deterministic part of the transition for a given `(A_t, R_t)`.
pub fn apply_transition(
    state: &NetworkState,
    additions: &EdgeAdditionSet,
    removals: &RemovalSet,
    params: &ModelParams,
) -> Result<NetworkState> {
    let in_edges = update_weights(state, additions, removals, params)?;
    let health = propagate_health(state, &in_edges);
    Ok(NetworkState {
        in_edges,
        health,
        susceptibility: state.susceptibility.clone(),
        target: state.target.clone(),
        healthy: state.healthy.clone(),
        roles: state.roles.clone(),
        clock: state.clock + 1,
    })
}

/// One full transition `S_{t+1} = S^M(S_t, A_t, I_t)`.
pub fn step<R: Rng + ?Sized>(
    state: &NetworkState,
    additions: &EdgeAdditionSet,
    params: &ModelParams,
    rng: &mut R,
) -> Result<(NetworkState, TransitionRecord)> {
    let removals = sample_removals(state, additions, rng)?;
    let next = apply_transition(state, additions, &removals, params)?;
    let record = TransitionRecord {
        pre_clock: state.clock,
        additions: additions.clone(),
        removals,
        post_health: next.health.clone(),
    };
    Ok((next, record))
}
