//! Exhaustive-enumeration ground truth for small instances.
//!
//! Everything here enumerates removal outcomes under exactly the law used by
//! [`crate::dynamics::sample_removals`] and pushes each outcome through the
//! full transition, so it shares no algebra with the closed-form scorers.

use std::collections::BTreeMap;

use crate::dynamics::{apply_transition, removal_marginals};
use crate::error::{Error, Result};
use crate::model::{
    candidate_edges, validate_decision, Edge, EdgeAdditionSet, InEdge, ModelParams, NetworkState,
    NodeId, RemovalSet,
};
use crate::objectives::penalty;

/// Largest number of ordered removal sequences enumerated for one decision.
pub const MAX_REMOVAL_SEQUENCES: usize = 50_000;
/// Largest target in-degree accepted by [`exact_score`].
pub const MAX_SCORE_IN_DEGREE: usize = 6;
/// Per-node guards for [`brute_force_policy`].
pub const MAX_BRUTE_CANDIDATES: usize = 8;
pub const MAX_BRUTE_CAP: usize = 4;

/// Two values closer than this count as a tie when judging argmax uniqueness.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct EnumeratedDistribution {
    pub outcomes: Vec<(RemovalSet, f64)>,
}

impl EnumeratedDistribution {
    pub fn total_probability(&self) -> f64 {
        self.outcomes.iter().map(|(_, p)| p).sum()
    }

    /// `E[g(R)]`.
    pub fn expect(&self, mut g: impl FnMut(&RemovalSet) -> Result<f64>) -> Result<f64> {
        let mut acc = 0.0;
        for (r, p) in &self.outcomes {
            acc += p * g(r)?;
        }
        Ok(acc)
    }
}

fn ordered_sequences(k: usize, draws: usize) -> usize {
    (k + 1 - draws..=k).product()
}

/// Unordered removal sets at one node with their probabilities.
fn node_outcomes(edges: &[InEdge], draws: usize) -> BTreeMap<Vec<usize>, f64> {
    fn walk(
        edges: &[InEdge],
        remaining: &mut Vec<usize>,
        chosen: &mut Vec<usize>,
        prob: f64,
        left: usize,
        out: &mut BTreeMap<Vec<usize>, f64>,
    ) {
        if left == 0 {
            let mut key = chosen.clone();
            key.sort_unstable();
            *out.entry(key).or_insert(0.0) += prob;
            return;
        }
        let subset: Vec<InEdge> = remaining.iter().map(|&i| edges[i]).collect();
        // the single-draw law is the normalized removal mass
        let law = removal_marginals(&subset);
        for pos in 0..remaining.len() {
            if law[pos] == 0.0 {
                continue;
            }
            let idx = remaining.remove(pos);
            chosen.push(idx);
            walk(edges, remaining, chosen, prob * law[pos], left - 1, out);
            chosen.pop();
            remaining.insert(pos, idx);
        }
    }
    let mut out = BTreeMap::new();
    let mut remaining: Vec<usize> = (0..edges.len()).collect();
    walk(edges, &mut remaining, &mut Vec::new(), 1.0, draws, &mut out);
    out
}

/// Exact joint distribution of `R_t` given `A_t`: per-node sequential laws, independent across nodes.
pub fn removal_distribution_exact(
    state: &NetworkState,
    additions: &EdgeAdditionSet,
) -> Result<EnumeratedDistribution> {
    validate_decision(state, additions).map_err(Error::Infeasible)?;
    let counts = additions.counts_by_sink();
    let mut sequences = 1usize;
    for (&v, &c) in &counts {
        sequences = sequences.saturating_mul(ordered_sequences(state.in_degree(v), c));
        if sequences > MAX_REMOVAL_SEQUENCES {
            return Err(Error::TooLarge(format!(
                "more than {MAX_REMOVAL_SEQUENCES} removal sequences"
            )));
        }
    }
    let mut joint: Vec<(RemovalSet, f64)> = vec![(RemovalSet::new(), 1.0)];
    for (&v, &c) in &counts {
        let edges = state.in_edges(v);
        let local = node_outcomes(edges, c);
        let mut next = Vec::with_capacity(joint.len() * local.len());
        for (base, p) in &joint {
            for (set, q) in &local {
                let mut r = base.clone();
                for &i in set {
                    r.insert(Edge::new(edges[i].source, v));
                }
                next.push((r, p * q));
            }
        }
        joint = next;
    }
    Ok(EnumeratedDistribution { outcomes: joint })
}

fn no_action(state: &NetworkState, params: &ModelParams) -> Result<NetworkState> {
    apply_transition(state, &EdgeAdditionSet::new(), &RemovalSet::new(), params)
}

/// Expected health of `v` summed over the next `depth` steps when `additions`
/// is applied now and nothing afterwards. Penalty excluded.
fn expected_health(
    state: &NetworkState,
    v: NodeId,
    additions: &EdgeAdditionSet,
    depth: u32,
    params: &ModelParams,
) -> Result<f64> {
    let dist = removal_distribution_exact(state, additions)?;
    dist.expect(|r| {
        let mut s = apply_transition(state, additions, r, params)?;
        let mut total = s.health()[v.index()];
        for _ in 1..depth {
            s = no_action(&s, params)?;
            total += s.health()[v.index()];
        }
        Ok(total)
    })
}

fn check_depth(depth: u32) -> Result<()> {
    if depth == 1 || depth == 2 {
        Ok(())
    } else {
        Err(Error::Contract(format!("enumeration depth must be 1 or 2, got {depth}")))
    }
}

/// Exact gain of adding `edge` alone: `f^v({e}) − f^v(∅)` at depth 1 and
/// `h^v({e}) − h^v(∅)` (no action at `t+1`) at depth 2.
pub fn exact_score(state: &NetworkState, edge: Edge, depth: u32, params: &ModelParams) -> Result<f64> {
    check_depth(depth)?;
    let v = edge.sink;
    let a: EdgeAdditionSet = [edge].into_iter().collect();
    validate_decision(state, &a).map_err(Error::Infeasible)?;
    if state.in_degree(v) > MAX_SCORE_IN_DEGREE {
        return Err(Error::TooLarge(format!(
            "in-degree {} of node {v} exceeds {MAX_SCORE_IN_DEGREE}",
            state.in_degree(v)
        )));
    }
    let with = expected_health(state, v, &a, depth, params)?;
    let without = expected_health(state, v, &EdgeAdditionSet::new(), depth, params)?;
    Ok(with - without - penalty(state.clock(), 1, params))
}

/// Exact per-node objective gain of a whole decision `A^v` relative to `∅`.
pub fn exact_node_gain(
    state: &NetworkState,
    v: NodeId,
    additions: &EdgeAdditionSet,
    depth: u32,
    params: &ModelParams,
) -> Result<f64> {
    check_depth(depth)?;
    let a = additions.restricted_to_sink(v);
    let with = expected_health(state, v, &a, depth, params)?;
    let without = expected_health(state, v, &EdgeAdditionSet::new(), depth, params)?;
    Ok(with - without - penalty(state.clock(), a.len(), params))
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeArgmax {
    pub node: NodeId,
    pub best: EdgeAdditionSet,
    pub value: f64,
    /// Best value minus the runner-up (infinite when only `∅` is feasible).
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BruteForce {
    pub decision: EdgeAdditionSet,
    /// Sum of per-node gains of the returned decision.
    pub value: f64,
    pub unique: bool,
    pub nodes: Vec<NodeArgmax>,
}

fn subsets_up_to(items: &[Edge], cap: usize) -> Vec<Vec<Edge>> {
    let mut out = Vec::new();
    for mask in 0u32..(1 << items.len()) {
        if mask.count_ones() as usize <= cap {
            out.push(
                items
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, &e)| e)
                    .collect(),
            );
        }
    }
    out
}

/// Exact myopic (depth 1) or one-step-lookahead (depth 2) decision via the
/// per-node decomposition, searching every feasible subset at each target.
pub fn brute_force_policy(state: &NetworkState, depth: u32, params: &ModelParams) -> Result<BruteForce> {
    check_depth(depth)?;
    let mut decision = EdgeAdditionSet::new();
    let mut nodes = Vec::new();
    let mut value = 0.0;
    let mut unique = true;
    for &v in state.targets() {
        let cands = candidate_edges(state, v)?;
        let cap = state.in_degree(v).min(cands.len());
        if cands.len() > MAX_BRUTE_CANDIDATES || cap > MAX_BRUTE_CAP {
            return Err(Error::TooLarge(format!(
                "node {v} has {} candidates and cap {cap}",
                cands.len()
            )));
        }
        let mut scored: Vec<(f64, Vec<Edge>)> = Vec::new();
        for subset in subsets_up_to(&cands, cap) {
            let a: EdgeAdditionSet = subset.iter().copied().collect();
            let g = if a.is_empty() { 0.0 } else { exact_node_gain(state, v, &a, depth, params)? };
            scored.push((g, subset));
        }
        scored.sort_by(|x, y| y.0.total_cmp(&x.0));
        let (best_val, best) = scored[0].clone();
        let gap = scored.get(1).map_or(f64::INFINITY, |s| best_val - s.0);
        if gap <= TIE_TOLERANCE {
            unique = false;
        }
        decision.extend(best.iter().copied());
        value += best_val;
        nodes.push(NodeArgmax {
            node: v,
            best: best.into_iter().collect(),
            value: best_val,
            gap,
        });
    }
    Ok(BruteForce {
        decision,
        value,
        unique,
        nodes,
    })
}

/// Exact two-step contribution of target `v`:
/// `E[x_v(t+1) + x_v(t+2)] − c_t|A_t^v| − c_{t+1}|A_{t+1}^v|`, where
/// `A_{t+1}` may depend on the realized `S_{t+1}` through `next`.
pub fn pairwise_value<F>(
    state: &NetworkState,
    v: NodeId,
    now: &EdgeAdditionSet,
    mut next: F,
    params: &ModelParams,
) -> Result<f64>
where
    F: FnMut(&NetworkState) -> Result<EdgeAdditionSet>,
{
    let a_now = now.restricted_to_sink(v);
    let first = removal_distribution_exact(state, &a_now)?;
    let mut total = -penalty(state.clock(), a_now.len(), params);
    for (r, p) in &first.outcomes {
        let s1 = apply_transition(state, &a_now, r, params)?;
        let a_next = next(&s1)?.restricted_to_sink(v);
        let second = removal_distribution_exact(&s1, &a_next)?;
        let tail = second.expect(|r2| {
            let s2 = apply_transition(&s1, &a_next, r2, params)?;
            Ok(s2.health()[v.index()])
        })?;
        total += p * (s1.health()[v.index()] + tail - penalty(s1.clock(), a_next.len(), params));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::sample_removals;
    use crate::model::WeightDynamics;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn star(weights: &[f64]) -> NetworkState {
        let k = weights.len();
        let n = k + 3;
        let mut in_edges: Vec<Vec<InEdge>> = (0..n).map(|v| vec![InEdge::new(if v == 1 { 2u32 } else { 1u32 }, 1.0)]).collect();
        in_edges[0] = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| InEdge::new((i + 3) as u32, w))
            .collect();
        let health = (0..n).map(|i| 0.1 + 0.8 * i as f64 / n as f64).collect();
        NetworkState::new(in_edges, health, vec![0.5; n], [NodeId(0)], [NodeId(1), NodeId(2)], 0).unwrap()
    }

    fn single(u: u32) -> EdgeAdditionSet {
        [Edge::new(u, 0u32)].into_iter().collect()
    }

    #[test]
    fn single_addition_outcomes() {
        let s = star(&[0.5, 0.3, 0.2]);
        let d = removal_distribution_exact(&s, &single(1)).unwrap();
        let probs: Vec<f64> = d.outcomes.iter().map(|(_, p)| *p).collect();
        let want = [0.25, 0.35, 0.40];
        assert_eq!(probs.len(), 3);
        for (p, w) in probs.iter().zip(want) {
            assert!((p - w).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_decision_has_one_outcome() {
        let d = removal_distribution_exact(&star(&[0.5, 0.5]), &EdgeAdditionSet::new()).unwrap();
        assert_eq!(d.outcomes, vec![(RemovalSet::new(), 1.0)]);
    }

    #[test]
    fn independent_nodes_multiply() {
        // node 0 (weights 0.7/0.3) and node 3 both targets
        let s = star(&[0.7, 0.3]);
        let mut in3 = s.in_edges.clone();
        in3[3] = vec![InEdge::new(1u32, 0.6), InEdge::new(4u32, 0.4)];
        let s = NetworkState::new(in3, s.health.clone(), s.susceptibility.clone(), [NodeId(0), NodeId(3)], [NodeId(2)], 0)
            .unwrap();
        let a: EdgeAdditionSet = [Edge::new(2u32, 0u32), Edge::new(2u32, 3u32)].into_iter().collect();
        let d = removal_distribution_exact(&s, &a).unwrap();
        assert_eq!(d.outcomes.len(), 4);
        let find = |r0: u32, r3: u32| {
            d.outcomes
                .iter()
                .find(|(r, _)| r.contains(&Edge::new(r0, 0u32)) && r.contains(&Edge::new(r3, 3u32)))
                .unwrap()
                .1
        };
        assert!((find(3, 1) - 0.3 * 0.4).abs() < 1e-15);
        assert!((find(4, 4) - 0.7 * 0.6).abs() < 1e-15);
        assert!((d.total_probability() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_draws_follow_sequential_law() {
        let s = star(&[0.5, 0.3, 0.2]);
        let a: EdgeAdditionSet = [Edge::new(1u32, 0u32), Edge::new(2u32, 0u32)].into_iter().collect();
        let d = removal_distribution_exact(&s, &a).unwrap();
        assert_eq!(d.outcomes.len(), 3);
        // P({3,4}) = .25·.7/1.5 + .35·.5/1.3 (first 3 then 4, or 4 then 3)
        let p34 = d
            .outcomes
            .iter()
            .find(|(r, _)| r.contains(&Edge::new(3u32, 0u32)) && r.contains(&Edge::new(4u32, 0u32)))
            .unwrap()
            .1;
        let want = 0.25 * (0.7 / 1.5) + 0.35 * (0.5 / 1.3);
        assert!((p34 - want).abs() < 1e-15);
        assert!((d.total_probability() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_agrees_with_enumeration() {
        let s = star(&[0.5, 0.3, 0.15, 0.05]);
        let a: EdgeAdditionSet = [Edge::new(1u32, 0u32), Edge::new(2u32, 0u32)].into_iter().collect();
        let d = removal_distribution_exact(&s, &a).unwrap();
        let n = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = vec![0usize; d.outcomes.len()];
        for _ in 0..n {
            let r = sample_removals(&s, &a, &mut rng).unwrap();
            let i = d.outcomes.iter().position(|(o, _)| *o == r).unwrap();
            counts[i] += 1;
        }
        for ((_, p), c) in d.outcomes.iter().zip(counts) {
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((c as f64 / n as f64 - p).abs() <= 4.0 * sd + 1e-12);
        }
    }

    #[test]
    fn guard_refuses_large_enumerations() {
        let k = 9;
        let s = star(&vec![1.0 / k as f64; k]);
        assert!(matches!(exact_score(&s, Edge::new(1u32, 0u32), 1, &ModelParams::default()), Err(Error::TooLarge(_))));
        assert!(exact_score(&s, Edge::new(1u32, 0u32), 3, &ModelParams::default()).is_err());
    }

    #[test]
    fn zero_susceptibility_scores_minus_penalty() {
        let mut s = star(&[0.6, 0.4]);
        s.susceptibility[0] = 0.0;
        let p = ModelParams { alpha: 0.02, beta: 1.5, ..ModelParams::default() };
        let s = s.with_clock(2);
        let got = exact_score(&s, Edge::new(1u32, 0u32), 1, &p).unwrap();
        assert!((got + 0.02 * 2.25).abs() < 1e-15);
    }

    #[test]
    fn equal_weight_closed_form() {
        let s = star(&[0.25; 4]).with_clock(1);
        let p = ModelParams { weight_dynamics: WeightDynamics::Uniform, ..ModelParams::default() };
        let x = s.health();
        let mean: f64 = (3..7).map(|i| x[i]).sum::<f64>() / 4.0;
        let want = 0.5 / 4.0 * (x[1] - mean) - p.alpha * p.beta;
        let got = exact_score(&s, Edge::new(1u32, 0u32), 1, &p).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn swapping_mentors_changes_gain_by_health_gap() {
        // equal weights: the gain difference between two single additions is (λ/k)(x_a − x_b)
        let s = star(&[0.5, 0.5]);
        let p = ModelParams { weight_dynamics: WeightDynamics::Uniform, ..ModelParams::default() };
        let ga = exact_score(&s, Edge::new(1u32, 0u32), 1, &p).unwrap();
        let gb = exact_score(&s, Edge::new(2u32, 0u32), 1, &p).unwrap();
        let x = s.health();
        assert!((ga - gb - 0.25 * (x[1] - x[2])).abs() < 1e-12);
    }

    #[test]
    fn brute_force_returns_empty_when_nothing_pays() {
        let s = star(&[0.5, 0.5]);
        let p = ModelParams { alpha: 0.9, ..ModelParams::default() };
        let b = brute_force_policy(&s, 1, &p).unwrap();
        assert!(b.decision.is_empty());
        assert_eq!(b.value, 0.0);
    }

    #[test]
    fn brute_force_single_positive_candidate() {
        let s = star(&[0.5, 0.5]);
        let mut health = s.health.clone();
        health[2] = 1.0;
        let s = NetworkState::new(s.in_edges.clone(), health, s.susceptibility.clone(), [NodeId(0)], [NodeId(2)], 0)
            .unwrap();
        let p = ModelParams { alpha: 0.0, ..ModelParams::default() };
        assert!(exact_score(&s, Edge::new(2u32, 0u32), 1, &p).unwrap() > 0.0);
        let b = brute_force_policy(&s, 1, &p).unwrap();
        assert_eq!(b.decision, single(2));
        assert!(b.unique);
    }

    #[test]
    fn pairwise_value_of_inaction_is_two_step_health() {
        let s = star(&[0.6, 0.4]);
        let p = ModelParams::default();
        let got = pairwise_value(&s, NodeId(0), &EdgeAdditionSet::new(), |_| Ok(EdgeAdditionSet::new()), &p).unwrap();
        let s1 = no_action(&s, &p).unwrap();
        let s2 = no_action(&s1, &p).unwrap();
        assert!((got - (s1.health()[0] + s2.health()[0])).abs() < 1e-15);
    }
}
