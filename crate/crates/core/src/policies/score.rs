//! Closed-form single-edge scores with per-node caching.
//!
//! For a target `v` every candidate `(u, v)` shares the same removal
//! distribution and the same neighborhood sums, so a [`ScoreContext`] does one
//! `O(|δ^in(v)|)` pass and then scores each candidate in constant time as
//! `base + cx·x_u(t) + cf·x_u(t+1)`.
//!
//! Under adaptive weights the post-addition weights are `w_j / Γ̃_r` with
//! `Γ̃_r = 1 − w_r + 1/k²` when edge `r` is displaced. The scores use the
//! scaled normalizer `Γ_r = k²Γ̃_r = k²(1 − w_r) + 1`, which gives
//!
//! ```text
//! f({u}) − f(∅) = λ [ x_u Σ_r p_r/Γ_r + Σ_r p_r k² (Δ − w_r x_r)/Γ_r − Ψ ] − αβ^t
//! ```
//!
//! with `p_r` the single-addition removal marginals, `Δ = Σ w x` and
//! `Ψ = Σ ((1−μ)w + μ/k) x`.

use std::cell::Cell;

use ndarray::Array2;

use crate::dynamics::removal_marginals;
use crate::error::{Error, Result};
use crate::model::{Edge, ModelParams, NetworkState, NodeId, WeightDynamics};
use crate::objectives::penalty_weight;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreKind {
    Myopic,
    Lookahead,
    Linearized,
}

/// Cached per-(node, clock) quantities for scoring candidate edges into one target.
#[derive(Debug)]
pub struct ScoreContext<'a> {
    kind: ScoreKind,
    node: NodeId,
    clock: u32,
    base: f64,
    coef_now: f64,
    coef_next: f64,
    forecast: Option<&'a [f64]>,
    gradient: Option<&'a Array2<f64>>,
    setup_ops: usize,
    evaluations: Cell<usize>,
}

/// Neighborhood sums shared by the myopic and lookahead forms.
struct Sums {
    k: f64,
    lambda: f64,
    /// Σ p_r / Γ_r
    s1: f64,
    /// Σ p_r k² (Δ − w_r x_r) / Γ_r
    s2: f64,
    /// drift-weighted health sum Ψ
    psi: f64,
    /// Σ p_r x_r
    expected_removed: f64,
    ops: usize,
}

fn neighborhood_sums(state: &NetworkState, v: NodeId, params: &ModelParams) -> Result<Sums> {
    let edges = state.in_edges(v);
    if edges.is_empty() {
        return Err(Error::Contract(format!("node {v} has no in-edges to displace")));
    }
    let x = state.health();
    let k = edges.len() as f64;
    let k2 = k * k;
    let p = removal_marginals(edges);
    let delta: f64 = edges.iter().map(|e| e.weight * x[e.source.index()]).sum();
    let mut s = Sums {
        k,
        lambda: state.susceptibility()[v.index()],
        s1: 0.0,
        s2: 0.0,
        psi: 0.0,
        expected_removed: 0.0,
        ops: 2 * edges.len(),
    };
    for (e, &pr) in edges.iter().zip(&p) {
        let xr = x[e.source.index()];
        let gamma = k2 * (1.0 - e.weight) + 1.0;
        s.s1 += pr / gamma;
        s.s2 += pr * k2 * (delta - e.weight * xr) / gamma;
        s.psi += ((1.0 - params.mu) * e.weight + params.mu / k) * xr;
        s.expected_removed += pr * xr;
    }
    Ok(s)
}

impl<'a> ScoreContext<'a> {
    /// Context for the one-step expected gain `f^v({(u,v)}) − f^v(∅)`.
    pub fn myopic(state: &NetworkState, v: NodeId, params: &ModelParams) -> Result<Self> {
        let s = neighborhood_sums(state, v, params)?;
        let pen = penalty_weight(state.clock(), params);
        let (base, coef_now) = match params.weight_dynamics {
            WeightDynamics::Adaptive => (s.lambda * (s.s2 - s.psi) - pen, s.lambda * s.s1),
            WeightDynamics::Uniform => {
                let c = s.lambda / s.k;
                (-c * s.expected_removed - pen, c)
            }
        };
        Ok(Self::with(ScoreKind::Myopic, state, v, base, coef_now, 0.0, s.ops))
    }

    /// Context for the two-step gain `h^v({(u,v)}) − h^v(∅)` with no action at
    /// `t+1`. `forecast` is the no-action health vector `x(t+1)`.
    pub fn lookahead(
        state: &NetworkState,
        v: NodeId,
        params: &ModelParams,
        forecast: &'a [f64],
    ) -> Result<Self> {
        let s = neighborhood_sums(state, v, params)?;
        let pen = penalty_weight(state.clock(), params);
        let lam = s.lambda;
        let k = s.k;
        let mu = params.mu;
        let edges = state.in_edges(v);
        let mut ops = s.ops;
        let (base, coef_now, coef_next) = match params.weight_dynamics {
            WeightDynamics::Adaptive => {
                let k2 = k * k;
                let p = removal_marginals(edges);
                // Θ and Π: next-step neighborhood sums over x(t+1)
                let mut theta = 0.0;
                let mut pi = 0.0;
                // no-action baseline of the second-step neighbor average
                let mut phi = 0.0;
                for e in edges {
                    let f = forecast[e.source.index()];
                    theta += e.weight * f;
                    pi += f;
                    let drifted = (1.0 - mu) * e.weight + mu / k;
                    phi += ((1.0 - mu) * drifted + mu / k) * f;
                }
                theta *= (1.0 - mu) * k2;
                pi *= mu / k;
                let mut s4 = 0.0;
                for (e, &pr) in edges.iter().zip(&p) {
                    let gamma = k2 * (1.0 - e.weight) + 1.0;
                    let fr = forecast[e.source.index()];
                    s4 += pr / gamma
                        * (theta + gamma * pi - ((1.0 - mu) * k2 * e.weight + mu * gamma / k) * fr);
                }
                ops += 2 * edges.len();
                (
                    (2.0 - lam) * lam * (s.s2 - s.psi) + lam * (s4 - phi) - pen,
                    (2.0 - lam) * lam * s.s1,
                    lam * ((1.0 - mu) * s.s1 + mu / k),
                )
            }
            WeightDynamics::Uniform => {
                let p = removal_marginals(edges);
                let expected_next: f64 = edges
                    .iter()
                    .zip(&p)
                    .map(|(e, pr)| pr * forecast[e.source.index()])
                    .sum();
                ops += edges.len();
                let c = lam / k;
                (
                    -(2.0 - lam) * c * s.expected_removed - c * expected_next - pen,
                    (2.0 - lam) * c,
                    c,
                )
            }
        };
        let mut ctx = Self::with(ScoreKind::Lookahead, state, v, base, coef_now, coef_next, ops);
        ctx.forecast = Some(forecast);
        Ok(ctx)
    }

    /// Context for the linearized gain `∇̃_{v,u} − Σ_r P[(r,v) ∈ R] ∇̃_{v,r}`.
    pub fn linearized(state: &NetworkState, v: NodeId, gradient: &'a Array2<f64>) -> Result<Self> {
        let edges = state.in_edges(v);
        if edges.is_empty() {
            return Err(Error::Contract(format!("node {v} has no in-edges to displace")));
        }
        let p = removal_marginals(edges);
        let row = gradient.row(v.index());
        let expected: f64 = edges.iter().zip(&p).map(|(e, pr)| pr * row[e.source.index()]).sum();
        let mut ctx = Self::with(ScoreKind::Linearized, state, v, -expected, 0.0, 0.0, 2 * edges.len());
        ctx.gradient = Some(gradient);
        Ok(ctx)
    }

    fn with(
        kind: ScoreKind,
        state: &NetworkState,
        node: NodeId,
        base: f64,
        coef_now: f64,
        coef_next: f64,
        setup_ops: usize,
    ) -> Self {
        ScoreContext {
            kind,
            node,
            clock: state.clock(),
            base,
            coef_now,
            coef_next,
            forecast: None,
            gradient: None,
            setup_ops,
            evaluations: Cell::new(0),
        }
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    /// Neighbor visits spent building the context.
    pub fn setup_ops(&self) -> usize {
        self.setup_ops
    }

    /// Number of constant-time candidate evaluations so far.
    pub fn evaluations(&self) -> usize {
        self.evaluations.get()
    }

    /// Scores candidate `edge` in O(1). The caller is responsible for the
    /// edge being a candidate.
    pub fn score(&self, state: &NetworkState, edge: Edge) -> Result<f64> {
        if edge.sink != self.node || state.clock() != self.clock {
            return Err(Error::StaleContext {
                ctx_node: self.node,
                ctx_clock: self.clock,
                edge,
                clock: state.clock(),
            });
        }
        self.evaluations.set(self.evaluations.get() + 1);
        let u = edge.source.index();
        Ok(match self.kind {
            ScoreKind::Myopic => self.base + self.coef_now * state.health()[u],
            ScoreKind::Lookahead => {
                let f = self.forecast.expect("lookahead context carries a forecast");
                self.base + self.coef_now * state.health()[u] + self.coef_next * f[u]
            }
            ScoreKind::Linearized => {
                let g = self.gradient.expect("linearized context carries a gradient");
                self.base + g[[self.node.index(), u]]
            }
        })
    }
}

fn expect_kind(ctx: &ScoreContext<'_>, kind: ScoreKind) -> Result<()> {
    if ctx.kind != kind {
        return Err(Error::Contract(format!(
            "{:?} score requested from a {:?} context",
            kind, ctx.kind
        )));
    }
    Ok(())
}

pub fn myopic_score(state: &NetworkState, edge: Edge, ctx: &ScoreContext<'_>) -> Result<f64> {
    expect_kind(ctx, ScoreKind::Myopic)?;
    ctx.score(state, edge)
}

pub fn lookahead_score(state: &NetworkState, edge: Edge, ctx: &ScoreContext<'_>) -> Result<f64> {
    expect_kind(ctx, ScoreKind::Lookahead)?;
    ctx.score(state, edge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::no_action_forecast;
    use crate::model::InEdge;
    use crate::oracle;

    /// Target 0 with in-edges from the given (source health, weight) pairs,
    /// plus healthy mentor `m` with health `xu`.
    fn target_with(neigh: &[(f64, f64)], lambda: f64, xu: f64, clock: u32) -> NetworkState {
        let k = neigh.len();
        let n = k + 2;
        let m = n - 1;
        let mut in_edges: Vec<Vec<InEdge>> = (0..n)
            .map(|v| vec![InEdge::new(if v == m { 1u32 } else { m as u32 }, 1.0)])
            .collect();
        in_edges[0] = neigh
            .iter()
            .enumerate()
            .map(|(i, &(_, w))| InEdge::new((i + 1) as u32, w))
            .collect();
        let mut health = vec![0.0; n];
        for (i, &(x, _)) in neigh.iter().enumerate() {
            health[i + 1] = x;
        }
        health[0] = 0.2;
        health[m] = xu;
        let mut lam = vec![0.5; n];
        lam[0] = lambda;
        NetworkState::new(in_edges, health, lam, [NodeId(0)], [NodeId::from(m)], clock).unwrap()
    }

    fn mentor_edge(s: &NetworkState) -> Edge {
        Edge::new(s.healthy()[0], NodeId(0))
    }

    #[test]
    fn equal_weight_closed_form_in_simplified_environment() {
        let s = target_with(&[(0.2, 0.5), (0.4, 0.5)], 1.0, 1.0, 1);
        let params = ModelParams {
            alpha: 0.0,
            weight_dynamics: WeightDynamics::Uniform,
            ..ModelParams::default()
        };
        let ctx = ScoreContext::myopic(&s, NodeId(0), &params).unwrap();
        let got = myopic_score(&s, mentor_edge(&s), &ctx).unwrap();
        assert!((got - 0.35).abs() < 1e-15);
        let oracle = oracle::exact_score(&s, mentor_edge(&s), 1, &params).unwrap();
        assert!((oracle - 0.35).abs() < 1e-12);
    }

    #[test]
    fn indifference_point_scores_minus_penalty() {
        // x_u equal to the expected displaced neighbor health → only the penalty remains
        let params = ModelParams {
            weight_dynamics: WeightDynamics::Uniform,
            alpha: 0.05,
            beta: 1.5,
            ..ModelParams::default()
        };
        let s = target_with(&[(0.2, 1.0 / 3.0), (0.5, 1.0 / 3.0), (0.8, 1.0 / 3.0)], 0.7, 0.5, 2);
        let ctx = ScoreContext::myopic(&s, NodeId(0), &params).unwrap();
        let got = myopic_score(&s, mentor_edge(&s), &ctx).unwrap();
        let pen = 0.05 * 1.5f64.powi(2);
        assert!((got + pen).abs() < 1e-12);
        let oracle = oracle::exact_score(&s, mentor_edge(&s), 1, &params).unwrap();
        assert!((oracle + pen).abs() < 1e-12);
    }

    #[test]
    fn adaptive_myopic_matches_enumeration() {
        let params = ModelParams {
            mu: 0.3,
            alpha: 0.02,
            beta: 1.2,
            ..ModelParams::default()
        };
        let s = target_with(&[(0.9, 0.5), (0.1, 0.3), (0.6, 0.2)], 0.8, 0.7, 3);
        let ctx = ScoreContext::myopic(&s, NodeId(0), &params).unwrap();
        let got = myopic_score(&s, mentor_edge(&s), &ctx).unwrap();
        let want = oracle::exact_score(&s, mentor_edge(&s), 1, &params).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn unscaled_normalizer_disagrees_with_enumeration() {
        // Using Γ̃ = 1 − w + 1/k² inside the same closed form is off by k² in the sums.
        let params = ModelParams {
            mu: 0.3,
            alpha: 0.0,
            ..ModelParams::default()
        };
        let s = target_with(&[(0.9, 0.5), (0.1, 0.3), (0.6, 0.2)], 0.8, 0.7, 1);
        let edges = s.in_edges(NodeId(0));
        let x = s.health();
        let k = 3.0f64;
        let p = removal_marginals(edges);
        let delta: f64 = edges.iter().map(|e| e.weight * x[e.source.index()]).sum();
        let psi: f64 = edges
            .iter()
            .map(|e| ((1.0 - params.mu) * e.weight + params.mu / k) * x[e.source.index()])
            .sum();
        let lam = 0.8;
        let mut unscaled = -lam * psi;
        for (e, pr) in edges.iter().zip(&p) {
            let g = 1.0 - e.weight + 1.0 / (k * k);
            unscaled += lam * pr / g * (0.7 + k * k * (delta - e.weight * x[e.source.index()]));
        }
        let want = oracle::exact_score(&s, mentor_edge(&s), 1, &params).unwrap();
        assert!((unscaled - want).abs() > 1e-3);
    }

    #[test]
    fn zero_susceptibility_leaves_only_penalty() {
        let params = ModelParams {
            mu: 0.2,
            alpha: 0.03,
            beta: 1.3,
            ..ModelParams::default()
        };
        let s = target_with(&[(0.9, 0.6), (0.1, 0.4)], 0.0, 0.95, 2);
        let pen = 0.03 * 1.3f64.powi(2);
        let ctx = ScoreContext::myopic(&s, NodeId(0), &params).unwrap();
        assert!((myopic_score(&s, mentor_edge(&s), &ctx).unwrap() + pen).abs() < 1e-15);
        let f = no_action_forecast(&s, &params);
        let ctx = ScoreContext::lookahead(&s, NodeId(0), &params, &f).unwrap();
        assert!((lookahead_score(&s, mentor_edge(&s), &ctx).unwrap() + pen).abs() < 1e-15);
    }

    #[test]
    fn adaptive_lookahead_matches_two_step_enumeration() {
        let params = ModelParams {
            mu: 0.25,
            alpha: 0.01,
            beta: 1.1,
            ..ModelParams::default()
        };
        let s = target_with(&[(0.9, 0.1), (0.1, 0.6), (0.6, 0.2), (0.3, 0.1)], 0.6, 0.8, 2);
        let f = no_action_forecast(&s, &params);
        let ctx = ScoreContext::lookahead(&s, NodeId(0), &params, &f).unwrap();
        let got = lookahead_score(&s, mentor_edge(&s), &ctx).unwrap();
        let want = oracle::exact_score(&s, mentor_edge(&s), 2, &params).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn simplified_lookahead_carries_two_minus_lambda_factor() {
        // Static neighborhood (λ = 0 for every other node) isolates the (2−λ)λ/k factor.
        let params = ModelParams {
            alpha: 0.0,
            weight_dynamics: WeightDynamics::Uniform,
            ..ModelParams::default()
        };
        let mut s = target_with(&[(0.2, 0.5), (0.4, 0.5)], 0.6, 0.9, 1);
        for (i, l) in s.susceptibility.iter_mut().enumerate() {
            if i != 0 {
                *l = 0.0;
            }
        }
        let f = no_action_forecast(&s, &params);
        let ctx = ScoreContext::lookahead(&s, NodeId(0), &params, &f).unwrap();
        let got = lookahead_score(&s, mentor_edge(&s), &ctx).unwrap();
        let lam = 0.6;
        let gap = 0.9 - 0.3;
        let expected = (2.0 - lam) * lam / 2.0 * gap + lam / 2.0 * gap;
        assert!((got - expected).abs() < 1e-12);
        let want = oracle::exact_score(&s, mentor_edge(&s), 2, &params).unwrap();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn stale_context_is_rejected() {
        let params = ModelParams::default();
        let s = target_with(&[(0.2, 0.5), (0.4, 0.5)], 0.5, 0.9, 1);
        let ctx = ScoreContext::myopic(&s, NodeId(0), &params).unwrap();
        let later = s.clone().with_clock(2);
        assert!(matches!(
            myopic_score(&later, mentor_edge(&s), &ctx),
            Err(Error::StaleContext { .. })
        ));
        let f = no_action_forecast(&s, &params);
        let la = ScoreContext::lookahead(&s, NodeId(0), &params, &f).unwrap();
        assert!(myopic_score(&s, mentor_edge(&s), &la).is_err());
    }

    #[test]
    fn scoring_cost_is_linear_after_setup() {
        let params = ModelParams::default();
        let s = target_with(&[(0.2, 0.25), (0.4, 0.25), (0.6, 0.25), (0.7, 0.25)], 0.5, 0.9, 1);
        let ctx = ScoreContext::myopic(&s, NodeId(0), &params).unwrap();
        let setup = ctx.setup_ops();
        assert!(setup <= 2 * s.in_degree(NodeId(0)));
        for _ in 0..50 {
            myopic_score(&s, mentor_edge(&s), &ctx).unwrap();
        }
        assert_eq!(ctx.evaluations(), 50);
        assert_eq!(ctx.setup_ops(), setup);
    }
}
