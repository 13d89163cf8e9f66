//! Gradient-based one-shot decision for the terminal objective.
//!
//! The policy models health as the linear recursion `X(t+1) = Ω X(t)` with
//! static equal weights `W`, susceptibilities `Λ` and a sparse perturbation `Y`
//! encoding the initial additions and removals:
//! `Ω = Λ(W + Y) + I − Λ`. It repeatedly linearizes the terminal value around
//! a sampled `Y`, picks edges with the heuristic selector, and keeps the best
//! sampled incumbent.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::sample_removals;
use crate::error::{Error, Result};
use crate::model::{EdgeAdditionSet, ModelParams, NetworkState, RemovalSet};
use crate::objectives::penalty_weight;
use crate::policies::{heuristic_select, Scorer};

/// Sparse `Y(A, R)`: `+1/k_v` at `[v,u]` for each added `(u,v)`, `−1/k_v` for each removed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PerturbationMatrix {
    entries: Vec<(usize, usize, f64)>,
}

impl PerturbationMatrix {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_decision(
        state: &NetworkState,
        additions: &EdgeAdditionSet,
        removals: &RemovalSet,
    ) -> Self {
        let mut entries = Vec::with_capacity(additions.len() + removals.len());
        for (set, sign) in [(additions.iter().collect::<Vec<_>>(), 1.0), (removals.iter().collect(), -1.0)] {
            for e in set {
                let k = state.in_degree(e.sink) as f64;
                entries.push((e.sink.index(), e.source.index(), sign / k));
            }
        }
        PerturbationMatrix { entries }
    }

    /// `(row, column, value)` triples, row = sink.
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Dense `Ω(Y)`. Nodes without in-edges keep their health, so their row is `e_v`.
pub fn omega(state: &NetworkState, y: &PerturbationMatrix) -> Array2<f64> {
    let n = state.node_count();
    let lam = state.susceptibility();
    let mut om = Array2::<f64>::zeros((n, n));
    for v in 0..n {
        let edges = state.in_edges(v.into());
        if edges.is_empty() {
            om[[v, v]] = 1.0;
            continue;
        }
        let share = lam[v] / edges.len() as f64;
        for e in edges {
            om[[v, e.source.index()]] += share;
        }
        om[[v, v]] += 1.0 - lam[v];
    }
    for &(i, j, val) in y.entries() {
        om[[i, j]] += lam[i] * val;
    }
    om
}

fn target_indicator(state: &NetworkState) -> Array1<f64> {
    let mut s = Array1::<f64>::zeros(state.node_count());
    for v in state.targets() {
        s[v.index()] = 1.0;
    }
    s
}

/// `Ω^T x` by repeated squaring with a vector accumulator.
pub fn power_apply(om: &Array2<f64>, power: u32, x: &Array1<f64>) -> Array1<f64> {
    let mut acc = x.clone();
    let mut base: Option<Array2<f64>> = None;
    let mut p = power;
    while p > 0 {
        let sq = match base.take() {
            None => om.clone(),
            Some(b) => b.dot(&b),
        };
        if p & 1 == 1 {
            acc = sq.dot(&acc);
        }
        p >>= 1;
        if p > 0 {
            base = Some(sq);
        }
    }
    acc
}

/// `f(Y) = 1_S^⊤ Ω(Y)^T X(0) − c|A_0|`, with `c` the time-0 penalty weight.
pub fn terminal_value(
    y: &PerturbationMatrix,
    additions: usize,
    state: &NetworkState,
    params: &ModelParams,
) -> f64 {
    let om = omega(state, y);
    let x0 = Array1::from(state.health().to_vec());
    let xt = power_apply(&om, params.horizon, &x0);
    target_indicator(state).dot(&xt) - penalty_weight(0, params) * additions as f64
}

/// `df/dΩ = Σ_{r<T} (Ω^r)^⊤ 1_S X(0)^⊤ (Ω^{T−1−r})^⊤`, accumulated as a sum of rank-one terms.
pub fn omega_gradient(om: &Array2<f64>, state: &NetworkState, horizon: u32) -> Array2<f64> {
    let n = state.node_count();
    let t = horizon as usize;
    // left[r] = (Ω^⊤)^r 1_S, right[s] = Ω^s X(0)
    let mut left = Array2::<f64>::zeros((n, t));
    let mut right = Array2::<f64>::zeros((n, t));
    let mut a = target_indicator(state);
    let mut b = Array1::from(state.health().to_vec());
    let omt = om.t();
    for r in 0..t {
        left.column_mut(r).assign(&a);
        right.column_mut(t - 1 - r).assign(&b);
        if r + 1 < t {
            a = omt.dot(&a);
            b = om.dot(&b);
        }
    }
    left.dot(&right.t())
}

/// `df/dY_{ij} = (λ_i/k_i)·df/dΩ_{ij} − 1{Y_{ij}=0}·c`. Diagonal entries are meaningless
/// downstream and left as computed.
pub fn gradient(y: &PerturbationMatrix, state: &NetworkState, params: &ModelParams) -> Array2<f64> {
    let mut g = health_gradient(y, state, params);
    let pen = penalty_weight(0, params);
    if pen != 0.0 {
        g.mapv_inplace(|v| v - pen);
        for &(i, j, val) in y.entries() {
            if val != 0.0 {
                g[[i, j]] += pen;
            }
        }
    }
    g
}

/// Gradient of the health term only.
pub fn health_gradient(y: &PerturbationMatrix, state: &NetworkState, params: &ModelParams) -> Array2<f64> {
    let om = omega(state, y);
    let mut g = omega_gradient(&om, state, params.horizon);
    let lam = state.susceptibility();
    for (i, mut row) in g.axis_iter_mut(Axis(0)).enumerate() {
        let k = state.in_degree(i.into());
        let scale = if k == 0 { 0.0 } else { lam[i] / k as f64 };
        row.mapv_inplace(|v| v * scale);
    }
    g
}

/// Heuristic selection driven by the linearized gain.
pub fn linearized_argmax(
    grad: &Array2<f64>,
    state: &NetworkState,
    params: &ModelParams,
) -> Result<EdgeAdditionSet> {
    Ok(heuristic_select(state, params, Scorer::Linearized(grad))?.edges)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientIteration {
    pub iteration: usize,
    /// Sampled terminal value of the incumbent evaluated in this iteration.
    pub sampled_value: f64,
    pub incumbent_size: usize,
    /// Size of the decision produced from this iteration's gradient.
    pub next_size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientOutcome {
    pub decision: EdgeAdditionSet,
    pub value: f64,
    pub iterations: Vec<GradientIteration>,
}

/// Iterative sampled-gradient search for `A_0`. Returns the incumbent with the
/// best sampled value among the first `l_iters` incumbents.
pub fn run_gradient_policy<R: Rng + ?Sized>(
    state: &NetworkState,
    params: &ModelParams,
    n_samples: usize,
    l_iters: usize,
    rng: &mut R,
) -> Result<GradientOutcome> {
    if n_samples == 0 || l_iters == 0 {
        return Err(Error::InvalidParams(format!(
            "gradient policy needs n ≥ 1 and L ≥ 1 (got n={n_samples}, L={l_iters})"
        )));
    }
    let g0 = health_gradient(&PerturbationMatrix::zero(), state, params);
    let mut incumbent = linearized_argmax(&g0, state, params)?;
    let mut best: Option<(f64, EdgeAdditionSet)> = None;
    let mut iterations = Vec::with_capacity(l_iters);
    let n = state.node_count();
    for l in 1..=l_iters {
        let mut value = 0.0;
        let mut grad = Array2::<f64>::zeros((n, n));
        for _ in 0..n_samples {
            let removals = sample_removals(state, &incumbent, rng)?;
            let y = PerturbationMatrix::from_decision(state, &incumbent, &removals);
            value += terminal_value(&y, incumbent.len(), state, params);
            grad += &gradient(&y, state, params);
        }
        let inv = 1.0 / n_samples as f64;
        value *= inv;
        grad.mapv_inplace(|v| v * inv);
        let next = linearized_argmax(&grad, state, params)?;
        iterations.push(GradientIteration {
            iteration: l,
            sampled_value: value,
            incumbent_size: incumbent.len(),
            next_size: next.len(),
        });
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, incumbent));
        }
        incumbent = next;
    }
    let (value, decision) = best.expect("at least one iteration");
    Ok(GradientOutcome {
        decision,
        value,
        iterations,
    })
}
