//! Randomized correctness suites shared by the `validate` command and the
//! acceptance run. Each suite draws its own instances from a seed and
//! compares production code against the enumeration oracle, finite
//! differences or direct invariant checks.

use std::time::{Duration, Instant};

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::{removal_marginals, sample_removals, step};
use crate::error::Result;
use crate::gradient::{health_gradient, omega, power_apply, PerturbationMatrix};
use crate::harness::derive_seed;
use crate::model::{
    candidate_edges, Edge, EdgeAdditionSet, InEdge, ModelParams, NetworkState, NodeId,
    PenaltyAtZero, WeightDynamics, WEIGHT_SUM_TOL,
};
use crate::objectives::penalty_weight;
use crate::oracle::{brute_force_policy, exact_node_gain, exact_score, pairwise_value, removal_distribution_exact};
use crate::policies::{heuristic_select, random_policy, ScoreContext, Scorer};

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub checked: usize,
    pub detail: String,
    #[serde(serialize_with = "ser_secs")]
    pub elapsed: Duration,
}

fn ser_secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValidationOptions {
    pub seed: u64,
    pub oracle_instances: usize,
    pub equivalence_instances: usize,
    pub gradient_instances: usize,
    pub gradient_entries: usize,
    pub transitions: usize,
    pub chi2_samples: usize,
    pub pairwise_instances: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            seed: 0,
            oracle_instances: 1000,
            equivalence_instances: 500,
            gradient_instances: 50,
            gradient_entries: 20,
            transitions: 10_000,
            chi2_samples: 100_000,
            pairwise_instances: 200,
        }
    }
}

fn rng_for(opts: &ValidationOptions, suite: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(&[opts.seed], suite))
}

/// Shape of a random small instance.
#[derive(Clone, Copy, Debug)]
pub struct InstanceShape {
    pub nodes: (usize, usize),
    pub max_in_degree: usize,
    pub targets: (usize, usize),
    pub healthy: (usize, usize),
    pub equal_weights: bool,
}

/// Random state with distinct role sets and in-degrees in `1..=max_in_degree`.
pub fn random_instance<R: Rng + ?Sized>(shape: InstanceShape, rng: &mut R) -> NetworkState {
    let n = rng.gen_range(shape.nodes.0..=shape.nodes.1);
    let mut in_edges = Vec::with_capacity(n);
    for v in 0..n {
        let mut srcs: Vec<usize> = (0..n).filter(|&u| u != v).collect();
        srcs.shuffle(rng);
        srcs.truncate(rng.gen_range(1..=shape.max_in_degree.min(n - 1)));
        srcs.sort_unstable();
        let raw: Vec<f64> = if shape.equal_weights {
            vec![1.0; srcs.len()]
        } else {
            match rng.gen_range(0..6) {
                // occasionally a dominant edge, occasionally exactly equal weights
                0 => srcs.iter().enumerate().map(|(i, _)| if i == 0 { 50.0 } else { rng.gen_range(0.01..1.0) }).collect(),
                1 => vec![1.0; srcs.len()],
                _ => srcs.iter().map(|_| rng.gen_range(0.01..1.0)).collect(),
            }
        };
        let total: f64 = raw.iter().sum();
        in_edges.push(srcs.into_iter().zip(raw).map(|(u, w)| InEdge::new(u as u32, w / total)).collect());
    }
    let mut ids: Vec<usize> = (0..n).collect();
    ids.shuffle(rng);
    let ns = rng.gen_range(shape.targets.0..=shape.targets.1).min(n - 1);
    let nh = rng.gen_range(shape.healthy.0..=shape.healthy.1).min(n - ns);
    NetworkState::new(
        in_edges,
        (0..n).map(|_| rng.gen()).collect(),
        (0..n).map(|_| rng.gen()).collect(),
        ids[..ns].iter().map(|&v| NodeId::from(v)),
        ids[ns..ns + nh].iter().map(|&v| NodeId::from(v)),
        rng.gen_range(0..5),
    )
    .expect("generated instance is valid")
}

/// Random model parameters with the given horizon and weight dynamics.
pub fn random_params<R: Rng + ?Sized>(rng: &mut R, horizon: u32, dynamics: WeightDynamics) -> ModelParams {
    ModelParams {
        mu: rng.gen_range(0.01..0.99),
        alpha: rng.gen_range(0.0..0.2),
        beta: rng.gen_range(1.01..2.5),
        horizon,
        weight_dynamics: dynamics,
        penalty_at_zero: if rng.gen_bool(0.5) { PenaltyAtZero::AlphaBeta } else { PenaltyAtZero::Alpha },
        ..ModelParams::default()
    }
}

fn finish(name: &'static str, started: Instant, checked: usize, failures: Vec<String>, extra: String) -> SuiteReport {
    let passed = failures.is_empty() && checked > 0;
    let mut detail = extra;
    if !failures.is_empty() {
        detail = format!("{} failure(s); first: {}", failures.len(), failures[0]);
    }
    SuiteReport { name, passed, checked, detail, elapsed: started.elapsed() }
}

pub const SCORE_TOL: f64 = 1e-9;

/// Closed-form single-edge scores against exhaustive enumeration.
pub fn oracle_gate(opts: &ValidationOptions) -> Result<SuiteReport> {
    let started = Instant::now();
    let mut rng = rng_for(opts, "oracle_gate");
    let shape = InstanceShape { nodes: (7, 12), max_in_degree: 5, targets: (1, 3), healthy: (1, 4), equal_weights: false };
    let mut failures = Vec::new();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < opts.oracle_instances {
        let dynamics = if rng.gen_bool(0.8) { WeightDynamics::Adaptive } else { WeightDynamics::Uniform };
        let mut s = random_instance(shape, &mut rng);
        if dynamics == WeightDynamics::Uniform {
            s = s.with_uniform_weights();
        }
        let p = random_params(&mut rng, 8, dynamics);
        let v = *s.targets().choose(&mut rng).expect("has targets");
        let cands = candidate_edges(&s, v)?;
        let Some(&e) = cands.choose(&mut rng) else { continue };
        let forecast = crate::dynamics::no_action_forecast(&s, &p);
        let my = ScoreContext::myopic(&s, v, &p)?.score(&s, e)?;
        let la = ScoreContext::lookahead(&s, v, &p, &forecast)?.score(&s, e)?;
        let my_true = exact_score(&s, e, 1, &p)?;
        let la_true = exact_score(&s, e, 2, &p)?;
        for (what, got, want) in [("myopic", my, my_true), ("lookahead", la, la_true)] {
            let err = (got - want).abs();
            worst = worst.max(err);
            if err.is_nan() || err > SCORE_TOL {
                failures.push(format!("{what} score {got} vs oracle {want} for {e} (k={})", s.in_degree(v)));
            }
        }
        checked += 1;
    }
    Ok(finish("oracle_gate", started, checked, failures, format!("max abs error {worst:.2e}")))
}

/// Heuristic selection against the exact per-node argmax in the equal-weight environment.
pub fn heuristic_equivalence(opts: &ValidationOptions) -> Result<SuiteReport> {
    let started = Instant::now();
    let mut rng = rng_for(opts, "heuristic_equivalence");
    let shape = InstanceShape { nodes: (6, 10), max_in_degree: 3, targets: (1, 2), healthy: (1, 6), equal_weights: true };
    let mut failures = Vec::new();
    let mut unique = [0usize; 2];
    let mut tied = [0usize; 2];
    let mut attempts = 0;
    while unique.iter().any(|&u| u < opts.equivalence_instances) && attempts < 50 * opts.equivalence_instances.max(1) {
        attempts += 1;
        let mut s = random_instance(shape, &mut rng);
        if s.healthy().len() >= 2 && rng.gen_bool(0.3) {
            // exact tie between two mentors
            let (a, b) = (s.healthy()[0].index(), s.healthy()[1].index());
            s.health[b] = s.health[a];
        }
        if s.targets().iter().any(|&v| candidate_edges(&s, v).map_or(true, |c| c.len() > 6)) {
            continue;
        }
        let p = random_params(&mut rng, 8, WeightDynamics::Uniform);
        for (i, (depth, scorer)) in [(1, Scorer::Myopic), (2, Scorer::Lookahead)].into_iter().enumerate() {
            let brute = brute_force_policy(&s, depth, &p)?;
            let heur = heuristic_select(&s, &p, scorer)?.edges;
            if brute.unique {
                unique[i] += 1;
                if heur != brute.decision {
                    failures.push(format!("depth {depth}: heuristic {heur:?} vs exact {:?}", brute.decision));
                }
            } else {
                tied[i] += 1;
                let mut achieved = 0.0;
                for &v in s.targets() {
                    achieved += exact_node_gain(&s, v, &heur, depth, &p)?;
                }
                if (achieved - brute.value).abs() > 1e-12 {
                    failures.push(format!("depth {depth}: tied argmax but value {achieved} vs {}", brute.value));
                }
            }
        }
    }
    let checked = unique[0].min(unique[1]);
    if checked < opts.equivalence_instances {
        failures.push(format!("only {checked} unique instances found"));
    }
    Ok(finish(
        "heuristic_equivalence",
        started,
        checked,
        failures,
        format!(
            "unique argmax: {} myopic, {} lookahead; ties: {} / {}",
            unique[0], unique[1], tied[0], tied[1]
        ),
    ))
}

pub const GRADIENT_TOL: f64 = 1e-5;

/// Analytic terminal-value gradient against central differences of the health term.
pub fn gradient_check(opts: &ValidationOptions) -> Result<SuiteReport> {
    let started = Instant::now();
    let mut rng = rng_for(opts, "gradient_check");
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..opts.gradient_instances {
        let shape = InstanceShape { nodes: (5, 30), max_in_degree: 4, targets: (1, 8), healthy: (1, 8), equal_weights: false };
        let s = random_instance(shape, &mut rng);
        let horizon = rng.gen_range(1..=8);
        let p = ModelParams { alpha: 0.0, horizon, ..ModelParams::default() };
        // expand around either Y = 0 or a sampled decision
        let y = if rng.gen_bool(0.5) {
            PerturbationMatrix::zero()
        } else {
            let a = random_policy(&s, &mut rng);
            let r = sample_removals(&s, &a, &mut rng)?;
            PerturbationMatrix::from_decision(&s, &a, &r)
        };
        let g = health_gradient(&y, &s, &p);
        let n = s.node_count();
        let x0 = Array1::from(s.health().to_vec());
        let value = |extra: (usize, usize, f64)| {
            let mut om = omega(&s, &y);
            om[[extra.0, extra.1]] += s.susceptibility()[extra.0] * extra.2;
            let xt = power_apply(&om, horizon, &x0);
            s.targets().iter().map(|v| xt[v.index()]).sum::<f64>()
        };
        let h = 1e-4;
        for _ in 0..opts.gradient_entries {
            let i = rng.gen_range(0..n);
            let j = (i + rng.gen_range(1..n)) % n;
            // one unit of the indicator moves Y by 1/k_i
            let step = h / s.in_degree(NodeId::from(i)) as f64;
            let fd = (value((i, j, step)) - value((i, j, -step))) / (2.0 * h);
            let an = g[[i, j]];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            if rel.is_nan() || rel > GRADIENT_TOL {
                failures.push(format!("entry ({i},{j}) T={horizon}: analytic {an} vs fd {fd}"));
            }
            checked += 1;
        }
    }
    Ok(finish("gradient_check", started, checked, failures, format!("max relative error {worst:.2e}")))
}

/// Per-transition invariants and a χ² test of sampled removals against the exact law.
pub fn dynamics_invariants(opts: &ValidationOptions) -> Result<SuiteReport> {
    let started = Instant::now();
    let mut rng = rng_for(opts, "dynamics_invariants");
    let mut failures = Vec::new();
    let shape = InstanceShape { nodes: (4, 25), max_in_degree: 6, targets: (1, 8), healthy: (1, 8), equal_weights: false };
    let mut transitions = 0;
    while transitions < opts.transitions {
        let dynamics = if rng.gen_bool(0.8) { WeightDynamics::Adaptive } else { WeightDynamics::Uniform };
        let mut s = random_instance(shape, &mut rng);
        if dynamics == WeightDynamics::Uniform {
            s = s.with_uniform_weights();
        }
        let p = random_params(&mut rng, 8, dynamics);
        for _ in 0..5 {
            let a = random_policy(&s, &mut rng);
            let (next, rec) = step(&s, &a, &p, &mut rng)?;
            transitions += 1;
            for v in 0..s.node_count() {
                let id = NodeId::from(v);
                if next.in_degree(id) != s.in_degree(id) {
                    failures.push(format!("in-degree of {id} changed"));
                }
                let sum: f64 = next.in_edges(id).iter().map(|e| e.weight).sum();
                if next.in_degree(id) > 0 && (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                    failures.push(format!("weights into {id} sum to {sum}"));
                }
                let x = next.health()[v];
                if !(0.0..=1.0).contains(&x) {
                    failures.push(format!("health {x} of {id} out of range"));
                }
            }
            if rec.removals.len() != a.len() {
                failures.push("removal count differs from addition count".into());
            }
            s = next;
        }
    }
    // χ² on a few fixed decisions with one and several additions per node
    let mut chi_detail = Vec::new();
    for (weights, adds) in [
        (vec![0.5, 0.3, 0.2], 1usize),
        (vec![0.4, 0.3, 0.2, 0.1], 2),
        (vec![0.05, 0.15, 0.2, 0.25, 0.35], 3),
    ] {
        let k = weights.len();
        let n = k + adds + 1;
        let mut in_edges: Vec<Vec<InEdge>> = (0..n).map(|v| vec![InEdge::new(if v == 1 { 2u32 } else { 1u32 }, 1.0)]).collect();
        in_edges[0] = weights.iter().enumerate().map(|(i, &w)| InEdge::new((i + 1 + adds) as u32, w)).collect();
        let mentors: Vec<NodeId> = (1..=adds).map(NodeId::from).collect();
        let s = NetworkState::new(in_edges, vec![0.5; n], vec![0.5; n], [NodeId(0)], mentors.clone(), 0)?;
        let a: EdgeAdditionSet = mentors.iter().map(|&m| Edge::new(m, NodeId(0))).collect();
        let exact = removal_distribution_exact(&s, &a)?;
        let mut counts = vec![0usize; exact.outcomes.len()];
        for _ in 0..opts.chi2_samples {
            let r = sample_removals(&s, &a, &mut rng)?;
            match exact.outcomes.iter().position(|(o, _)| *o == r) {
                Some(i) => counts[i] += 1,
                None => failures.push(format!("sampled removal set {r:?} has zero exact probability")),
            }
        }
        let total = opts.chi2_samples as f64;
        let chi2: f64 = exact
            .outcomes
            .iter()
            .zip(&counts)
            .map(|((_, p), &c)| (c as f64 - total * p).powi(2) / (total * p))
            .sum();
        let df = (exact.outcomes.len() - 1) as f64;
        let bound = df + 3.0 * (2.0 * df).sqrt();
        chi_detail.push(format!("χ²={chi2:.2} (df {df}, bound {bound:.2})"));
        if chi2 > bound {
            failures.push(format!("removal frequencies fail χ²: {chi2:.2} > {bound:.2}"));
        }
        // single-addition marginals agree with the closed form
        if adds == 1 {
            let m = removal_marginals(s.in_edges(NodeId(0)));
            for ((_, p), q) in exact.outcomes.iter().zip(m) {
                if (p - q).abs() > 1e-12 {
                    failures.push(format!("marginal {q} vs enumerated {p}"));
                }
            }
        }
    }
    Ok(finish(
        "dynamics_invariants",
        started,
        transitions,
        failures,
        format!("{transitions} transitions; {}", chi_detail.join(", ")),
    ))
}

/// Which sufficient condition of the lookahead-dominance result an instance meets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DominanceCondition {
    /// The myopic heuristic adds nothing into `v` at `t+1` in every outcome.
    QuietNextStep,
    /// It adds nothing at `t`, and every mentor it adds at `t+1` clears the health threshold.
    QuietNowHealthyLater,
}

fn only_into(set: EdgeAdditionSet, v: NodeId) -> EdgeAdditionSet {
    set.restricted_to_sink(v)
}

/// Condition met by target `v` of a single-target equal-weight instance, if any.
pub fn dominance_condition(state: &NetworkState, v: NodeId, params: &ModelParams) -> Result<Option<DominanceCondition>> {
    let myopic_now = only_into(heuristic_select(state, params, Scorer::Myopic)?.edges, v);
    let first = removal_distribution_exact(state, &myopic_now)?;
    let mut quiet_next = true;
    let mut next_mentors: Vec<NodeId> = Vec::new();
    for (r, _) in &first.outcomes {
        let s1 = crate::dynamics::apply_transition(state, &myopic_now, r, params)?;
        let next = only_into(heuristic_select(&s1, params, Scorer::Myopic)?.edges, v);
        if !next.is_empty() {
            quiet_next = false;
            next_mentors.extend(next.sources_into(v));
        }
    }
    if quiet_next {
        return Ok(Some(DominanceCondition::QuietNextStep));
    }
    if myopic_now.is_empty() {
        let k = state.in_degree(v) as f64;
        let lam = state.susceptibility()[v.index()];
        let x = state.health();
        let mean: f64 = state.in_edges(v).iter().map(|e| x[e.source.index()]).sum::<f64>() / k;
        let t = state.clock();
        // growth of the per-edge charge from t to t+1; αβ^t(β−1) under a pure geometric schedule
        let growth = penalty_weight(t + 1, params) - penalty_weight(t, params);
        let slack = growth * k / ((2.0 - lam) * lam);
        if lam > 0.0 && next_mentors.iter().all(|w| x[w.index()] >= mean - slack) {
            return Ok(Some(DominanceCondition::QuietNowHealthyLater));
        }
    }
    Ok(None)
}

/// Exact two-step values of both plans for target `v`: (lookahead then nothing, myopic twice).
pub fn two_step_values(state: &NetworkState, v: NodeId, params: &ModelParams) -> Result<(f64, f64)> {
    let la = only_into(heuristic_select(state, params, Scorer::Lookahead)?.edges, v);
    let my = only_into(heuristic_select(state, params, Scorer::Myopic)?.edges, v);
    let look = pairwise_value(state, v, &la, |_| Ok(EdgeAdditionSet::new()), params)?;
    let myo = pairwise_value(state, v, &my, |s1| heuristic_select(s1, params, Scorer::Myopic).map(|s| s.edges), params)?;
    Ok((look, myo))
}

/// Single-target instance biased toward the two sufficient conditions.
pub fn dominance_instance<R: Rng + ?Sized>(rng: &mut R) -> (NetworkState, ModelParams) {
    let shape = InstanceShape { nodes: (5, 9), max_in_degree: 4, targets: (1, 1), healthy: (1, 4), equal_weights: true };
    let mut s = random_instance(shape, rng);
    let mut p = random_params(rng, 8, WeightDynamics::Uniform);
    if rng.gen_bool(0.5) {
        // declining neighborhood: gains rise after one step while the penalty grows by β
        let v = s.targets()[0];
        let srcs: Vec<usize> = s.in_edges(v).iter().map(|e| e.source.index()).collect();
        for &j in &srcs {
            s.susceptibility[j] = rng.gen_range(0.6..1.0);
            s.health[j] = rng.gen_range(0.5..0.9);
            for e in &s.in_edges[j] {
                if !srcs.contains(&e.source.index()) && !s.is_healthy(e.source) {
                    s.health[e.source.index()] = rng.gen_range(0.0..0.1);
                }
            }
        }
        p.beta = rng.gen_range(1.01..1.2);
        p.alpha = rng.gen_range(0.0..0.05);
    }
    (s, p)
}

/// Lookahead-then-wait dominates myopic-twice whenever a sufficient condition holds.
pub fn lookahead_dominance(opts: &ValidationOptions) -> Result<SuiteReport> {
    let started = Instant::now();
    let mut rng = rng_for(opts, "lookahead_dominance");
    let mut failures = Vec::new();
    let mut by_condition = [0usize; 2];
    let mut attempts = 0;
    while by_condition.iter().sum::<usize>() < opts.pairwise_instances && attempts < 200 * opts.pairwise_instances.max(1) {
        attempts += 1;
        let (s, p) = dominance_instance(&mut rng);
        let v = s.targets()[0];
        if candidate_edges(&s, v)?.is_empty() {
            continue;
        }
        let Some(cond) = dominance_condition(&s, v, &p)? else { continue };
        // keep the two kinds balanced so the second is not swamped
        let idx = cond as usize;
        if by_condition[idx] >= opts.pairwise_instances.div_ceil(2) && by_condition[1 - idx] < opts.pairwise_instances / 2 {
            continue;
        }
        by_condition[idx] += 1;
        let (look, myo) = two_step_values(&s, v, &p)?;
        if look < myo - 1e-12 {
            failures.push(format!("{cond:?}: lookahead {look} < myopic {myo}"));
        }
    }
    let checked = by_condition.iter().sum();
    if checked < opts.pairwise_instances {
        failures.push(format!("only {checked} qualifying instances constructed"));
    }
    Ok(finish(
        "lookahead_dominance",
        started,
        checked,
        failures,
        format!("{} quiet-next-step, {} quiet-now instances", by_condition[0], by_condition[1]),
    ))
}

pub fn run_all(opts: &ValidationOptions) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        oracle_gate(opts)?,
        heuristic_equivalence(opts)?,
        gradient_check(opts)?,
        dynamics_invariants(opts)?,
        lookahead_dominance(opts)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ValidationOptions {
        ValidationOptions {
            seed: 5,
            oracle_instances: 40,
            equivalence_instances: 20,
            gradient_instances: 4,
            gradient_entries: 5,
            transitions: 200,
            chi2_samples: 4000,
            pairwise_instances: 10,
        }
    }

    #[test]
    fn reduced_suites_pass() {
        for r in run_all(&small()).unwrap() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }

    #[test]
    fn random_instances_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for eq in [false, true] {
            let shape = InstanceShape { nodes: (4, 9), max_in_degree: 5, targets: (1, 3), healthy: (0, 3), equal_weights: eq };
            for _ in 0..100 {
                random_instance(shape, &mut rng).check_invariants().unwrap();
            }
        }
    }
}
