//! Terminal and cumulative objectives with the geometric edge-addition penalty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelParams, NodeId, ObjectiveKind, PenaltyAtZero};

/// Per-edge penalty for a decision taken at clock `t`: `αβ^t` for `t ≥ 1`.
/// A decision at `t = 0` is charged `αβ` or `α` depending on
/// [`ModelParams::penalty_at_zero`].
pub fn penalty_weight(t: u32, params: &ModelParams) -> f64 {
    if t == 0 {
        match params.penalty_at_zero {
            PenaltyAtZero::Alpha => params.alpha,
            PenaltyAtZero::AlphaBeta => params.alpha * params.beta,
        }
    } else {
        params.alpha * params.beta.powi(t as i32)
    }
}

pub fn penalty(t: u32, count: usize, params: &ModelParams) -> f64 {
    if count == 0 {
        0.0
    } else {
        penalty_weight(t, params) * count as f64
    }
}

/// Health snapshots `x(0..=T)` and decision sizes `|A_0..A_{T-1}|` of one rollout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub params: ModelParams,
    pub target: Vec<NodeId>,
    pub health: Vec<Vec<f64>>,
    pub decision_sizes: Vec<usize>,
}

impl TrajectoryLog {
    pub fn new(params: ModelParams, target: Vec<NodeId>, initial_health: Vec<f64>) -> Self {
        TrajectoryLog {
            params,
            target,
            health: vec![initial_health],
            decision_sizes: Vec::new(),
        }
    }

    pub fn push_step(&mut self, decision_size: usize, health: Vec<f64>) {
        self.decision_sizes.push(decision_size);
        self.health.push(health);
    }

    pub fn is_complete(&self) -> bool {
        let t = self.params.horizon as usize;
        self.health.len() == t + 1 && self.decision_sizes.len() == t
    }

    fn target_sum(&self, t: usize) -> f64 {
        let x = &self.health[t];
        self.target.iter().map(|v| x[v.index()]).sum()
    }

    /// Health term of the configured objective (penalty excluded).
    pub fn health_term(&self) -> Result<f64> {
        self.check()?;
        let t_max = self.params.horizon as usize;
        Ok(match self.params.objective {
            ObjectiveKind::Terminal => self.target_sum(t_max),
            ObjectiveKind::Cumulative => (1..=t_max).map(|t| self.target_sum(t)).sum(),
        })
    }

    pub fn total_penalty(&self) -> f64 {
        self.decision_sizes
            .iter()
            .enumerate()
            .map(|(t, &c)| penalty(t as u32, c, &self.params))
            .sum()
    }

    fn check(&self) -> Result<()> {
        if !self.is_complete() {
            return Err(Error::Contract(format!(
                "trajectory log incomplete: {} snapshots and {} decisions for horizon {}",
                self.health.len(),
                self.decision_sizes.len(),
                self.params.horizon
            )));
        }
        Ok(())
    }
}

/// Objective value of a complete rollout. `x(0)` never enters either objective.
pub fn evaluate_objective(log: &TrajectoryLog) -> Result<f64> {
    Ok(log.health_term()? - log.total_penalty())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(alpha: f64, beta: f64) -> ModelParams {
        ModelParams {
            alpha,
            beta,
            ..ModelParams::default()
        }
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(penalty(3, 0, &p(0.1, 2.0)), 0.0);
        assert!((penalty(1, 2, &p(0.1, 2.0)) - 0.4).abs() < 1e-15);
        assert!((penalty(2, 2, &p(0.1, 2.0)) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn penalty_at_zero_switch() {
        let mut params = p(0.1, 2.0);
        assert!((penalty(0, 1, &params) - 0.2).abs() < 1e-15);
        params.penalty_at_zero = PenaltyAtZero::Alpha;
        assert!((penalty(0, 1, &params) - 0.1).abs() < 1e-15);
    }

    fn constant_log(c: f64, horizon: u32, kind: ObjectiveKind) -> TrajectoryLog {
        let params = ModelParams {
            horizon,
            objective: kind,
            ..ModelParams::default()
        };
        let mut log = TrajectoryLog::new(params, vec![NodeId(0), NodeId(2)], vec![c; 3]);
        for _ in 0..horizon {
            log.push_step(0, vec![c; 3]);
        }
        log
    }

    #[test]
    fn single_step_objectives_coincide() {
        let a = evaluate_objective(&constant_log(0.3, 1, ObjectiveKind::Terminal)).unwrap();
        let b = evaluate_objective(&constant_log(0.3, 1, ObjectiveKind::Cumulative)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_health_closed_forms() {
        let t = evaluate_objective(&constant_log(0.25, 6, ObjectiveKind::Terminal)).unwrap();
        let c = evaluate_objective(&constant_log(0.25, 6, ObjectiveKind::Cumulative)).unwrap();
        assert!((t - 2.0 * 0.25).abs() < 1e-15);
        assert!((c - 2.0 * 0.25 * 6.0).abs() < 1e-15);
    }

    #[test]
    fn incomplete_log_is_an_error() {
        let mut log = constant_log(0.5, 4, ObjectiveKind::Cumulative);
        log.health.pop();
        assert!(evaluate_objective(&log).is_err());
    }

    fn arb_log() -> impl Strategy<Value = TrajectoryLog> {
        (1u32..6, prop::bool::ANY, 0.0f64..0.5, 1.01f64..2.0).prop_flat_map(|(h, term, alpha, beta)| {
            let n = 4usize;
            (
                prop::collection::vec(prop::collection::vec(0.0f64..=1.0, n), (h + 1) as usize),
                prop::collection::vec(0usize..5, h as usize),
            )
                .prop_map(move |(health, sizes)| TrajectoryLog {
                    params: ModelParams {
                        horizon: h,
                        alpha,
                        beta,
                        objective: if term { ObjectiveKind::Terminal } else { ObjectiveKind::Cumulative },
                        ..ModelParams::default()
                    },
                    target: vec![NodeId(1), NodeId(3)],
                    health,
                    decision_sizes: sizes,
                })
        })
    }

    proptest! {
        #[test]
        fn penalty_separates(log in arb_log()) {
            let with = evaluate_objective(&log).unwrap();
            let mut zeroed = log.clone();
            zeroed.decision_sizes.iter_mut().for_each(|c| *c = 0);
            let without = evaluate_objective(&zeroed).unwrap();
            let pen: f64 = log.decision_sizes.iter().enumerate()
                .map(|(t, &c)| penalty(t as u32, c, &log.params)).sum();
            prop_assert!((with - (without - pen)).abs() < 1e-12);
            // independent summation of the health term
            let t_max = log.params.horizon as usize;
            let mut health = 0.0;
            for t in 1..=t_max {
                if log.params.objective == ObjectiveKind::Cumulative || t == t_max {
                    health += log.health[t][1] + log.health[t][3];
                }
            }
            prop_assert!((with - (health - pen)).abs() < 1e-12);
        }

        #[test]
        fn raising_target_health_never_hurts(log in arb_log(), t_pick in 1usize..6, bump in 0.0f64..0.5) {
            let t_max = log.params.horizon as usize;
            let t = if log.params.objective == ObjectiveKind::Terminal { t_max } else { 1 + (t_pick - 1) % t_max };
            let before = evaluate_objective(&log).unwrap();
            let mut raised = log.clone();
            raised.health[t][3] = (raised.health[t][3] + bump).min(1.0);
            prop_assert!(evaluate_objective(&raised).unwrap() >= before);
        }
    }
}
