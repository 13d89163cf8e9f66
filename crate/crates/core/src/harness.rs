//! Seeded rollouts, parameter sweeps and result files.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Axis, ExperimentConfig};
use crate::dynamics::step;
use crate::error::{Error, Result};
use crate::model::{Edge, ModelParams, NetworkState, ObjectiveKind};
use crate::netgen::{generate_network, DistributionSpec, GenConfig};
use crate::objectives::{evaluate_objective, TrajectoryLog};
use crate::gradient::GradientIteration;
use crate::policies::{Decision, PolicySpec};

pub const RESULTS_HEADER: [&str; 9] = [
    "policy",
    "axis",
    "axis_value",
    "seed",
    "objective_kind",
    "objective",
    "objective_normalized",
    "wall_time_ms",
    "error",
];

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a sequence of words and a label into one stream seed.
pub fn derive_seed(parts: &[u64], label: &str) -> u64 {
    let mut h = 0x6A09_E667_F3BC_C909u64;
    for &p in parts {
        h = splitmix(h ^ p);
    }
    for chunk in label.as_bytes().chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        h = splitmix(h ^ u64::from_le_bytes(word));
    }
    splitmix(h ^ label.len() as u64)
}

/// Independent named streams for one rollout. The network and removal
/// streams do not depend on the policy; the policy stream does.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub network: u64,
    pub removals: u64,
    pub policy: u64,
}

impl RunSeeds {
    pub fn for_cell(base: u64, axis: Axis, value: u64, replicate: u64, policy: &PolicySpec) -> Self {
        let parts = [base, axis as u64, value, replicate];
        RunSeeds {
            network: derive_seed(&parts, "network"),
            removals: derive_seed(&parts, "removals"),
            policy: derive_seed(&parts, &format!("policy:{}", policy.kind.name())),
        }
    }

    pub fn from_base(base: u64, policy: &PolicySpec) -> Self {
        RunSeeds {
            network: derive_seed(&[base], "network"),
            removals: derive_seed(&[base], "removals"),
            policy: derive_seed(&[base], &format!("policy:{}", policy.kind.name())),
        }
    }
}

/// One line of the trajectory stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u32,
    pub policy: String,
    pub edges: Vec<Edge>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient: Option<Vec<GradientIteration>>,
    pub target_health: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub initial: NetworkState,
    pub log: TrajectoryLog,
    pub steps: Vec<StepRecord>,
    pub objective: f64,
    /// Time spent inside the policy, network construction and dynamics excluded.
    pub policy_time: Duration,
}

impl Trajectory {
    pub fn write_jsonl(&self, w: impl Write) -> Result<()> {
        let mut w = BufWriter::new(w);
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Builds the network and rolls the policy forward for the horizon.
pub fn run_trajectory(
    dist: &DistributionSpec,
    gen: &GenConfig,
    params: &ModelParams,
    policy: &PolicySpec,
    seeds: RunSeeds,
) -> Result<Trajectory> {
    let net = generate_network(dist, gen, &mut ChaCha8Rng::seed_from_u64(seeds.network))?;
    run_on_state(net.state, params, policy, seeds)
}

/// Rolls the policy forward from a given initial state.
pub fn run_on_state(
    initial: NetworkState,
    params: &ModelParams,
    policy: &PolicySpec,
    seeds: RunSeeds,
) -> Result<Trajectory> {
    params.validate()?;
    let mut removal_rng = ChaCha8Rng::seed_from_u64(seeds.removals);
    let mut policy_rng = ChaCha8Rng::seed_from_u64(seeds.policy);
    let mut log = TrajectoryLog::new(*params, initial.targets().to_vec(), initial.health().to_vec());
    let mut steps = Vec::with_capacity(params.horizon as usize);
    let mut policy_time = Duration::ZERO;
    let mut state = initial.clone();
    for _ in 0..params.horizon {
        let started = Instant::now();
        let decision: Decision = policy.decide(&state, params, &mut policy_rng)?;
        policy_time += started.elapsed();
        let additions = decision.additions();
        let (next, _) = step(&state, &additions, params, &mut removal_rng)?;
        log.push_step(additions.len(), next.health().to_vec());
        steps.push(StepRecord {
            t: state.clock(),
            policy: policy.kind.name().to_string(),
            edges: decision.edges,
            scores: decision.scores,
            gradient: decision.gradient,
            target_health: next.targets().iter().map(|v| next.health()[v.index()]).sum(),
        });
        state = next;
    }
    let objective = evaluate_objective(&log)?;
    Ok(Trajectory {
        initial,
        log,
        steps,
        objective,
        policy_time,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub policy: String,
    pub axis: Axis,
    pub axis_value: u64,
    pub seed: u64,
    pub objective_kind: ObjectiveKind,
    pub objective: f64,
    pub objective_normalized: f64,
    pub wall_time_ms: f64,
    pub error: Option<String>,
}

impl ResultRow {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

struct Job {
    axis: Axis,
    value: u64,
    replicate: u64,
    policy: PolicySpec,
}

fn run_job(cfg: &ExperimentConfig, dist: &DistributionSpec, job: &Job) -> ResultRow {
    let (gen, model) = cfg.cell(job.axis, job.value);
    let seeds = RunSeeds::for_cell(cfg.experiment.base_seed.unwrap_or(0), job.axis, job.value, job.replicate, &job.policy);
    let mut row = ResultRow {
        policy: job.policy.kind.name().to_string(),
        axis: job.axis,
        axis_value: job.value,
        seed: job.replicate,
        objective_kind: model.objective,
        objective: f64::NAN,
        objective_normalized: f64::NAN,
        wall_time_ms: f64::NAN,
        error: None,
    };
    match run_trajectory(dist, &gen, &model, &job.policy, seeds) {
        Ok(t) => {
            row.objective = t.objective;
            row.objective_normalized = t.objective / job.axis.normalizer(&gen, &model);
            row.wall_time_ms = t.policy_time.as_secs_f64() * 1e3;
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

/// Runs every (sweep value, replicate, policy) cell on the current rayon pool.
/// A failing cell is recorded in its row and does not stop the sweep. Rows
/// come back sorted by sweep order, axis value, policy order and replicate.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    run_experiment_with(cfg, |_| {})
}

/// As [`run_experiment`], calling `progress` after each finished cell.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    progress: impl Fn(&ResultRow) + Sync,
) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let dist = cfg.generator.load_distribution()?;
    let mut jobs = Vec::new();
    for sweep in &cfg.experiment.sweeps {
        for &value in &sweep.values {
            for replicate in 0..cfg.experiment.seeds as u64 {
                for &policy in &cfg.policies {
                    jobs.push(Job { axis: sweep.axis, value, replicate, policy });
                }
            }
        }
    }
    let mut rows: Vec<(usize, ResultRow)> = jobs
        .par_iter()
        .enumerate()
        .map(|(i, job)| {
            let row = run_job(cfg, &dist, job);
            progress(&row);
            (i, row)
        })
        .collect();
    let sweep_pos: BTreeMap<Axis, usize> =
        cfg.experiment.sweeps.iter().enumerate().map(|(i, s)| (s.axis, i)).collect();
    let policy_pos = |name: &str| cfg.policies.iter().position(|p| p.kind.name() == name);
    rows.sort_by_key(|(i, r)| (sweep_pos[&r.axis], r.axis_value, policy_pos(&r.policy), r.seed, *i));
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

pub fn write_results_csv(rows: &[ResultRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let fail = |e: csv::Error| Error::Io(std::io::Error::other(e));
    out.write_record(RESULTS_HEADER).map_err(fail)?;
    for r in rows {
        out.write_record([
            r.policy.clone(),
            r.axis.name().to_string(),
            r.axis_value.to_string(),
            r.seed.to_string(),
            match r.objective_kind {
                ObjectiveKind::Terminal => "terminal".to_string(),
                ObjectiveKind::Cumulative => "cumulative".to_string(),
            },
            r.objective.to_string(),
            r.objective_normalized.to_string(),
            format!("{:.3}", r.wall_time_ms),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(fail)?;
    }
    out.flush()?;
    Ok(())
}

/// Mean and sample standard deviation of the successful rows in one (axis, value, policy) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub axis: Axis,
    pub axis_value: u64,
    pub policy: String,
    pub runs: usize,
    pub failures: usize,
    pub objective_mean: f64,
    pub objective_std: f64,
    pub normalized_mean: f64,
    pub normalized_std: f64,
    pub time_ms_mean: f64,
    pub time_ms_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Per-cell aggregates in the order cells first appear in `rows`.
pub fn summarize(rows: &[ResultRow]) -> Vec<CellSummary> {
    let mut order: Vec<(Axis, u64, String)> = Vec::new();
    let mut groups: BTreeMap<(Axis, u64, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.axis, r.axis_value, r.policy.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let ok: Vec<&&ResultRow> = g.iter().filter(|r| r.ok()).collect();
            let col = |f: fn(&ResultRow) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let (om, os) = mean_std(&col(|r| r.objective));
            let (nm, ns) = mean_std(&col(|r| r.objective_normalized));
            let (tm, ts) = mean_std(&col(|r| r.wall_time_ms));
            CellSummary {
                axis: key.0,
                axis_value: key.1,
                policy: key.2,
                runs: ok.len(),
                failures: g.len() - ok.len(),
                objective_mean: om,
                objective_std: os,
                normalized_mean: nm,
                normalized_std: ns,
                time_ms_mean: tm,
                time_ms_std: ts,
            }
        })
        .collect()
}

/// Writes `results.csv`, `summary.json` and one objective and one timing
/// table per swept axis (`plot_<axis>_objective.tsv`, `plot_<axis>_time.tsv`).
pub fn write_outputs(rows: &[ResultRow], dir: &Path) -> Result<Vec<CellSummary>> {
    fs::create_dir_all(dir)?;
    write_results_csv(rows, File::create(dir.join("results.csv"))?)?;
    let summary = summarize(rows);
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("summary.json"))?), &summary)?;
    let mut axes: Vec<Axis> = Vec::new();
    for s in &summary {
        if !axes.contains(&s.axis) {
            axes.push(s.axis);
        }
    }
    for axis in axes {
        for (suffix, pick) in [
            ("objective", (|s: &CellSummary| (s.normalized_mean, s.normalized_std)) as fn(&CellSummary) -> (f64, f64)),
            ("time", |s: &CellSummary| (s.time_ms_mean, s.time_ms_std)),
        ] {
            let mut w = BufWriter::new(File::create(dir.join(format!("plot_{}_{suffix}.tsv", axis.name())))?);
            writeln!(w, "policy\tx\tmean\tstddev")?;
            for s in summary.iter().filter(|s| s.axis == axis) {
                let (m, sd) = pick(s);
                writeln!(w, "{}\t{}\t{m}\t{sd}", s.policy, s.axis_value)?;
            }
            w.flush()?;
        }
    }
    Ok(summary)
}
