//! End-to-end acceptance run: full-size correctness suites, then the default
//! sweep grid with ordinal and scaling checks. One PASS/FAIL line per
//! criterion; exits nonzero if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use netrvene::config::{Axis, ExperimentConfig};
use netrvene::harness::{run_experiment, write_outputs, ResultRow};
use netrvene::validation::{self, SuiteReport, ValidationOptions};

const SEED: u64 = 20_240_601;

struct Outcome {
    id: u32,
    title: &'static str,
    passed: bool,
    detail: String,
}

fn suite(id: u32, title: &'static str, budget: Duration, report: netrvene::Result<SuiteReport>) -> Outcome {
    match report {
        Ok(r) => {
            let in_time = r.elapsed <= budget;
            Outcome {
                id,
                title,
                passed: r.passed && in_time,
                detail: format!(
                    "{} checks in {:.1}s (budget {}s); {}",
                    r.checked,
                    r.elapsed.as_secs_f64(),
                    budget.as_secs(),
                    r.detail
                ),
            }
        }
        Err(e) => Outcome { id, title, passed: false, detail: format!("error: {e}") },
    }
}

type Cell = (Axis, u64);

/// Mean objective per policy in each grid cell.
fn cell_means(rows: &[ResultRow]) -> BTreeMap<Cell, BTreeMap<String, f64>> {
    let mut acc: BTreeMap<Cell, BTreeMap<String, (f64, usize)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.ok()) {
        let e = acc.entry((r.axis, r.axis_value)).or_default().entry(r.policy.clone()).or_default();
        e.0 += r.objective;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(c, m)| (c, m.into_iter().map(|(p, (s, n))| (p, s / n as f64)).collect()))
        .collect()
}

/// Least-squares slope of log(mean time) against log(|V|) along the node sweep.
fn loglog_slope(rows: &[ResultRow], policy: &str) -> Option<f64> {
    let mut by_n: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.ok() && r.axis == Axis::Nodes && r.policy == policy) {
        let e = by_n.entry(r.axis_value).or_default();
        e.0 += r.wall_time_ms;
        e.1 += 1;
    }
    let pts: Vec<(f64, f64)> = by_n
        .into_iter()
        .map(|(n, (t, c))| ((n as f64).ln(), (t / c as f64).ln()))
        .collect();
    if pts.len() < 2 || pts.iter().any(|p| !p.1.is_finite()) {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

fn grid_criteria(rows: &[ResultRow], elapsed: Duration, gate_open: bool) -> Vec<Outcome> {
    let blocked = |id, title| Outcome { id, title, passed: false, detail: "blocked: score oracle gate failed".into() };
    let t5 = "heuristics beat baselines in mean objective";
    let t6 = "lookahead at least as good as myopic";
    let t7 = "policy time scaling in |V|";
    if !gate_open {
        return vec![blocked(5, t5), blocked(6, t6), blocked(7, t7)];
    }
    let failed = rows.iter().filter(|r| !r.ok()).count();
    let means = cell_means(rows);
    let heuristics = ["heuristic_myopic", "heuristic_lookahead", "gradient_based"];
    let baselines = ["control", "initial_random", "perpetual_random"];
    let mut beat = 0;
    let mut losers = Vec::new();
    let mut la_ge = 0;
    for (cell, m) in &means {
        let get = |p: &str| m.get(p).copied().unwrap_or(f64::NAN);
        let worst_h = heuristics.iter().map(|p| get(p)).fold(f64::INFINITY, f64::min);
        let best_b = baselines.iter().map(|p| get(p)).fold(f64::NEG_INFINITY, f64::max);
        if worst_h > best_b {
            beat += 1;
        } else {
            losers.push(format!("{}={}", cell.0, cell.1));
        }
        if get("heuristic_lookahead") >= get("heuristic_myopic") {
            la_ge += 1;
        }
    }
    let cells = means.len();
    let frac5 = beat as f64 / cells as f64;
    let frac6 = la_ge as f64 / cells as f64;
    let budget = Duration::from_secs(60 * 60);
    let c5 = Outcome {
        id: 5,
        title: t5,
        passed: failed == 0 && frac5 >= 0.9 && elapsed <= budget,
        detail: format!(
            "{beat}/{cells} cells ({:.0}%, need 90%), {} rollouts, {failed} failed, {:.0}s (budget 3600s){}",
            100.0 * frac5,
            rows.len(),
            elapsed.as_secs_f64(),
            if losers.is_empty() { String::new() } else { format!("; misses: {}", losers.join(", ")) }
        ),
    };
    let c6 = Outcome {
        id: 6,
        title: t6,
        passed: failed == 0 && frac6 >= 0.8,
        detail: format!("{la_ge}/{cells} cells ({:.0}%, need 80%)", 100.0 * frac6),
    };
    let slopes = ["gradient_based", "heuristic_lookahead", "heuristic_myopic"].map(|p| loglog_slope(rows, p));
    let c7 = match slopes {
        [Some(g), Some(la), Some(my)] => Outcome {
            id: 7,
            title: t7,
            passed: g - la >= 0.5 && (la - my).abs() <= 0.3,
            detail: format!(
                "slopes gradient {g:.2}, lookahead {la:.2}, myopic {my:.2}; gradient − lookahead {:.2} (need ≥ 0.5), |lookahead − myopic| {:.2} (need ≤ 0.3)",
                g - la,
                (la - my).abs()
            ),
        },
        _ => Outcome { id: 7, title: t7, passed: false, detail: "node sweep missing or timings not positive".into() },
    };
    vec![c5, c6, c7]
}

fn shipped_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json")
}

fn main() -> ExitCode {
    let opts = ValidationOptions { seed: SEED, ..ValidationOptions::default() };
    let mut outcomes = vec![
        suite(1, "score oracle gate", Duration::from_secs(120), validation::oracle_gate(&opts)),
        suite(2, "heuristic equals exact argmax (equal weights)", Duration::from_secs(300), validation::heuristic_equivalence(&opts)),
        suite(3, "gradient vs finite differences", Duration::from_secs(120), validation::gradient_check(&opts)),
        suite(4, "transition invariants and removal law", Duration::from_secs(180), validation::dynamics_invariants(&opts)),
    ];
    let gate_open = outcomes[0].passed;

    let grid = ExperimentConfig::read_file(&shipped_config()).and_then(|cfg| {
        let started = Instant::now();
        let rows = run_experiment(&cfg)?;
        let elapsed = started.elapsed();
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
        write_outputs(&rows, &dir)?;
        eprintln!("grid outputs in {}", dir.display());
        Ok((rows, elapsed))
    });
    match grid {
        Ok((rows, elapsed)) => outcomes.extend(grid_criteria(&rows, elapsed, gate_open)),
        Err(e) => {
            for (id, title) in [(5, "heuristics beat baselines"), (6, "lookahead vs myopic"), (7, "time scaling")] {
                outcomes.push(Outcome { id, title, passed: false, detail: format!("grid failed: {e}") });
            }
        }
    }
    outcomes.push(suite(
        8,
        "lookahead-then-wait dominates myopic twice",
        Duration::from_secs(300),
        validation::lookahead_dominance(&opts),
    ));

    outcomes.sort_by_key(|o| o.id);
    for o in &outcomes {
        println!("{} [{}] {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.id, o.title, o.detail);
    }
    if outcomes.iter().all(|o| o.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
