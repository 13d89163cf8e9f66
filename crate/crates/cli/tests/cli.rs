use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use netrvene::model::Snapshot;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_netrvene"));
    c.env_remove("NETRVENE_SEED");
    c
}

fn shipped_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json")
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const ONE_CELL: &str = r#"{
  "version": 1,
  "generator": {"nodes": 40, "m": 2},
  "model": {"horizon": 3},
  "policies": [{"kind": "heuristic_myopic"}],
  "experiment": {"seeds": 1, "sweeps": [{"axis": "nodes", "values": [40]}]}
}"#;

#[test]
fn validate_on_shipped_config_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin()
        .args(["validate", "--seed", "3", "--quiet", "--out"])
        .arg(dir.path())
        .arg("--config")
        .arg(shipped_config()));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 5, "{stdout}");
    assert!(dir.path().join("validation.json").exists());
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut logs = Vec::new();
    for run_dir in ["a", "b"] {
        let out = dir.path().join(run_dir);
        let o = run(bin().args(["simulate", "--policy", "control", "--seed", "7", "--quiet", "--out"]).arg(&out));
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        logs.push(fs::read(out.join("trajectory.jsonl")).unwrap());
        let summary: serde_json::Value =
            serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["seed"], 7);
        assert_eq!(summary["policy"], "control");
    }
    assert!(!logs[0].is_empty());
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn seed_comes_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin()
        .env("NETRVENE_SEED", "11")
        .args(["simulate", "--policy", "perpetual_random", "--out"])
        .arg(dir.path()));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("seed: 11 (env)"));
    let o = run(bin().env("NETRVENE_SEED", "eleven").args(["generate", "--out"]).arg(dir.path()));
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_seed_is_drawn_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin().args(["generate", "--quiet", "--out"]).arg(dir.path()));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("(drawn)"));
    let record: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(record["seed_source"], "drawn");
    assert!(record["seed"].is_u64());
}

#[test]
fn generate_writes_a_loadable_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(bin().args(["generate", "--seed", "5", "--quiet", "--out"]).arg(dir.path()));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let state = Snapshot::read_file(&dir.path().join("network.json")).unwrap().into_state().unwrap();
    assert_eq!(state.node_count(), 200);
    state.check_invariants().unwrap();
}

#[test]
fn one_cell_experiment_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, ONE_CELL).unwrap();
    let out = dir.path().join("results");
    let o = run(bin().args(["experiment", "--seed", "2", "--jobs", "1", "--quiet", "--config"]).arg(&cfg).arg("--out").arg(&out));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2, "{csv}");
    assert!(lines[1].starts_with("heuristic_myopic,nodes,40,0,cumulative,"));
    for f in ["summary.json", "run.json", "plot_nodes_objective.tsv", "plot_nodes_time.tsv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn writes_stay_inside_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, ONE_CELL).unwrap();
    for sub in ["generate", "simulate", "experiment", "validate"] {
        let o = run(bin()
            .current_dir(dir.path())
            .args([sub, "--seed", "1", "--quiet", "--out", "out", "--config"])
            .arg(&cfg));
        assert_eq!(code(&o), 0, "{sub}: {}", stderr(&o));
    }
    let mut entries: Vec<String> =
        fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    entries.sort();
    assert_eq!(entries, ["cfg.json", "out"]);
}

#[test]
fn config_errors_exit_two_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\n  \"model\": {\"mu\": 0.1},\n  \"generatr\": {}\n}").unwrap();
    let o = run(bin().args(["simulate", "--seed", "1", "--config"]).arg(&cfg));
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("bad.json") && err.contains("line 3"), "{err}");

    let o = run(bin().args(["simulate", "--seed", "1", "--config"]).arg(dir.path().join("missing.json")));
    assert_eq!(code(&o), 2);

    fs::write(&cfg, r#"{"generator": {"m": 1}}"#).unwrap();
    let o = run(bin().args(["generate", "--seed", "1", "--config"]).arg(&cfg));
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&run(bin().args(["simulate", "--bogus"]))), 2);
    assert_eq!(code(&run(bin().args(["generate", "--policy", "control"]))), 2);
    assert_eq!(code(&run(&mut bin())), 2);
    assert_eq!(code(&run(bin().args(["simulate", "--seed", "1", "--policy", "nobody"]))), 2);
    assert_eq!(code(&run(bin().args(["experiment", "--jobs", "0"]))), 2);
}
