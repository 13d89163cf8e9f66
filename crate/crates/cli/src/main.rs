use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde_json::json;

use netrvene::config::ExperimentConfig;
use netrvene::harness::{derive_seed, run_experiment_with, run_trajectory, write_outputs, RunSeeds};
use netrvene::netgen::generate_network;
use netrvene::validation::{run_all, ValidationOptions};
use netrvene::{Error, PolicyKind, PolicySpec};
use rand::SeedableRng;

const SEED_ENV: &str = "NETRVENE_SEED";

#[derive(Parser, Debug)]
#[command(name = "netrvene", version, about = "Simulate and optimize network-based health interventions")]
struct Cli {
    /// Experiment configuration (JSON); built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Root seed. Falls back to $NETRVENE_SEED, then the config, then a fresh draw.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    jobs: Option<u32>,
    /// Only print errors and the final summary.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate one network and write its snapshot.
    Generate,
    /// Roll one policy forward on a generated network.
    Simulate {
        #[arg(long, value_name = "NAME", default_value = "heuristic_lookahead")]
        policy: String,
    },
    /// Run the configured parameter sweeps.
    Experiment,
    /// Run the randomized correctness suites.
    Validate {
        /// Smaller instance counts for a fast smoke check.
        #[arg(long)]
        quick: bool,
    },
}

/// Failure carrying its exit status: 2 for configuration problems, 1 otherwise.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<Error>() {
            Some(Error::Config(_) | Error::Distribution { .. } | Error::InvalidParams(_)) => 2,
            _ => 1,
        };
        Failure { code, error }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure { code: 2, error: anyhow::Error::from(Error::Config(msg.into())) }
}

#[derive(Clone, Copy, Debug)]
enum SeedSource {
    Flag,
    Env,
    Config,
    Drawn,
}

impl SeedSource {
    fn name(self) -> &'static str {
        match self {
            SeedSource::Flag => "flag",
            SeedSource::Env => "env",
            SeedSource::Config => "config",
            SeedSource::Drawn => "drawn",
        }
    }
}

fn resolve_seed(flag: Option<u64>, cfg: &ExperimentConfig) -> Result<(u64, SeedSource), Failure> {
    if let Some(s) = flag {
        return Ok((s, SeedSource::Flag));
    }
    if let Ok(text) = std::env::var(SEED_ENV) {
        let s = text
            .trim()
            .parse()
            .map_err(|_| config_error(format!("{SEED_ENV}={text:?} is not an unsigned 64-bit integer")))?;
        return Ok((s, SeedSource::Env));
    }
    if let Some(s) = cfg.experiment.base_seed {
        return Ok((s, SeedSource::Config));
    }
    Ok((rand::random(), SeedSource::Drawn))
}

struct Ctx {
    cfg: ExperimentConfig,
    seed: u64,
    source: SeedSource,
    quiet: bool,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn run_record(&self, command: &str) -> serde_json::Value {
        json!({
            "command": command,
            "seed": self.seed,
            "seed_source": self.source.name(),
            "version": env!("CARGO_PKG_VERSION"),
            "config": self.cfg,
        })
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

fn prepare_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn generate(ctx: &Ctx, out: &Path) -> Result<(), Failure> {
    let dist = ctx.cfg.generator.load_distribution()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(&[ctx.seed], "network"));
    let net = generate_network(&dist, &ctx.cfg.generator, &mut rng)?;
    prepare_dir(out)?;
    net.state.to_snapshot().write_file(&out.join("network.json"))?;
    write_json(&out.join("agents.json"), &net.agents)?;
    write_json(&out.join("run.json"), &ctx.run_record("generate"))?;
    println!(
        "generated {} nodes, {} edges, {} targets, {} mentors -> {}",
        net.state.node_count(),
        net.state.edge_count(),
        net.state.targets().len(),
        net.state.healthy().len(),
        out.join("network.json").display()
    );
    Ok(())
}

fn simulate(ctx: &Ctx, out: &Path, policy: &str) -> Result<(), Failure> {
    let kind: PolicyKind = policy.parse()?;
    let spec = ctx
        .cfg
        .policies
        .iter()
        .copied()
        .find(|p| p.kind == kind)
        .unwrap_or_else(|| PolicySpec::new(kind));
    let dist = ctx.cfg.generator.load_distribution()?;
    let t = run_trajectory(&dist, &ctx.cfg.generator, &ctx.cfg.model, &spec, RunSeeds::from_base(ctx.seed, &spec))?;
    prepare_dir(out)?;
    let f = File::create(out.join("trajectory.jsonl")).context("creating trajectory.jsonl")?;
    t.write_jsonl(f)?;
    let summary = json!({
        "policy": kind.name(),
        "seed": ctx.seed,
        "seed_source": ctx.source.name(),
        "objective_kind": ctx.cfg.model.objective,
        "objective": t.objective,
        "horizon": ctx.cfg.model.horizon,
        "nodes": t.initial.node_count(),
        "targets": t.initial.targets().len(),
        "edges_added": t.steps.iter().map(|s| s.edges.len()).sum::<usize>(),
        "policy_time_ms": t.policy_time.as_secs_f64() * 1e3,
    });
    write_json(&out.join("summary.json"), &summary)?;
    println!("{} objective {:.6} over {} steps", kind.name(), t.objective, t.steps.len());
    Ok(())
}

fn experiment(ctx: &Ctx, out: &Path) -> Result<(), Failure> {
    let mut cfg = ctx.cfg.clone();
    cfg.experiment.base_seed = Some(ctx.seed);
    let cells: usize = cfg.experiment.sweeps.iter().map(|s| s.values.len()).sum();
    let total = cells * cfg.experiment.seeds * cfg.policies.len();
    ctx.note(format!("running {total} rollouts on {} worker(s)", rayon::current_num_threads()));
    let done = AtomicUsize::new(0);
    let rows = run_experiment_with(&cfg, |row| {
        let n = done.fetch_add(1, Ordering::Relaxed) + 1;
        if !ctx.quiet && (n.is_multiple_of(50) || n == total || row.error.is_some()) {
            match &row.error {
                Some(e) => eprintln!("[{n}/{total}] {} {}={} seed {}: {e}", row.policy, row.axis, row.axis_value, row.seed),
                None => eprintln!("[{n}/{total}]"),
            }
        }
    })?;
    let summary = write_outputs(&rows, out)?;
    let failed = rows.iter().filter(|r| !r.ok()).count();
    let mut record = ctx.run_record("experiment");
    record["rows"] = json!(rows.len());
    record["failed_rows"] = json!(failed);
    write_json(&out.join("run.json"), &record)?;
    for s in &summary {
        ctx.note(format!(
            "{:>18} {:>17}={:<4} mean {:>12.4} sd {:>10.4}",
            s.policy, s.axis, s.axis_value, s.normalized_mean, s.normalized_std
        ));
    }
    println!("{} rows ({failed} failed) -> {}", rows.len(), out.join("results.csv").display());
    if failed > 0 {
        return Err(anyhow::anyhow!("{failed} rollout(s) failed; see the error column of results.csv").into());
    }
    Ok(())
}

fn validate(ctx: &Ctx, out: Option<&Path>, quick: bool) -> Result<(), Failure> {
    let mut opts = ValidationOptions { seed: ctx.seed, ..ValidationOptions::default() };
    if quick {
        opts.oracle_instances = 100;
        opts.equivalence_instances = 50;
        opts.gradient_instances = 5;
        opts.transitions = 1000;
        opts.chi2_samples = 10_000;
        opts.pairwise_instances = 20;
    }
    let reports = run_all(&opts)?;
    for r in &reports {
        println!(
            "{} {:<22} {:>6} checks {:>7.2}s  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.checked,
            r.elapsed.as_secs_f64(),
            r.detail
        );
    }
    if let Some(dir) = out {
        prepare_dir(dir)?;
        let mut record = ctx.run_record("validate");
        record["suites"] = json!(reports);
        write_json(&dir.join("validation.json"), &record)?;
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(anyhow::anyhow!("{failed} validation suite(s) failed").into());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::read_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .context("starting worker pool")?;
    }
    let (seed, source) = resolve_seed(cli.seed, &cfg)?;
    let ctx = Ctx { cfg, seed, source, quiet: cli.quiet };
    if matches!(source, SeedSource::Drawn) {
        eprintln!("seed: {seed} (drawn)");
    } else {
        ctx.note(format!("seed: {seed} ({})", source.name()));
    }
    let default_out = || PathBuf::from("out");
    match cli.command {
        Command::Generate => generate(&ctx, &cli.out.unwrap_or_else(default_out)),
        Command::Simulate { policy } => simulate(&ctx, &cli.out.unwrap_or_else(default_out), &policy),
        Command::Experiment => {
            let out = cli.out.unwrap_or_else(|| ctx.cfg.experiment.output_dir.clone());
            experiment(&ctx, &out)
        }
        Command::Validate { quick } => validate(&ctx, cli.out.as_deref(), quick),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
