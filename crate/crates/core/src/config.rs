//! Versioned JSON run configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::netgen::GenConfig;
use crate::policies::{PolicyKind, PolicySpec};

pub const CONFIG_VERSION: u32 = 1;

/// Parameter varied along one sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Nodes,
    Horizon,
    EdgesPerArrival,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Nodes => "nodes",
            Axis::Horizon => "horizon",
            Axis::EdgesPerArrival => "edges_per_arrival",
        }
    }

    /// Writes `value` into the generator or model settings.
    pub fn apply(self, value: u64, gen: &mut GenConfig, model: &mut ModelParams) {
        match self {
            Axis::Nodes => gen.nodes = value as usize,
            Axis::Horizon => model.horizon = value as u32,
            Axis::EdgesPerArrival => {
                gen.m = value as usize;
                if let Some(m0) = gen.m0 {
                    gen.m0 = Some(m0.max(gen.m));
                }
            }
        }
    }

    /// Divisor of the normalized objective: `|V|` along the node sweep, `T`
    /// along the horizon sweep, none along the density sweep.
    pub fn normalizer(self, gen: &GenConfig, model: &ModelParams) -> f64 {
        match self {
            Axis::Nodes => gen.nodes as f64,
            Axis::Horizon => model.horizon as f64,
            Axis::EdgesPerArrival => 1.0,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Axis::Nodes, Axis::Horizon, Axis::EdgesPerArrival]
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown axis {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: Axis,
    pub values: Vec<u64>,
}

fn default_seeds() -> usize {
    20
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_sweeps() -> Vec<Sweep> {
    vec![
        Sweep { axis: Axis::Nodes, values: vec![100, 200, 400, 800] },
        Sweep { axis: Axis::Horizon, values: vec![4, 8, 16] },
        Sweep { axis: Axis::EdgesPerArrival, values: vec![2, 4, 8] },
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Root of every random stream; callers pick one when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_seed: Option<u64>,
    /// Replicates per grid cell.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_sweeps")]
    pub sweeps: Vec<Sweep>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            base_seed: None,
            seeds: default_seeds(),
            sweeps: default_sweeps(),
            output_dir: default_output_dir(),
        }
    }
}

fn default_version() -> u32 {
    CONFIG_VERSION
}

fn default_policies() -> Vec<PolicySpec> {
    PolicyKind::ALL.into_iter().map(PolicySpec::new).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub version: u32,
    #[serde(default)]
    pub generator: GenConfig,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicySpec>,
    #[serde(default)]
    pub experiment: ExperimentSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            version: CONFIG_VERSION,
            generator: GenConfig::default(),
            model: ModelParams::default(),
            policies: default_policies(),
            experiment: ExperimentSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!("line {} column {}: {e}", e.line(), e.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        self.generator.validate()?;
        self.model.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.policies.is_empty() {
            return Err(Error::Config("at least one policy is required".into()));
        }
        for p in &self.policies {
            p.validate()?;
        }
        let ex = &self.experiment;
        if ex.seeds == 0 {
            return Err(Error::Config("experiment.seeds must be at least 1".into()));
        }
        for (i, s) in ex.sweeps.iter().enumerate() {
            if s.values.is_empty() || s.values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!(
                    "experiment.sweeps[{i}].values must be non-empty and strictly increasing"
                )));
            }
            for &v in &s.values {
                let mut gen = self.generator.clone();
                let mut model = self.model;
                s.axis.apply(v, &mut gen, &mut model);
                gen.validate()
                    .and_then(|_| model.validate())
                    .map_err(|e| Error::Config(format!("experiment.sweeps[{i}] value {v}: {e}")))?;
            }
        }
        Ok(())
    }

    /// Generator and model settings of one grid cell.
    pub fn cell(&self, axis: Axis, value: u64) -> (GenConfig, ModelParams) {
        let mut gen = self.generator.clone();
        let mut model = self.model;
        axis.apply(value, &mut gen, &mut model);
        (gen, model)
    }
}
