//! The declarative run configuration and command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use fan_core::adjust::AdjustOptions;
use fan_core::data::SyntheticConfig;
use fan_core::feasibility::SweepGrid;
use fan_core::mlp::MlpConfig;
use fan_core::solver::{ConstraintSpec, Fairness, SolveOptions};
use fan_core::surrogate::SurrogateOptions;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    Csv(CsvSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    pub feature_cols: Vec<String>,
    pub group_col: String,
    pub label_col: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    /// Train, validation and test fractions.
    pub fractions: [f64; 3],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_nodes: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_nodes: SolveOptions::default().max_nodes,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub grid: SweepGrid,
    /// Train surrogates at every point instead of stopping after Stage I.
    pub full: bool,
    /// Worker threads; `None` uses one per core.
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    #[serde(default)]
    pub split: Option<SplitConfig>,
    #[serde(default)]
    pub min_max_scale: bool,
    #[serde(default = "small_mlp")]
    pub baseline: MlpConfig,
    #[serde(default = "small_mlp")]
    pub ab: MlpConfig,
    #[serde(default = "small_mlp")]
    pub fb: MlpConfig,
    pub spec: ConstraintSpec,
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default)]
    pub adjust: AdjustOptions,
    #[serde(default)]
    pub surrogate: SurrogateOptions,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn small_mlp() -> MlpConfig {
    MlpConfig {
        hidden_dims: vec![32, 32],
        dropout_prob: 0.0,
        epochs: 30,
        ..MlpConfig::default()
    }
}

fn default_t0() -> f64 {
    0.5
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic(SyntheticConfig::new(0, vec![500, 500], vec![0.7, 0.4])),
            split: None,
            min_max_scale: false,
            baseline: small_mlp(),
            ab: small_mlp(),
            fb: small_mlp(),
            spec: ConstraintSpec::uniform(Fairness::Dp, 0.1, 0.1, 0.0, 2),
            t0: default_t0(),
            adjust: AdjustOptions::default(),
            surrogate: SurrogateOptions::default(),
            solver: SolverConfig::default(),
            sweep: SweepConfig::default(),
            output_dir: None,
        }
    }
}

/// Values given on the command line; each replaces the matching config key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub fairness: Option<Fairness>,
    pub epsilon: Option<f64>,
    /// Applied to every group.
    pub delta: Option<f64>,
    /// Applied to every group.
    pub eta: Option<f64>,
    pub t0: Option<f64>,
    /// Replaces every seed: data, split and all three networks.
    pub seed: Option<u64>,
    pub max_nodes: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Group count known before any data is read, for synthetic sources.
    pub fn declared_groups(&self) -> Option<usize> {
        match &self.data {
            DataSource::Synthetic(s) => Some(s.sizes.len()),
            DataSource::Csv(_) => None,
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(f) = o.fairness {
            self.spec.fairness = f;
        }
        if let Some(e) = o.epsilon {
            self.spec.epsilon = e;
        }
        if let Some(d) = o.delta {
            let n = self.spec.delta.len().max(self.declared_groups().unwrap_or(0));
            self.spec.delta = vec![d; n];
        }
        if let Some(e) = o.eta {
            let n = self.spec.eta.len().max(self.declared_groups().unwrap_or(0));
            self.spec.eta = vec![e; n];
        }
        if let Some(t) = o.t0 {
            self.t0 = t;
        }
        if let Some(seed) = o.seed {
            if let DataSource::Synthetic(s) = &mut self.data {
                s.seed = seed;
            }
            if let Some(split) = &mut self.split {
                split.seed = seed;
            }
            for mlp in [&mut self.baseline, &mut self.ab, &mut self.fb] {
                mlp.seed = seed;
            }
        }
        if let Some(m) = o.max_nodes {
            self.solver.max_nodes = m;
        }
        if let Some(dir) = &o.output_dir {
            self.output_dir = Some(dir.clone());
        }
    }

    /// Checks everything that does not depend on the loaded data.
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.t0 > 0.0 && self.t0 < 1.0,
            "t0 {} must lie strictly between 0 and 1",
            self.t0
        );
        for (name, mlp) in [("baseline", &self.baseline), ("ab", &self.ab), ("fb", &self.fb)] {
            mlp.validate()
                .with_context(|| format!("invalid `{name}` network config"))?;
        }
        if let Some(split) = &self.split {
            ensure!(
                split.fractions.iter().all(|f| f.is_finite() && *f > 0.0)
                    && (split.fractions.iter().sum::<f64>() - 1.0).abs() <= 1e-9,
                "split fractions must be positive and sum to 1"
            );
        }
        if self.sweep.jobs == Some(0) {
            bail!("sweep.jobs must be positive");
        }
        if let Some(g) = self.declared_groups() {
            self.spec.validate(g).context("invalid constraint spec")?;
        }
        Ok(())
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            max_nodes: self.solver.max_nodes,
            ..SolveOptions::default()
        }
    }
}
