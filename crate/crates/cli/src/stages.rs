//! One function per pipeline stage. Each reads its inputs from the run
//! directory, so any stage can be re-run on its own once its upstream
//! artifacts exist.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use fan_core::adjust::{consistency_rate, prediction_adjustment};
use fan_core::baseline::{group_error_rates, predicted_labels, score, train_baseline, BaselineModel};
use fan_core::cells::{build_cells, decisions_from_counts, CellTable, DecisionVector};
use fan_core::data::{
    gen_synthetic, group_stats, load_csv, read_csv, split, write_csv, CsvSchema, Dataset, GroupStats,
};
use fan_core::feasibility::{dp_feasible, FeasibilityInputs};
use fan_core::metrics::{
    compare_to_baseline, evaluate, outputs_from_decisions, outputs_from_fan, Comparison, EvalReport,
};
use fan_core::solver::{solve_with, ConstraintSpec, Fairness, IpSolution};
use fan_core::surrogate::{train_fan, FanModel, FAN_MANIFEST};
use fan_core::Label;
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::artifacts::{read_json, record_stage, require, sha256_hex, write_file, write_json, Layout};
use crate::config::{DataSource, RunConfig};

/// How a command ended when it did not fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Infeasible,
}

pub const SPLIT_NAMES: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_groups: usize,
    pub feature_dim: usize,
    /// Statistics of every written split, keyed by split name.
    pub splits: BTreeMap<String, GroupStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveArtifact {
    pub spec: ConstraintSpec,
    /// Closed-form verdict, for notions that have one.
    pub formula_feasible: Option<bool>,
    pub diagnosis: Vec<String>,
    pub solution: IpSolution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustArtifact {
    pub decisions: DecisionVector,
    pub consistency_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitEval {
    pub baseline: EvalReport,
    pub fan: EvalReport,
    pub comparison: Comparison,
    /// The canonical Stage I decisions applied directly (training split only).
    pub stage1: Option<EvalReport>,
    /// Fraction of samples where the FAN output equals the Stage I output.
    pub stage1_fidelity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalArtifact {
    pub spec: ConstraintSpec,
    pub splits: BTreeMap<String, SplitEval>,
}

pub struct Run {
    pub config: RunConfig,
    pub layout: Layout,
    config_sha256: String,
}

/// Training data with the baseline's view of it.
pub struct StageOneInputs {
    pub train: Dataset,
    pub baseline: BaselineModel,
    pub scores: Vec<f64>,
    pub preds: Vec<Label>,
    pub table: CellTable,
}

impl Run {
    pub fn new(config: RunConfig, root: PathBuf) -> Result<Self> {
        config.validate()?;
        let config_sha256 = sha256_hex(&serde_json::to_vec(&config)?);
        Ok(Self {
            config,
            layout: Layout::new(root),
            config_sha256,
        })
    }

    pub(crate) fn record(&self, stage: &str, files: &[PathBuf]) -> Result<()> {
        for f in files {
            println!("wrote {}", f.display());
        }
        record_stage(&self.layout, stage, &self.config_sha256, files)
    }

    pub fn spec(&self, n_groups: usize) -> Result<ConstraintSpec> {
        let spec = self.config.spec.clone();
        spec.validate(n_groups).context("invalid constraint spec")?;
        Ok(spec)
    }

    pub fn summary(&self) -> Result<DatasetSummary> {
        read_json(&self.layout.dataset_json(), "dataset", "gen-synth")
    }

    /// Reads one written split, checking it against the recorded statistics.
    pub fn load_split(&self, summary: &DatasetSummary, name: &str) -> Result<Dataset> {
        let path = self.layout.split_csv(name);
        require(&path, "gen-synth")?;
        let file = std::fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        let read = read_csv(file, &CsvSchema::written(summary.feature_dim))
            .with_context(|| format!("reading {}", path.display()))?;
        let data = Dataset::with_groups(read.samples().to_vec(), summary.n_groups)?;
        let expected = summary
            .splits
            .get(name)
            .with_context(|| format!("dataset.json has no `{name}` split; re-run `fan gen-synth`"))?;
        ensure!(
            data.group_sizes() == expected.sizes,
            "{} does not match dataset.json; re-run `fan gen-synth`",
            path.display()
        );
        Ok(data)
    }

    pub fn load_baseline(&self) -> Result<BaselineModel> {
        let path = self.layout.baseline();
        require(&path, "train-baseline")?;
        BaselineModel::load(&path).with_context(|| format!("loading {}", path.display()))
    }

    pub fn stage_one_inputs(&self) -> Result<StageOneInputs> {
        let summary = self.summary()?;
        let baseline = self.load_baseline()?;
        let train = self.load_split(&summary, "train")?;
        let scores = score(&baseline, &train)?;
        let preds = predicted_labels(&scores, baseline.threshold)?;
        let table = build_cells(&train, &preds, &scores)?;
        Ok(StageOneInputs {
            train,
            baseline,
            scores,
            preds,
            table,
        })
    }

    /// Materializes the configured dataset: a synthetic draw or a CSV file,
    /// optionally rescaled and split.
    pub fn gen_data(&self) -> Result<Outcome> {
        let data = match &self.config.data {
            DataSource::Synthetic(s) => gen_synthetic(s)?,
            DataSource::Csv(c) => {
                let schema = CsvSchema {
                    feature_cols: c.feature_cols.clone(),
                    group_col: c.group_col.clone(),
                    label_col: c.label_col.clone(),
                };
                load_csv(&c.path, &schema).with_context(|| format!("loading {}", c.path.display()))?
            }
        };
        let data = if self.config.min_max_scale {
            data.min_max_scaled()
        } else {
            data
        };
        self.spec(data.n_groups())?;

        let parts: Vec<(&str, Dataset)> = match &self.config.split {
            None => vec![("train", data.clone())],
            Some(s) => {
                let splits = split(&data, s.fractions, s.seed)?;
                vec![("train", splits.train), ("val", splits.val), ("test", splits.test)]
            }
        };
        let mut files = Vec::new();
        let mut stats = BTreeMap::new();
        for (name, part) in &parts {
            if part.is_empty() {
                warn!("split `{name}` is empty");
                continue;
            }
            let mut bytes = Vec::new();
            write_csv(part, &mut bytes)?;
            let path = self.layout.split_csv(name);
            write_file(&path, &bytes)?;
            files.push(path);
            stats.insert(name.to_string(), group_stats(part)?);
        }
        let summary = DatasetSummary {
            n_groups: data.n_groups(),
            feature_dim: data.feature_dim(),
            splits: stats,
        };
        write_json(&self.layout.dataset_json(), "dataset", &summary)?;
        files.push(self.layout.dataset_json());
        self.record("gen-synth", &files)?;
        Ok(Outcome::Success)
    }

    pub fn train_baseline(&self) -> Result<Outcome> {
        let summary = self.summary()?;
        let train = self.load_split(&summary, "train")?;
        let model = train_baseline(&train, &self.config.baseline, self.config.t0)?;
        info!("baseline train accuracy {:.4}", model.train_accuracy);
        model.save(self.layout.baseline())?;
        self.record("train-baseline", &[self.layout.baseline()])?;
        Ok(Outcome::Success)
    }

    pub fn solve(&self) -> Result<Outcome> {
        let inputs = self.stage_one_inputs()?;
        let spec = self.spec(inputs.train.n_groups())?;
        let formula = match spec.fairness {
            Fairness::Dp => match FeasibilityInputs::from_table(&inputs.table, &spec).and_then(|i| dp_feasible(&i)) {
                Ok(report) => Some(report),
                Err(e) => {
                    warn!("closed-form feasibility check skipped: {e}");
                    None
                }
            },
            Fairness::Eop | Fairness::Eod => None,
        };
        let diagnosis = formula.as_ref().map(|r| r.diagnosis()).unwrap_or_default();
        let solution = solve_with(&inputs.table, &spec, &self.config.solve_options())?;
        let feasible = solution.status.is_feasible();
        let artifact = SolveArtifact {
            spec,
            formula_feasible: formula.as_ref().map(|r| r.feasible),
            diagnosis: diagnosis.clone(),
            solution,
        };
        write_json(&self.layout.solution(), "ip-solution", &artifact)?;
        self.record("solve", &[self.layout.solution()])?;

        if !feasible {
            eprintln!("infeasible: no decisions satisfy the constraint spec");
            for line in &diagnosis {
                eprintln!("  {line}");
            }
            if !artifact.solution.relaxable_families.is_empty() {
                let names: Vec<String> = artifact
                    .solution
                    .relaxable_families
                    .iter()
                    .map(|f| serde_json::to_value(f).map(|v| v.as_str().unwrap_or_default().to_string()))
                    .collect::<serde_json::Result<_>>()?;
                eprintln!(
                    "  dropping any one of these constraint families restores feasibility: {}",
                    names.join(", ")
                );
            }
            return Ok(Outcome::Infeasible);
        }
        if artifact.formula_feasible == Some(false) {
            warn!("the closed-form condition fails but the integer program is feasible: {diagnosis:?}");
        }
        println!(
            "solver status {:?}, objective {}",
            artifact.solution.status,
            artifact.solution.objective.unwrap_or_default()
        );
        Ok(Outcome::Success)
    }

    pub fn adjust(&self) -> Result<Outcome> {
        let inputs = self.stage_one_inputs()?;
        let solved: SolveArtifact = read_json(&self.layout.solution(), "ip-solution", "solve")?;
        let Some(counts) = solved.solution.counts.as_ref() else {
            eprintln!("infeasible: solution.json records no feasible decisions");
            for line in &solved.diagnosis {
                eprintln!("  {line}");
            }
            return Ok(Outcome::Infeasible);
        };
        let decisions = decisions_from_counts(counts, &inputs.table)?;
        let adjusted = prediction_adjustment(&decisions, &inputs.table, &inputs.scores, &self.config.adjust)?;
        let artifact = AdjustArtifact {
            consistency_rate: consistency_rate(&adjusted, &inputs.train)?,
            decisions: adjusted,
        };
        write_json(&self.layout.decisions(), "decisions", &artifact)?;
        self.record("adjust", &[self.layout.decisions()])?;
        Ok(Outcome::Success)
    }

    pub fn train_surrogate(&self) -> Result<Outcome> {
        let inputs = self.stage_one_inputs()?;
        let adjusted: AdjustArtifact = read_json(&self.layout.decisions(), "decisions", "adjust")?;
        ensure!(
            adjusted.decisions.len() == inputs.train.len(),
            "decisions.json covers {} samples but the training split has {}; re-run `fan adjust`",
            adjusted.decisions.len(),
            inputs.train.len()
        );
        let fan = train_fan(
            inputs.baseline,
            &inputs.train,
            &inputs.scores,
            &adjusted.decisions,
            &self.config.ab,
            &self.config.fb,
            &self.config.surrogate,
        )?;
        info!(
            "surrogate train accuracy: AB {:.4}, FB {:.4}",
            fan.ab.train_accuracy, fan.fb.train_accuracy
        );
        let dir = self.layout.fan_dir();
        fan.save(&dir)?;
        let files = ["baseline.json", "ab.json", "fb.json", FAN_MANIFEST].map(|f| dir.join(f));
        self.record("train-surrogate", &files)?;
        Ok(Outcome::Success)
    }

    pub fn eval(&self) -> Result<Outcome> {
        let summary = self.summary()?;
        require(&self.layout.fan_dir().join(FAN_MANIFEST), "train-surrogate")?;
        let fan = FanModel::load(self.layout.fan_dir())?;
        let spec = self.spec(summary.n_groups)?;
        let mut splits = BTreeMap::new();
        for name in SPLIT_NAMES {
            if !summary.splits.contains_key(name) {
                continue;
            }
            let data = self.load_split(&summary, name)?;
            let scores = score(&fan.baseline, &data)?;
            let preds = predicted_labels(&scores, fan.threshold())?;
            let rates = group_error_rates(&data, &preds)?;
            let baseline_outputs: Vec<Option<Label>> = preds.iter().map(|&p| Some(p)).collect();
            let baseline = evaluate(&data, &baseline_outputs, &rates, &spec)?;
            let fan_outputs = outputs_from_fan(&fan.predict_dataset(&data));
            let fan_report = evaluate(&data, &fan_outputs, &rates, &spec)?;
            let (stage1, stage1_fidelity) = if name == "train" {
                let adjusted: AdjustArtifact = read_json(&self.layout.decisions(), "decisions", "adjust")?;
                let outputs = outputs_from_decisions(&adjusted.decisions, &preds)?;
                let agree = outputs.iter().zip(&fan_outputs).filter(|(a, b)| a == b).count();
                (
                    Some(evaluate(&data, &outputs, &rates, &spec)?),
                    Some(agree as f64 / data.len() as f64),
                )
            } else {
                (None, None)
            };
            splits.insert(
                name.to_string(),
                SplitEval {
                    comparison: compare_to_baseline(&fan_report, &baseline)?,
                    baseline,
                    fan: fan_report,
                    stage1,
                    stage1_fidelity,
                },
            );
        }
        if splits.is_empty() {
            bail!("dataset.json lists no splits; re-run `fan gen-synth`");
        }
        for (name, s) in SPLIT_NAMES.iter().filter_map(|n| splits.get(*n).map(|s| (n, s))) {
            let show = |v: Option<f64>| v.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"));
            println!(
                "{name}: max constrained gap {} (baseline {}), min accuracy {} (baseline {})",
                show(s.fan.max_constrained_gap(spec.fairness)),
                show(s.baseline.max_constrained_gap(spec.fairness)),
                show(s.fan.min_accuracy()),
                show(s.baseline.min_accuracy()),
            );
        }
        write_json(&self.layout.eval(), "eval", &EvalArtifact { spec, splits })?;
        self.record("eval", &[self.layout.eval()])?;
        Ok(Outcome::Success)
    }

    pub fn pipeline(&self) -> Result<Outcome> {
        let stages: [fn(&Self) -> Result<Outcome>; 6] = [
            Self::gen_data,
            Self::train_baseline,
            Self::solve,
            Self::adjust,
            Self::train_surrogate,
            Self::eval,
        ];
        for stage in stages {
            if stage(self)? == Outcome::Infeasible {
                return Ok(Outcome::Infeasible);
            }
        }
        Ok(Outcome::Success)
    }
}
