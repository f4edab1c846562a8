//! Grid sweeps over (ε, δ, η, σ) on a fixed baseline.

use anyhow::{Context, Result};
use fan_core::adjust::prediction_adjustment;
use fan_core::baseline::group_error_rates;
use fan_core::cells::{counts_from_decisions, decisions_from_counts};
use fan_core::feasibility::{formula_verdict, FeasibilityInputs, SweepGrid};
use fan_core::metrics::{compare_to_baseline, evaluate, outputs_from_decisions, outputs_from_fan, EvalReport};
use fan_core::solver::{solve_with, verify_counts, ConstraintSpec, SolveOptions};
use fan_core::surrogate::train_fan;
use fan_core::Label;
use rayon::prelude::*;

use crate::artifacts::write_file;
use crate::stages::{Run, StageOneInputs};

/// One CSV row; every failure lands in `error` and the sweep continues.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepRow {
    pub epsilon: f64,
    pub delta: f64,
    pub eta: f64,
    pub sigma: Option<f64>,
    pub formula_feasible: Option<bool>,
    pub solver_status: Option<String>,
    pub objective: Option<u64>,
    /// Exact recomputation of every Stage I constraint found no violation.
    pub verified: Option<bool>,
    pub max_constrained_gap: Option<f64>,
    pub dp_reduction: Option<f64>,
    pub eop_reduction: Option<f64>,
    pub eod_reduction: Option<f64>,
    pub min_accuracy_increase: Option<f64>,
    pub accuracy_increase: Vec<Option<f64>>,
    pub error: Option<String>,
}

pub fn header(n_groups: usize) -> Vec<String> {
    let mut cols: Vec<String> = [
        "epsilon",
        "delta",
        "eta",
        "sigma",
        "formula_feasible",
        "solver_status",
        "objective",
        "verified",
        "max_constrained_gap",
        "dp_reduction",
        "eop_reduction",
        "eod_reduction",
        "min_accuracy_increase",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend((0..n_groups).map(|z| format!("accuracy_increase_g{z}")));
    cols.push("error".into());
    cols
}

fn cell<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, T::to_string)
}

impl SweepRow {
    pub fn fields(&self, n_groups: usize) -> Vec<String> {
        let mut out = vec![
            self.epsilon.to_string(),
            self.delta.to_string(),
            self.eta.to_string(),
            cell(&self.sigma),
            cell(&self.formula_feasible),
            cell(&self.solver_status),
            cell(&self.objective),
            cell(&self.verified),
            cell(&self.max_constrained_gap),
            cell(&self.dp_reduction),
            cell(&self.eop_reduction),
            cell(&self.eod_reduction),
            cell(&self.min_accuracy_increase),
        ];
        out.extend((0..n_groups).map(|z| cell(&self.accuracy_increase.get(z).copied().flatten())));
        out.push(self.error.clone().unwrap_or_default());
        out
    }
}

struct PointContext<'a> {
    run: &'a Run,
    inputs: &'a StageOneInputs,
    baseline_report: EvalReport,
    options: SolveOptions,
    full: bool,
}

fn point_spec(base: &ConstraintSpec, n_groups: usize, point: (f64, f64, f64, Option<f64>)) -> ConstraintSpec {
    let (epsilon, delta, eta, sigma) = point;
    let mut spec = base.clone();
    spec.epsilon = epsilon;
    spec.delta = vec![delta; n_groups];
    spec.eta = vec![eta; n_groups];
    spec.sigma = [base.sigma[0], sigma];
    spec
}

fn evaluate_point(ctx: &PointContext, spec: &ConstraintSpec, row: &mut SweepRow) -> Result<()> {
    let inputs = ctx.inputs;
    spec.validate(inputs.train.n_groups())?;
    let verdict = FeasibilityInputs::from_table(&inputs.table, spec).and_then(|i| formula_verdict(&i, spec));
    if let Ok((formula, _)) = verdict {
        row.formula_feasible = formula;
    }
    let solution = solve_with(&inputs.table, spec, &ctx.options)?;
    row.solver_status = Some(
        serde_json::to_value(solution.status)?
            .as_str()
            .unwrap_or_default()
            .to_string(),
    );
    row.objective = solution.objective;
    let Some(counts) = solution.counts.as_ref() else {
        return Ok(());
    };
    let decisions = decisions_from_counts(counts, &inputs.table)?;
    let adjusted = prediction_adjustment(&decisions, &inputs.table, &inputs.scores, &ctx.run.config.adjust)?;
    let adjusted_counts = counts_from_decisions(&adjusted, &inputs.table)?;
    row.verified = Some(verify_counts(&adjusted_counts, &inputs.table, spec)?.is_empty());

    let outputs: Vec<Option<Label>> = if ctx.full {
        let config = &ctx.run.config;
        let fan = train_fan(
            inputs.baseline.clone(),
            &inputs.train,
            &inputs.scores,
            &adjusted,
            &config.ab,
            &config.fb,
            &config.surrogate,
        )?;
        outputs_from_fan(&fan.predict_dataset(&inputs.train))
    } else {
        outputs_from_decisions(&adjusted, &inputs.preds)?
    };
    let rates = group_error_rates(&inputs.train, &inputs.preds)?;
    let report = evaluate(&inputs.train, &outputs, &rates, spec)?;
    let cmp = compare_to_baseline(&report, &ctx.baseline_report)?;
    row.max_constrained_gap = report.max_constrained_gap(spec.fairness);
    row.dp_reduction = cmp.dp_reduction;
    row.eop_reduction = cmp.eop_reduction;
    row.eod_reduction = cmp.eod_reduction;
    row.min_accuracy_increase = cmp.min_accuracy_increase;
    row.accuracy_increase = cmp.accuracy_increase;
    Ok(())
}

/// Solves every grid point on the training split and writes `sweep.csv`.
pub fn run_sweep(run: &Run, grid: &SweepGrid, full: bool, jobs: Option<usize>) -> Result<Vec<SweepRow>> {
    let inputs = run.stage_one_inputs()?;
    let n_groups = inputs.train.n_groups();
    let base = run.config.spec.clone();
    let rates = group_error_rates(&inputs.train, &inputs.preds)?;
    let baseline_outputs: Vec<Option<Label>> = inputs.preds.iter().map(|&p| Some(p)).collect();
    let baseline_spec = point_spec(&base, n_groups, (base.epsilon, 0.0, 0.0, None));
    let ctx = PointContext {
        run,
        inputs: &inputs,
        baseline_report: evaluate(&inputs.train, &baseline_outputs, &rates, &baseline_spec)?,
        options: SolveOptions {
            diagnose: false,
            ..run.config.solve_options()
        },
        full,
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder.build().context("building the sweep worker pool")?;
    let rows: Vec<SweepRow> = pool.install(|| {
        grid.points()
            .into_par_iter()
            .map(|point| {
                let (epsilon, delta, eta, sigma) = point;
                let mut row = SweepRow {
                    epsilon,
                    delta,
                    eta,
                    sigma,
                    ..SweepRow::default()
                };
                let spec = point_spec(&base, n_groups, point);
                if let Err(e) = evaluate_point(&ctx, &spec, &mut row) {
                    log::warn!("sweep point ε={epsilon} δ={delta} η={eta} σ={sigma:?} failed: {e:#}");
                    row.error = Some(format!("{e:#}"));
                }
                row
            })
            .collect()
    });

    let mut bytes = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut bytes);
        w.write_record(header(n_groups))?;
        for row in &rows {
            w.write_record(row.fields(n_groups))?;
        }
        w.flush()?;
    }
    let path = run.layout.sweep();
    write_file(&path, &bytes)?;
    run.record("sweep", &[path])?;
    Ok(rows)
}
