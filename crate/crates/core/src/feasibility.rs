//! Closed-form feasibility conditions, cross-checked against the solver.
//!
//! The conditions are stated over population ratios. On a finite sample the
//! solver works with whole counts, so its verdict can differ from the formula
//! by one sample of abstention budget; [`sweep_feasibility`] reports that
//! margin as `1 / min_z N_z`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cells::CellTable;
use crate::exact::{decimal, int, to_f64, Rational};
use crate::solver::{solve_with, ConstraintSpec, Fairness, NonTrivialityScope, SolveOptions, SolveStatus};
use crate::{FanError, GroupId, Result};

/// Per-group quantities entering the conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupInputs {
    /// Qualification rate.
    pub tau: f64,
    /// Baseline error rate.
    pub error: f64,
    /// No-harm slack.
    pub eta: f64,
    /// Maximum abstention rate.
    pub delta: f64,
}

impl GroupInputs {
    /// Slackened error rate `(1 + eta) e`.
    pub fn slackened_error(&self) -> f64 {
        (1.0 + self.eta) * self.error
    }

    /// Slackened accuracy `1 - (1 + eta) e`.
    pub fn slackened_accuracy(&self) -> f64 {
        1.0 - self.slackened_error()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityInputs {
    pub groups: Vec<GroupInputs>,
    pub epsilon: f64,
    /// Bound on the positive-label abstention-rate gap.
    #[serde(default)]
    pub sigma_positive: Option<f64>,
}

fn unit(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(FanError::domain(format!("{name} = {value} is outside [0, 1]")))
    }
}

impl FeasibilityInputs {
    pub fn validate(&self) -> Result<()> {
        unit("epsilon", self.epsilon)?;
        if let Some(s) = self.sigma_positive {
            unit("sigma", s)?;
        }
        for (z, g) in self.groups.iter().enumerate() {
            unit(&format!("tau[{z}]"), g.tau)?;
            unit(&format!("e[{z}]"), g.error)?;
            unit(&format!("delta[{z}]"), g.delta)?;
            if !g.eta.is_finite() {
                return Err(FanError::domain(format!("eta[{z}] is not finite")));
            }
            unit(&format!("(1 + eta[{z}]) e[{z}]"), g.slackened_error())?;
        }
        Ok(())
    }

    /// Inputs measured on a cell table under the thresholds of `spec`.
    pub fn from_table(table: &CellTable, spec: &ConstraintSpec) -> Result<Self> {
        spec.validate(table.n_groups())?;
        let groups = (0..table.n_groups())
            .map(|z| {
                let n = table.group_size(z);
                if n == 0 {
                    return Err(FanError::domain(format!("group {z} has no samples")));
                }
                Ok(GroupInputs {
                    tau: table.label_count(z, 1) as f64 / n as f64,
                    error: table.baseline_errors(z) as f64 / n as f64,
                    eta: spec.eta[z],
                    delta: spec.delta[z],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            groups,
            epsilon: spec.epsilon,
            sigma_positive: spec.sigma[1],
        })
    }

    fn group(&self, z: GroupId) -> Result<&GroupInputs> {
        self.groups
            .get(z)
            .ok_or_else(|| FanError::domain(format!("group {z} is out of range")))
    }
}

/// Smallest admissible abstention rate for the more qualified group of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum MinDelta {
    /// `delta_high >= value`; a value of at most 0 imposes nothing.
    Bound(f64),
    /// The slackened accuracy of the more qualified group is 0.
    AlwaysFeasible,
}

impl MinDelta {
    pub fn admits(&self, delta: f64) -> bool {
        match *self {
            MinDelta::Bound(b) => delta >= b,
            MinDelta::AlwaysFeasible => true,
        }
    }

    pub fn restricts(&self) -> bool {
        matches!(*self, MinDelta::Bound(b) if b > 0.0)
    }
}

fn exact(x: f64) -> Rational {
    decimal(x).expect("validated inputs are finite")
}

/// `1 - (1 + eps + e'_low - tau_high + tau_low) / (1 - e'_high)` for the
/// ordered pair `(high, low)` with `tau_high >= tau_low`.
pub fn dp_min_delta(inputs: &FeasibilityInputs, high: GroupId, low: GroupId) -> Result<MinDelta> {
    inputs.validate()?;
    let (h, l) = (inputs.group(high)?, inputs.group(low)?);
    if h.tau < l.tau {
        return Err(FanError::domain(format!(
            "group {high} (tau = {}) is less qualified than group {low} (tau = {})",
            h.tau, l.tau
        )));
    }
    let slack = |g: &GroupInputs| (int(1) + exact(g.eta)) * exact(g.error);
    let den = int(1) - slack(h);
    if den == int(0) {
        return Ok(MinDelta::AlwaysFeasible);
    }
    let num = int(1) + exact(inputs.epsilon) + slack(l) - exact(h.tau) + exact(l.tau);
    Ok(MinDelta::Bound(to_f64(&(int(1) - num / den))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub high: GroupId,
    pub low: GroupId,
    pub min_delta: MinDelta,
    pub delta: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpFeasibility {
    pub feasible: bool,
    pub pairs: Vec<PairReport>,
}

impl DpFeasibility {
    /// Human-readable requirement for every violated pair.
    pub fn diagnosis(&self) -> Vec<String> {
        self.pairs
            .iter()
            .filter(|p| !p.satisfied)
            .map(|p| match p.min_delta {
                MinDelta::Bound(b) => format!(
                    "demographic parity between groups {} and {} requires δ ≥ {:.3} for group {} (got {})",
                    p.high,
                    p.low,
                    (b * 1000.0).ceil() / 1000.0,
                    p.high,
                    p.delta
                ),
                MinDelta::AlwaysFeasible => unreachable!("an always-feasible pair is satisfied"),
            })
            .collect()
    }
}

/// Checks the demographic parity condition over every ordered pair of groups
/// with `tau_high >= tau_low`.
pub fn dp_feasible(inputs: &FeasibilityInputs) -> Result<DpFeasibility> {
    inputs.validate()?;
    let mut pairs = Vec::new();
    for (high, h) in inputs.groups.iter().enumerate() {
        for (low, l) in inputs.groups.iter().enumerate() {
            if high == low || h.tau < l.tau {
                continue;
            }
            let min_delta = dp_min_delta(inputs, high, low)?;
            pairs.push(PairReport {
                high,
                low,
                min_delta,
                delta: h.delta,
                satisfied: min_delta.admits(h.delta),
            });
        }
    }
    Ok(DpFeasibility {
        feasible: pairs.iter().all(|p| p.satisfied),
        pairs,
    })
}

/// Equal opportunity is feasible for every choice of parameters.
pub fn eop_feasible(_inputs: &FeasibilityInputs) -> bool {
    true
}

/// Equalized odds is feasible for every choice of parameters.
pub fn eod_feasible(_inputs: &FeasibilityInputs) -> bool {
    true
}

/// Sufficient condition for demographic parity with a bound on the
/// positive-label abstention gap, for the pair `(high, low)`:
/// `delta_low <= 2 tau_low sigma_1` and `delta_high >= dp_min_delta`.
///
/// `false` does not imply infeasibility.
pub fn dp_equal_abstention_sufficient(inputs: &FeasibilityInputs, high: GroupId, low: GroupId) -> Result<bool> {
    let sigma = inputs
        .sigma_positive
        .ok_or_else(|| FanError::domain("the equal-abstention condition needs sigma for label 1"))?;
    let min_delta = dp_min_delta(inputs, high, low)?;
    let (h, l) = (inputs.group(high)?, inputs.group(low)?);
    let cap = int(2) * exact(l.tau) * exact(sigma);
    Ok(exact(l.delta) <= cap && min_delta.admits(h.delta))
}

/// The admissible abstention rates of one group under equal opportunity with
/// the error floor, assuming the baseline is optimal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DeltaInterval {
    /// `lower <= delta <= upper`; empty when `lower > upper`.
    Interval { lower: f64, upper: f64 },
    /// `1 - (1 + eta) e = 0`, where the third condition divides by zero.
    Degenerate { reason: String },
}

impl DeltaInterval {
    pub fn is_empty(&self) -> bool {
        matches!(*self, DeltaInterval::Interval { lower, upper } if lower > upper)
    }

    pub fn contains(&self, delta: f64) -> bool {
        matches!(*self, DeltaInterval::Interval { lower, upper } if lower <= delta && delta <= upper)
    }
}

/// Intersects `delta <= 1 - tau`, `delta >= e - tau`,
/// `delta >= (tau - eta e - 1) / (1 - (1 + eta) e)`,
/// `delta >= -eta e / (2 - (1 + eta) e)` and `0 <= delta <= 1`.
pub fn eop_nontrivial_bounds(tau: f64, error: f64, eta: f64) -> Result<DeltaInterval> {
    let g = GroupInputs {
        tau,
        error,
        eta,
        delta: 0.0,
    };
    FeasibilityInputs {
        groups: vec![g],
        epsilon: 0.0,
        sigma_positive: None,
    }
    .validate()?;
    let (tau, e, eta) = (exact(tau), exact(error), exact(eta));
    let slack = (int(1) + &eta) * &e;
    let den = int(1) - &slack;
    if den == int(0) {
        return Ok(DeltaInterval::Degenerate {
            reason: "the slackened error rate (1 + eta) e is 1".into(),
        });
    }
    let upper = (int(1) - &tau).min(int(1));
    let lower = [
        int(0),
        &e - &tau,
        (&tau - &eta * &e - int(1)) / &den,
        -(&eta * &e) / (int(2) - &slack),
    ]
    .into_iter()
    .max()
    .expect("non-empty");
    Ok(DeltaInterval::Interval {
        lower: to_f64(&lower),
        upper: to_f64(&upper),
    })
}

/// Parameter values explored by [`sweep_feasibility`]; each is applied to
/// every group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub epsilon: Vec<f64>,
    pub delta: Vec<f64>,
    #[serde(default = "zero_eta")]
    pub eta: Vec<f64>,
    /// Positive-label abstention gap bounds; `None` leaves the gap free.
    #[serde(default = "no_sigma")]
    pub sigma: Vec<Option<f64>>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            epsilon: Vec::new(),
            delta: Vec::new(),
            eta: zero_eta(),
            sigma: no_sigma(),
        }
    }
}

fn zero_eta() -> Vec<f64> {
    vec![0.0]
}

fn no_sigma() -> Vec<Option<f64>> {
    vec![None]
}

impl SweepGrid {
    pub fn points(&self) -> Vec<(f64, f64, f64, Option<f64>)> {
        let mut out = Vec::new();
        for &eps in &self.epsilon {
            for &delta in &self.delta {
                for &eta in &self.eta {
                    for &sigma in &self.sigma {
                        out.push((eps, delta, eta, sigma));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub delta: f64,
    pub eta: f64,
    pub sigma: Option<f64>,
    /// `None` when no closed form decides the point.
    pub formula_feasible: Option<bool>,
    pub solver_status: Option<SolveStatus>,
    pub objective: Option<u64>,
    pub error: Option<String>,
    /// Formula and solver disagree.
    pub disagreement: bool,
    /// Distance from `delta` to the nearest closed-form boundary, when known.
    pub boundary_gap: Option<f64>,
    /// The disagreement lies within one sample of abstention budget.
    pub within_margin: bool,
}

/// Closed-form verdict and distance to the boundary for one parameter point.
pub fn formula_verdict(inputs: &FeasibilityInputs, spec: &ConstraintSpec) -> Result<(Option<bool>, Option<f64>)> {
    match spec.fairness {
        Fairness::Dp if spec.non_triviality.is_some() || spec.sigma[0].is_some() => Ok((None, None)),
        Fairness::Dp => {
            let report = dp_feasible(inputs)?;
            let gap = report
                .pairs
                .iter()
                .filter_map(|p| match p.min_delta {
                    MinDelta::Bound(b) => Some((p.delta - b).abs()),
                    MinDelta::AlwaysFeasible => None,
                })
                .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.min(g))));
            if inputs.sigma_positive.is_none() {
                return Ok((Some(report.feasible), gap));
            }
            let mut sufficient = true;
            for p in &report.pairs {
                sufficient &= dp_equal_abstention_sufficient(inputs, p.high, p.low)?;
            }
            Ok((sufficient.then_some(true), gap))
        }
        Fairness::Eop => match &spec.non_triviality {
            None => Ok((Some(eop_feasible(inputs)), None)),
            Some(nt) if nt.floors.is_none() && nt.scope == NonTrivialityScope::AllSamples => {
                let mut feasible = true;
                let mut gap: Option<f64> = None;
                for g in &inputs.groups {
                    let interval = eop_nontrivial_bounds(g.tau, g.error, g.eta)?;
                    feasible &= interval.contains(g.delta);
                    if let DeltaInterval::Interval { lower, upper } = interval {
                        let d = (g.delta - lower).abs().min((g.delta - upper).abs());
                        gap = Some(gap.map_or(d, |a| a.min(d)));
                    }
                }
                Ok((Some(feasible), gap))
            }
            Some(_) => Ok((None, None)),
        },
        Fairness::Eod if spec.non_triviality.is_none() => Ok((Some(eod_feasible(inputs)), None)),
        Fairness::Eod => Ok((None, None)),
    }
}

/// Evaluates the closed form and the solver at every grid point, in
/// parallel. `base` supplies the fairness notion and the error floor.
pub fn sweep_feasibility(
    table: &CellTable,
    base: &ConstraintSpec,
    grid: &SweepGrid,
    options: &SolveOptions,
) -> Vec<SweepPoint> {
    let g = table.n_groups();
    let margin = (0..g)
        .map(|z| table.group_size(z))
        .min()
        .filter(|&n| n > 0)
        .map_or(f64::INFINITY, |n| 1.0 / n as f64);
    grid.points()
        .into_par_iter()
        .map(|(epsilon, delta, eta, sigma)| {
            let mut spec = base.clone();
            spec.epsilon = epsilon;
            spec.delta = vec![delta; g];
            spec.eta = vec![eta; g];
            spec.sigma = [base.sigma[0], sigma];
            let mut point = SweepPoint {
                epsilon,
                delta,
                eta,
                sigma,
                formula_feasible: None,
                solver_status: None,
                objective: None,
                error: None,
                disagreement: false,
                boundary_gap: None,
                within_margin: false,
            };
            let verdict =
                FeasibilityInputs::from_table(table, &spec).and_then(|inputs| formula_verdict(&inputs, &spec));
            match verdict {
                Ok((f, gap)) => {
                    point.formula_feasible = f;
                    point.boundary_gap = gap;
                }
                Err(e) => point.error = Some(e.to_string()),
            }
            match solve_with(table, &spec, options) {
                Ok(s) => {
                    point.solver_status = Some(s.status);
                    point.objective = s.objective;
                }
                Err(e) => point.error = Some(e.to_string()),
            }
            if let (Some(f), Some(s)) = (point.formula_feasible, point.solver_status) {
                point.disagreement = f != s.is_feasible();
                point.within_margin = point.disagreement && point.boundary_gap.is_some_and(|d| d <= margin);
            }
            point
        })
        .collect()
}

/// Writes one CSV row per grid point.
pub fn write_sweep_csv(points: &[SweepPoint], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "epsilon",
        "delta",
        "eta",
        "sigma",
        "formula_feasible",
        "solver_status",
        "objective",
        "disagreement",
        "within_margin",
        "error",
    ])?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for p in points {
        w.write_record([
            p.epsilon.to_string(),
            p.delta.to_string(),
            p.eta.to_string(),
            opt(p.sigma.map(|s| s.to_string())),
            opt(p.formula_feasible.map(|f| f.to_string())),
            opt(p.solver_status.map(|s| status_name(s).to_string())),
            opt(p.objective.map(|o| o.to_string())),
            p.disagreement.to_string(),
            p.within_margin.to_string(),
            opt(p.error.clone()),
        ])?;
    }
    w.flush().map_err(|e| FanError::io("<csv output>", e))?;
    Ok(())
}

pub(crate) fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::FeasibleBestEffort => "feasible_best_effort",
        SolveStatus::Infeasible => "infeasible",
    }
}
