//! Exact solution of the constrained abstain/flip program.
//!
//! The program is solved over per-cell counts: a float simplex relaxation
//! guides a depth-first branch and bound whose rows are exact integer
//! tightenings of the rational constraints, and every returned solution is
//! re-verified in rational arithmetic. [`brute_force_solve`] enumerates
//! per-sample decisions and [`solve_linearized`] solves the per-sample
//! program with McCormick rows; both serve as independent oracles.

mod bnb;
mod brute;
mod count_ip;
mod mccormick;
mod model;
mod simplex;
mod spec;
mod values;

use serde::{Deserialize, Serialize};

pub use brute::{brute_force_solve, BruteForceOptions, BruteForceResult, DEFAULT_BRUTE_FORCE_CAP};
pub use mccormick::{mccormick_linearize, solve_linearized, LinearizedSystem};
pub use model::IntegerProgram;
pub use spec::{ConstraintSpec, Fairness, NonTriviality, NonTrivialityScope};
pub use values::{
    constraint_values, group_tallies, verify_counts, ConstraintReport, ConstraintValue, Family, GroupTallies, Sense,
};

use bnb::{branch_and_bound, BbResult, BbStatus};
use count_ip::CountModel;

use crate::cells::{counts_objective, CellCounts, CellTable};
use crate::{FanError, Label, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    FeasibleBestEffort,
    Infeasible,
}

impl SolveStatus {
    pub fn is_feasible(&self) -> bool {
        !matches!(self, SolveStatus::Infeasible)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpSolution {
    pub status: SolveStatus,
    /// Errors among non-abstained samples.
    pub objective: Option<u64>,
    pub counts: Option<CellCounts>,
    pub constraint_report: Option<ConstraintReport>,
    /// `objective - lower bound` when the node budget ran out.
    pub gap: Option<f64>,
    pub nodes: usize,
    /// Constraint families whose removal alone makes an infeasible program feasible.
    #[serde(default)]
    pub relaxable_families: Vec<Family>,
}

impl IpSolution {
    fn infeasible(nodes: usize) -> Self {
        Self {
            status: SolveStatus::Infeasible,
            objective: None,
            counts: None,
            constraint_report: None,
            gap: None,
            nodes,
            relaxable_families: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SolveOptions {
    pub max_nodes: usize,
    /// Forces zero abstentions on samples with this label.
    pub forbid_abstain_label: Option<Label>,
    /// Re-solve without each constraint family when infeasible.
    pub diagnose: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_nodes: 200_000,
            forbid_abstain_label: None,
            diagnose: true,
        }
    }
}

pub fn solve(table: &CellTable, spec: &ConstraintSpec) -> Result<IpSolution> {
    solve_with(table, spec, &SolveOptions::default())
}

pub fn solve_with(table: &CellTable, spec: &ConstraintSpec, options: &SolveOptions) -> Result<IpSolution> {
    values::check_strata(table, spec)?;
    let model = CountModel::build(table, spec, options.forbid_abstain_label)?;
    let result = branch_and_bound(&model.ip, &model.starts(), options.max_nodes);
    let mut solution = finish(result, table, spec, |x| model.counts(x))?;
    if solution.status == SolveStatus::Infeasible && options.diagnose {
        let budget = (options.max_nodes / 10).max(1_000);
        for family in Family::ALL {
            if !model.ip.has_family(family) {
                continue;
            }
            let relaxed = model.ip.without(family);
            let r = branch_and_bound(&relaxed, &model.starts(), budget);
            if r.x.is_some() {
                solution.relaxable_families.push(family);
            }
        }
    }
    Ok(solution)
}

/// Turns a branch-and-bound result into a verified solution.
pub(crate) fn finish(
    result: BbResult,
    table: &CellTable,
    spec: &ConstraintSpec,
    to_counts: impl Fn(&[i64]) -> CellCounts,
) -> Result<IpSolution> {
    let status = match result.status {
        BbStatus::Optimal => SolveStatus::Optimal,
        BbStatus::BestEffort => SolveStatus::FeasibleBestEffort,
        BbStatus::Infeasible => return Ok(IpSolution::infeasible(result.nodes)),
        BbStatus::NoIncumbent => return Err(FanError::SolverLimit { nodes: result.nodes }),
    };
    let x = result.x.expect("feasible result carries a point");
    let counts = to_counts(&x);
    let objective = counts_objective(&counts, table)?;
    let report = constraint_values(&counts, table, spec)?;
    if !report.is_feasible() || result.objective != Some(objective as i64) {
        return Err(FanError::domain(format!(
            "solver returned a point that fails exact verification: {:?}",
            report.violations()
        )));
    }
    Ok(IpSolution {
        status,
        objective: Some(objective),
        counts: Some(counts),
        constraint_report: Some(report),
        gap: (status == SolveStatus::FeasibleBestEffort).then_some(objective as f64 - result.bound),
        nodes: result.nodes,
        relaxable_families: Vec::new(),
    })
}

/// Recomputes every constraint of a solution; empty exactly when it is feasible.
pub fn verify_solution(
    solution: &IpSolution,
    table: &CellTable,
    spec: &ConstraintSpec,
) -> Result<Vec<ConstraintValue>> {
    match &solution.counts {
        Some(counts) => verify_counts(counts, table, spec),
        None => Err(FanError::domain("an infeasible solution has no counts to verify")),
    }
}

#[cfg(test)]
mod tests;
