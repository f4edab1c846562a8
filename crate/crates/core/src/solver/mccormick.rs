//! The per-sample program with the product `u = y_hat * omega` linearized by
//! the four McCormick inequalities.

use super::bnb::branch_and_bound;
use super::count_ip::{RATE, TALLY};
use super::model::{IntRow, IntegerProgram, LinExpr};
use super::spec::{Bounds, ConstraintSpec, Fairness, NonTrivialityScope};
use super::values::{check_strata, Family};
use super::{finish, IpSolution, SolveOptions};
use crate::cells::{counts_from_decisions, CellKey, CellTable, Decision, DecisionVector};
use crate::exact::{int, ratio};
use crate::{Label, Result};

/// Variables `omega_n`, `f_n`, `u_n` at indices `3n`, `3n + 1`, `3n + 2`.
#[derive(Debug, Clone)]
pub struct LinearizedSystem {
    preds: Vec<Label>,
    rows: Vec<IntRow>,
}

fn omega(n: usize) -> usize {
    3 * n
}

fn flip(n: usize) -> usize {
    3 * n + 1
}

fn product(n: usize) -> usize {
    3 * n + 2
}

/// `y_hat_n = pred (1 - f) + (1 - pred) f` as an affine expression.
fn adjusted(pred: Label, n: usize) -> LinExpr {
    if pred == 1 {
        let mut e = LinExpr::constant(int(1));
        e.add_var(flip(n), &int(-1));
        e
    } else {
        let mut e = LinExpr::new();
        e.add_var(flip(n), &int(1));
        e
    }
}

fn var(v: usize) -> LinExpr {
    let mut e = LinExpr::new();
    e.add_var(v, &int(1));
    e
}

pub fn mccormick_linearize(pred_labels: &[Label]) -> LinearizedSystem {
    let mut rows = Vec::new();
    for (n, &pred) in pred_labels.iter().enumerate() {
        let u = var(product(n));
        let w = var(omega(n));
        let y = adjusted(pred, n);
        let zero = int(0);
        // u >= 0, u <= omega, u <= y_hat, u >= y_hat + omega - 1
        rows.extend(IntRow::at_least(&u, &zero, None));
        rows.extend(IntRow::at_most(&u.minus(&w), &zero, None));
        rows.extend(IntRow::at_most(&u.minus(&y), &zero, None));
        let mut lower = y.clone();
        lower.add_scaled(&w, &int(1));
        lower.add_const(&int(-1));
        rows.extend(IntRow::at_least(&u.minus(&lower), &zero, None));
    }
    LinearizedSystem {
        preds: pred_labels.to_vec(),
        rows,
    }
}

impl LinearizedSystem {
    pub fn n_samples(&self) -> usize {
        self.preds.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Whether a 0/1 assignment satisfies every row.
    pub fn holds(&self, omega: &[u8], flip: &[u8], u: &[u8]) -> bool {
        let mut x = vec![0i64; 3 * self.preds.len()];
        for n in 0..self.preds.len() {
            x[self::omega(n)] = omega[n] as i64;
            x[self::flip(n)] = flip[n] as i64;
            x[product(n)] = u[n] as i64;
        }
        self.rows.iter().all(|r| r.holds(&x))
    }
}

/// Solves the per-sample program through its McCormick linearization.
pub fn solve_linearized(
    keys: &[CellKey],
    n_groups: usize,
    spec: &ConstraintSpec,
    options: &SolveOptions,
) -> Result<IpSolution> {
    let table = CellTable::from_keys(keys, n_groups)?;
    check_strata(&table, spec)?;
    let sizes: Vec<usize> = (0..n_groups).map(|z| table.group_size(z)).collect();
    let errors: Vec<usize> = (0..n_groups).map(|z| table.baseline_errors(z)).collect();
    let bounds = Bounds::new(spec, &sizes, &errors)?;

    let preds: Vec<Label> = keys.iter().map(|k| k.pred).collect();
    let system = mccormick_linearize(&preds);
    let mut ip = IntegerProgram::new(3 * keys.len());
    ip.rows = system.rows;
    for (n, k) in keys.iter().enumerate() {
        ip.upper[omega(n)] = 1;
        ip.upper[flip(n)] = 1;
        ip.upper[product(n)] = 1;
        if options.forbid_abstain_label == Some(k.label) {
            ip.lower[omega(n)] = 1;
        }
    }

    #[derive(Default, Clone)]
    struct Group {
        predicted: LinExpr,
        abstained: [LinExpr; 2],
        accepted: LinExpr,
        true_positives: LinExpr,
        true_negatives: LinExpr,
        errors_predicted: LinExpr,
        errors_all: LinExpr,
    }
    let mut groups = vec![Group::default(); n_groups];
    for (n, k) in keys.iter().enumerate() {
        let g = &mut groups[k.group];
        let w = var(omega(n));
        let u = var(product(n));
        let w_minus_u = w.minus(&u);
        let one = int(1);
        g.predicted.add_scaled(&w, &one);
        let mut abst = LinExpr::constant(int(1));
        abst.add_var(omega(n), &int(-1));
        g.abstained[k.label as usize].add_scaled(&abst, &one);
        g.accepted.add_scaled(&u, &one);
        let y_hat = adjusted(k.pred, n);
        if k.label == 1 {
            g.true_positives.add_scaled(&u, &one);
            g.errors_predicted.add_scaled(&w_minus_u, &one);
            g.errors_all.add_scaled(&LinExpr::constant(int(1)).minus(&y_hat), &one);
        } else {
            g.true_negatives.add_scaled(&w_minus_u, &one);
            g.errors_predicted.add_scaled(&u, &one);
            g.errors_all.add_scaled(&y_hat, &one);
        }
    }

    for (z, g) in groups.iter_mut().enumerate() {
        let n = sizes[z] as i64;
        let [a0, a1] = &mut g.abstained;
        for (e, priority) in [
            (&mut g.predicted, TALLY),
            (a0, RATE),
            (a1, RATE),
            (&mut g.accepted, RATE),
            (&mut g.true_positives, RATE),
            (&mut g.true_negatives, RATE),
            (&mut g.errors_predicted, TALLY),
            (&mut g.errors_all, TALLY),
        ] {
            *e = ip.aggregate(e, 0, n, priority);
        }
    }

    let mut objective = LinExpr::new();
    for g in &groups {
        objective.add_scaled(&g.errors_predicted, &int(1));
    }
    ip.set_objective(&objective);

    for (z, g) in groups.iter().enumerate() {
        let mut abst = g.abstained[0].clone();
        abst.add_scaled(&g.abstained[1], &int(1));
        ip.push(IntRow::at_most(
            &abst,
            &int(bounds.max_abstain[z]),
            Some(Family::Abstention),
        ));
        let mut harm = g.errors_predicted.clone();
        harm.add_scaled(&g.predicted, &-bounds.error_rate_cap[z].clone());
        ip.push(IntRow::at_most(&harm, &int(0), Some(Family::NoHarm)));
    }
    let rates = |g: &Group, z: usize| -> Vec<LinExpr> {
        let per = |e: &LinExpr, d: usize| e.scaled(&ratio(1, d as u64));
        match spec.fairness {
            Fairness::Dp => vec![per(&g.accepted, sizes[z])],
            Fairness::Eop => vec![per(&g.true_positives, table.label_count(z, 1))],
            Fairness::Eod => vec![
                per(&g.true_positives, table.label_count(z, 1)),
                per(&g.true_negatives, table.label_count(z, 0)),
            ],
        }
    };
    for z in 0..n_groups {
        for w in 0..n_groups {
            if z == w {
                continue;
            }
            let (rz, rw) = (rates(&groups[z], z), rates(&groups[w], w));
            for (a, b) in rz.iter().zip(&rw) {
                ip.push(IntRow::at_most(&a.minus(b), &bounds.epsilon, Some(Family::Disparity)));
            }
            for (y, sigma) in bounds.sigma.iter().enumerate() {
                if let Some(sigma) = sigma {
                    let a = groups[z].abstained[y].scaled(&ratio(1, table.label_count(z, y as Label) as u64));
                    let b = groups[w].abstained[y].scaled(&ratio(1, table.label_count(w, y as Label) as u64));
                    ip.push(IntRow::at_most(&a.minus(&b), sigma, Some(Family::EqualAbstention)));
                }
            }
        }
    }
    if let (Some(nt), Some(floors)) = (&spec.non_triviality, &bounds.error_floor) {
        for (z, g) in groups.iter().enumerate() {
            let errors = match nt.scope {
                NonTrivialityScope::AllSamples => &g.errors_all,
                NonTrivialityScope::Predicted => &g.errors_predicted,
            };
            ip.push(IntRow::at_least(errors, &int(floors[z]), Some(Family::NonTriviality)));
        }
    }

    let start = |flip_wrong: bool| -> Vec<i64> {
        let mut x = vec![0; 3 * keys.len()];
        for (n, k) in keys.iter().enumerate() {
            let f = flip_wrong && k.label != k.pred;
            x[omega(n)] = 1;
            x[flip(n)] = i64::from(f);
            x[product(n)] = i64::from(k.pred ^ u8::from(f));
        }
        x
    };
    let result = branch_and_bound(&ip, &[start(false), start(true)], options.max_nodes);
    let decisions = |x: &[i64]| DecisionVector {
        decisions: (0..keys.len())
            .map(|n| Decision {
                omega: x[omega(n)] == 1,
                flip: x[flip(n)] == 1,
            })
            .collect(),
    };
    finish(result, &table, spec, |x| {
        counts_from_decisions(&decisions(x), &table).expect("decisions match the table")
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_is_forced_for_every_binary_assignment() {
        for pred in 0..2u8 {
            let sys = mccormick_linearize(&[pred]);
            for w in 0..2u8 {
                for f in 0..2u8 {
                    let y_hat = pred ^ f;
                    for u in 0..2u8 {
                        assert_eq!(
                            sys.holds(&[w], &[f], &[u]),
                            u == y_hat * w,
                            "pred={pred} w={w} f={f} u={u}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn four_rows_per_sample() {
        assert_eq!(mccormick_linearize(&[0, 1, 1]).n_rows(), 12);
    }
}
