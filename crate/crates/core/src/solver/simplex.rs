//! Dense two-phase tableau simplex with Bland's rule.

const EPS: f64 = 1e-9;
const PHASE_ONE_TOL: f64 = 1e-7;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome {
    Optimal {
        x: Vec<f64>,
        value: f64,
    },
    Infeasible,
    Unbounded,
    /// Pivot budget exhausted.
    Stalled,
}

/// `min c.x` subject to `rows` (`a.x <= b`) and `lower <= x <= upper`.
pub(crate) fn solve_lp(c: &[f64], rows: &[(Vec<f64>, f64)], lower: &[f64], upper: &[f64]) -> LpOutcome {
    let n = c.len();
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        return LpOutcome::Infeasible;
    }
    // Fixed variables are substituted out; the rest shift to `0 <= y <= u - l`.
    let free: Vec<usize> = (0..n).filter(|&j| upper[j] > lower[j]).collect();
    let mut constraints: Vec<(Vec<f64>, f64)> = Vec::with_capacity(rows.len() + free.len());
    for (a, b) in rows {
        let shifted = b - a.iter().zip(lower).map(|(ai, li)| ai * li).sum::<f64>();
        let coefs: Vec<f64> = free.iter().map(|&j| a[j]).collect();
        let scale = coefs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale < EPS {
            if shifted < -EPS {
                return LpOutcome::Infeasible;
            }
            continue;
        }
        constraints.push((coefs.iter().map(|v| v / scale).collect(), shifted / scale + EPS));
    }
    for (k, &j) in free.iter().enumerate() {
        let mut unit = vec![0.0; free.len()];
        unit[k] = 1.0;
        constraints.push((unit, upper[j] - lower[j]));
    }
    let cost: Vec<f64> = free.iter().map(|&j| c[j]).collect();
    let base = c.iter().zip(lower).map(|(ci, li)| ci * li).sum::<f64>();

    match Tableau::solve(&cost, &constraints) {
        LpOutcome::Optimal { x: y, value } => {
            let mut x = lower.to_vec();
            for (k, &j) in free.iter().enumerate() {
                x[j] += y[k];
            }
            LpOutcome::Optimal { x, value: value + base }
        }
        other => other,
    }
}

struct Tableau {
    /// `m` rows of `n_cols + 1` entries, the last being the right-hand side.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_cols: usize,
}

impl Tableau {
    /// `min cost.y` subject to `a.y <= b`, `y >= 0`.
    fn solve(cost: &[f64], constraints: &[(Vec<f64>, f64)]) -> LpOutcome {
        let n = cost.len();
        let m = constraints.len();
        let negative: Vec<usize> = (0..m).filter(|&i| constraints[i].1 < 0.0).collect();
        let n_art = negative.len();
        let n_cols = n + m + n_art;
        let mut t = vec![vec![0.0; n_cols + 1]; m];
        let mut basis = vec![0; m];
        let mut art = 0;
        for (i, (a, b)) in constraints.iter().enumerate() {
            let sign = if *b < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                t[i][j] = sign * a[j];
            }
            t[i][n + i] = sign;
            t[i][n_cols] = sign * b;
            if *b < 0.0 {
                t[i][n + m + art] = 1.0;
                basis[i] = n + m + art;
                art += 1;
            } else {
                basis[i] = n + i;
            }
        }
        let mut tab = Tableau { t, basis, n_cols };

        if n_art > 0 {
            let mut phase_one = vec![0.0; n_cols];
            for c in phase_one.iter_mut().skip(n + m) {
                *c = 1.0;
            }
            match tab.optimize(&phase_one, n_cols) {
                Ok(()) => {}
                Err(outcome) => return outcome,
            }
            if tab.objective(&phase_one) > PHASE_ONE_TOL {
                return LpOutcome::Infeasible;
            }
            tab.evict_artificials(n + m);
        }

        let mut phase_two = vec![0.0; n_cols];
        phase_two[..n].copy_from_slice(cost);
        if let Err(outcome) = tab.optimize(&phase_two, n + m) {
            return outcome;
        }
        let mut y = vec![0.0; n];
        for (i, &b) in tab.basis.iter().enumerate() {
            if b < n {
                y[b] = tab.t[i][n_cols].max(0.0);
            }
        }
        let value = cost.iter().zip(&y).map(|(c, v)| c * v).sum();
        LpOutcome::Optimal { x: y, value }
    }

    fn objective(&self, cost: &[f64]) -> f64 {
        self.basis
            .iter()
            .enumerate()
            .map(|(i, &b)| cost[b] * self.t[i][self.n_cols])
            .sum()
    }

    /// Pivots until no column below `enter_limit` has negative reduced cost.
    fn optimize(&mut self, cost: &[f64], enter_limit: usize) -> Result<(), LpOutcome> {
        let m = self.t.len();
        for _ in 0..MAX_PIVOTS {
            let mut entering = None;
            for j in 0..enter_limit {
                if self.basis.contains(&j) {
                    continue;
                }
                let reduced = cost[j] - (0..m).map(|i| cost[self.basis[i]] * self.t[i][j]).sum::<f64>();
                if reduced < -EPS {
                    entering = Some(j);
                    break;
                }
            }
            let Some(j) = entering else { return Ok(()) };

            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.t[i][j];
                if a > EPS {
                    let ratio = self.t[i][self.n_cols] / a;
                    leaving = match leaving {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - EPS || (ratio <= best + EPS && self.basis[i] < self.basis[r]) {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((i, _)) = leaving else {
                return Err(LpOutcome::Unbounded);
            };
            self.pivot(i, j);
        }
        Err(LpOutcome::Stalled)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f.abs() > 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Replaces basic artificial columns (all at zero) by real ones where
    /// possible; rows where that fails are redundant and keep a zero
    /// artificial that can never re-enter.
    fn evict_artificials(&mut self, first_artificial: usize) {
        for i in 0..self.t.len() {
            if self.basis[i] < first_artificial {
                continue;
            }
            if let Some(j) = (0..first_artificial).find(|&j| !self.basis.contains(&j) && self.t[i][j].abs() > EPS) {
                self.pivot(i, j);
            }
        }
    }
}
