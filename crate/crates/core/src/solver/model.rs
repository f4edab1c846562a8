//! Integer linear programs with exactly integral rows.

use std::collections::BTreeMap;

use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};

use super::values::Family;
use crate::exact::{denominator_lcm, int, Rational};

/// Affine expression `constant + sum coef * x_var` with rational coefficients.
#[derive(Debug, Clone, Default)]
pub(crate) struct LinExpr {
    terms: BTreeMap<usize, Rational>,
    constant: Rational,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(value: Rational) -> Self {
        Self {
            terms: BTreeMap::new(),
            constant: value,
        }
    }

    pub fn add_var(&mut self, var: usize, coef: &Rational) {
        let entry = self.terms.entry(var).or_insert_with(Rational::zero);
        *entry += coef;
        if entry.is_zero() {
            self.terms.remove(&var);
        }
    }

    pub fn add_const(&mut self, value: &Rational) {
        self.constant += value;
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &LinExpr, scale: &Rational) {
        for (&v, c) in &other.terms {
            self.add_var(v, &(c * scale));
        }
        self.constant += &other.constant * scale;
    }

    pub fn scaled(&self, scale: &Rational) -> LinExpr {
        let mut out = LinExpr::new();
        out.add_scaled(self, scale);
        out
    }

    pub fn minus(&self, other: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        out.add_scaled(other, &int(-1));
        out
    }

    pub fn constant_part(&self) -> &Rational {
        &self.constant
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, &Rational)> {
        self.terms.iter().map(|(&v, c)| (v, c))
    }
}

/// `sum coef * x <= rhs` over integers. Coefficients are wide enough for
/// parameters with 17 significant digits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct IntRow {
    pub coefs: Vec<(usize, i128)>,
    pub rhs: i128,
    pub family: Option<Family>,
}

impl IntRow {
    pub fn holds(&self, x: &[i64]) -> bool {
        let lhs: i128 = self.coefs.iter().map(|&(v, c)| c * x[v] as i128).sum();
        lhs <= self.rhs
    }

    /// Row for `expr <= bound`, with coefficients scaled to coprime integers
    /// and the right-hand side rounded down. `None` when the row is vacuous.
    pub fn at_most(expr: &LinExpr, bound: &Rational, family: Option<Family>) -> Option<IntRow> {
        let rhs = bound - expr.constant_part();
        let coefs: Vec<(usize, &Rational)> = expr.terms().collect();
        if coefs.is_empty() {
            if rhs >= Rational::zero() {
                return None;
            }
            return Some(IntRow {
                coefs: Vec::new(),
                rhs: -1,
                family,
            });
        }
        let scale = Rational::from_integer(denominator_lcm(coefs.iter().map(|(_, c)| *c)));
        let ints: Vec<(usize, num_bigint::BigInt)> =
            coefs.iter().map(|&(v, c)| (v, (c * &scale).to_integer())).collect();
        let gcd = ints.iter().fold(num_bigint::BigInt::zero(), |g, (_, c)| g.gcd(c));
        let gcd = Rational::from_integer(gcd);
        let rhs = (rhs * &scale / &gcd).floor().to_integer();
        Some(IntRow {
            coefs: ints
                .into_iter()
                .map(|(v, c)| {
                    let c = Rational::from_integer(c) / &gcd;
                    (v, c.to_integer().to_i128().expect("coefficient fits in i128"))
                })
                .collect(),
            rhs: rhs.to_i128().expect("right-hand side fits in i128"),
            family,
        })
    }

    pub fn at_least(expr: &LinExpr, bound: &Rational, family: Option<Family>) -> Option<IntRow> {
        IntRow::at_most(&expr.scaled(&int(-1)), &-bound, family)
    }
}

/// Minimize `objective . x + objective_constant` over integer `x` within
/// bounds subject to every row.
#[derive(Debug, Clone)]
pub struct IntegerProgram {
    pub(crate) objective: Vec<i64>,
    pub(crate) objective_constant: i64,
    pub(crate) rows: Vec<IntRow>,
    pub(crate) lower: Vec<i64>,
    pub(crate) upper: Vec<i64>,
    /// Branching class; fractional variables of a higher class branch first.
    pub(crate) priority: Vec<u8>,
    /// Aggregate variables and the expressions they equal.
    definitions: Vec<(usize, LinExpr)>,
}

impl IntegerProgram {
    pub(crate) fn new(n_vars: usize) -> Self {
        Self {
            objective: vec![0; n_vars],
            objective_constant: 0,
            rows: Vec::new(),
            lower: vec![0; n_vars],
            upper: vec![0; n_vars],
            priority: vec![0; n_vars],
            definitions: Vec::new(),
        }
    }

    /// Introduces an integer variable equal to `expr` with branching
    /// `priority` and returns it as an expression. `expr` must have integral
    /// coefficients.
    pub(crate) fn aggregate(&mut self, expr: &LinExpr, lower: i64, upper: i64, priority: u8) -> LinExpr {
        let v = self.objective.len();
        self.objective.push(0);
        self.lower.push(lower);
        self.upper.push(upper);
        self.priority.push(priority);
        let mut diff = expr.clone();
        diff.add_var(v, &int(-1));
        let zero = Rational::zero();
        self.push(IntRow::at_most(&diff, &zero, None));
        self.push(IntRow::at_least(&diff, &zero, None));
        self.definitions.push((v, expr.clone()));
        let mut out = LinExpr::new();
        out.add_var(v, &int(1));
        out
    }

    /// Extends a point over the non-aggregate variables with the values of
    /// every aggregate.
    pub(crate) fn complete(&self, x: &[i64]) -> Vec<i64> {
        let mut out = x.to_vec();
        out.resize(self.n_vars(), 0);
        for (v, expr) in &self.definitions {
            let mut value = expr.constant_part().clone();
            for (u, c) in expr.terms() {
                value += c * int(out[u]);
            }
            out[*v] = value.floor().to_integer().to_i64().unwrap_or(i64::MAX);
        }
        out
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Sets the objective from an expression whose coefficients are integers.
    pub(crate) fn set_objective(&mut self, expr: &LinExpr) {
        self.objective = vec![0; self.n_vars()];
        for (v, c) in expr.terms() {
            assert!(c.is_integer(), "objective coefficients must be integral");
            self.objective[v] = c.to_integer().to_i64().expect("objective coefficient fits");
        }
        let k = expr.constant_part();
        assert!(k.is_integer(), "objective constant must be integral");
        self.objective_constant = k.to_integer().to_i64().expect("objective constant fits");
    }

    pub(crate) fn push(&mut self, row: Option<IntRow>) {
        if let Some(row) = row {
            self.rows.push(row);
        }
    }

    pub fn value(&self, x: &[i64]) -> i64 {
        self.objective_constant + self.objective.iter().zip(x).map(|(c, v)| c * v).sum::<i64>()
    }

    pub fn is_feasible(&self, x: &[i64]) -> bool {
        x.len() == self.n_vars()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
            && self.rows.iter().all(|r| r.holds(x))
    }

    /// A copy without the rows of one constraint family.
    pub(crate) fn without(&self, family: Family) -> IntegerProgram {
        let mut out = self.clone();
        out.rows.retain(|r| r.family != Some(family));
        out
    }

    pub(crate) fn has_family(&self, family: Family) -> bool {
        self.rows.iter().any(|r| r.family == Some(family))
    }
}
