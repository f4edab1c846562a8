//! Exhaustive search over per-sample `(omega, f)` assignments.

use num_traits::Signed;

use super::spec::{ConstraintSpec, Fairness, NonTrivialityScope};
use super::values::{check_strata, constraint_values};
use super::{IpSolution, SolveStatus};
use crate::cells::{counts_from_decisions, CellKey, CellTable, Decision, DecisionVector};
use crate::exact::{clamp01, decimal, int, ratio, Rational};
use crate::{FanError, Result};

pub const DEFAULT_BRUTE_FORCE_CAP: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BruteForceOptions {
    /// Largest accepted sample count.
    pub cap: usize,
    /// How many optimal assignments to collect.
    pub max_optima: usize,
}

impl Default for BruteForceOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_BRUTE_FORCE_CAP,
            max_optima: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub solution: IpSolution,
    /// Optimal assignments in enumeration order.
    pub optima: Vec<DecisionVector>,
    pub assignments_checked: u64,
}

/// Which per-group tally a disparity or abstention-gap table compares.
#[derive(Clone, Copy)]
enum Tally {
    Accepted,
    TruePositives,
    TrueNegatives,
    Abstained(usize),
}

/// Admissible `(count_z, count_w)` pairs for one group pair.
struct PairTable {
    z: usize,
    w: usize,
    tally: Tally,
    width: usize,
    ok: Vec<bool>,
}

#[derive(Clone, Default)]
struct GroupState {
    abstained: [usize; 2],
    accepted: usize,
    true_positives: usize,
    true_negatives: usize,
    errors_predicted: usize,
    errors_all: usize,
}

impl GroupState {
    fn get(&self, tally: Tally) -> usize {
        match tally {
            Tally::Accepted => self.accepted,
            Tally::TruePositives => self.true_positives,
            Tally::TrueNegatives => self.true_negatives,
            Tally::Abstained(y) => self.abstained[y],
        }
    }
}

struct Search<'a> {
    keys: &'a [CellKey],
    choices: Vec<Decision>,
    sizes: Vec<usize>,
    max_abstain: Vec<usize>,
    /// `max_errors[z][k]`: most errors allowed among `k` predicted samples.
    max_errors: Vec<Vec<usize>>,
    pairs: Vec<PairTable>,
    error_floor: Option<(NonTrivialityScope, Vec<usize>)>,
    state: Vec<GroupState>,
    current: Vec<Decision>,
    partial_objective: usize,
    best: Option<usize>,
    optima: Vec<DecisionVector>,
    max_optima: usize,
    checked: u64,
}

/// Enumerates every assignment of `(omega, f)` to the samples.
///
/// When no literal error floor is active, `f` on abstained samples affects
/// neither the objective nor any constraint, so those pairs of assignments
/// are visited once.
pub fn brute_force_solve(
    keys: &[CellKey],
    n_groups: usize,
    spec: &ConstraintSpec,
    options: &BruteForceOptions,
) -> Result<BruteForceResult> {
    if keys.len() > options.cap {
        return Err(FanError::TooLarge {
            n: keys.len(),
            cap: options.cap,
        });
    }
    let table = CellTable::from_keys(keys, n_groups)?;
    spec.validate(n_groups)?;
    check_strata(&table, spec)?;

    let mut sizes = vec![0usize; n_groups];
    let mut label_sizes = vec![[0usize; 2]; n_groups];
    let mut baseline_errors = vec![0usize; n_groups];
    for k in keys {
        sizes[k.group] += 1;
        label_sizes[k.group][k.label as usize] += 1;
        baseline_errors[k.group] += usize::from(k.label != k.pred);
    }

    let largest_within = |limit: &Rational, n: usize| (0..=n).rev().find(|&k| int(k as i64) <= *limit);
    let mut max_abstain = Vec::new();
    let mut max_errors = Vec::new();
    for z in 0..n_groups {
        let n = sizes[z];
        let delta = decimal(spec.delta[z])?;
        max_abstain.push(largest_within(&(delta * int(n as i64)), n).unwrap_or(0));
        let cap = clamp01((int(1) + decimal(spec.eta[z])?) * ratio(baseline_errors[z] as u64, n as u64));
        let row = (0..=n)
            .map(|k| largest_within(&(&cap * int(k as i64)), k).unwrap_or(0))
            .collect();
        max_errors.push(row);
    }

    let epsilon = decimal(spec.epsilon)?;
    let mut pairs = Vec::new();
    let denominators = |tally: Tally, z: usize| match tally {
        Tally::Accepted => sizes[z],
        Tally::TruePositives => label_sizes[z][1],
        Tally::TrueNegatives => label_sizes[z][0],
        Tally::Abstained(y) => label_sizes[z][y],
    };
    let mut compared: Vec<(Tally, Rational)> = match spec.fairness {
        Fairness::Dp => vec![(Tally::Accepted, epsilon.clone())],
        Fairness::Eop => vec![(Tally::TruePositives, epsilon.clone())],
        Fairness::Eod => vec![
            (Tally::TruePositives, epsilon.clone()),
            (Tally::TrueNegatives, epsilon.clone()),
        ],
    };
    for y in 0..2 {
        if let Some(s) = spec.sigma[y] {
            compared.push((Tally::Abstained(y), decimal(s)?));
        }
    }
    for z in 0..n_groups {
        for w in z + 1..n_groups {
            for (tally, bound) in &compared {
                let (dz, dw) = (denominators(*tally, z), denominators(*tally, w));
                let mut ok = Vec::with_capacity((dz + 1) * (dw + 1));
                for a in 0..=dz {
                    for b in 0..=dw {
                        let gap = ratio(a as u64, dz as u64) - ratio(b as u64, dw as u64);
                        ok.push(gap.abs() <= *bound);
                    }
                }
                pairs.push(PairTable {
                    z,
                    w,
                    tally: *tally,
                    width: dw + 1,
                    ok,
                });
            }
        }
    }

    let error_floor = match &spec.non_triviality {
        None => None,
        Some(nt) => {
            let floors = (0..n_groups)
                .map(|z| {
                    let need = match &nt.floors {
                        None => ratio(baseline_errors[z] as u64, 1),
                        Some(f) => decimal(f[z])? * int(sizes[z] as i64),
                    };
                    Ok((0..=sizes[z] + 1)
                        .find(|&k| int(k as i64) >= need)
                        .unwrap_or(sizes[z] + 1))
                })
                .collect::<Result<Vec<_>>>()?;
            Some((nt.scope, floors))
        }
    };

    let mut choices = vec![Decision::KEEP, Decision::FLIP, Decision::ABSTAIN];
    if spec.literal_non_triviality() {
        choices.push(Decision {
            omega: false,
            flip: true,
        });
    }

    let mut search = Search {
        keys,
        choices,
        sizes,
        max_abstain,
        max_errors,
        pairs,
        error_floor,
        state: vec![GroupState::default(); n_groups],
        current: Vec::with_capacity(keys.len()),
        partial_objective: 0,
        best: None,
        optima: Vec::new(),
        max_optima: options.max_optima.max(1),
        checked: 0,
    };
    search.descend(0);

    let solution = match search.optima.first() {
        None => IpSolution::infeasible(0),
        Some(first) => {
            let counts = counts_from_decisions(first, &table)?;
            let report = constraint_values(&counts, &table, spec)?;
            IpSolution {
                status: SolveStatus::Optimal,
                objective: search.best.map(|b| b as u64),
                counts: Some(counts),
                constraint_report: Some(report),
                gap: None,
                nodes: 0,
                relaxable_families: Vec::new(),
            }
        }
    };
    Ok(BruteForceResult {
        solution,
        optima: search.optima,
        assignments_checked: search.checked,
    })
}

impl Search<'_> {
    fn descend(&mut self, i: usize) {
        if let Some(best) = self.best {
            let worse = if self.max_optima > 1 {
                self.partial_objective > best
            } else {
                self.partial_objective >= best
            };
            if worse {
                return;
            }
        }
        if i == self.keys.len() {
            self.leaf();
            return;
        }
        let key = self.keys[i];
        for c in 0..self.choices.len() {
            let d = self.choices[c];
            let label = d.adjusted(key.pred);
            let wrong = usize::from(label != key.label);
            let s = &mut self.state[key.group];
            if d.omega {
                s.accepted += usize::from(label == 1);
                if key.label == 1 {
                    s.true_positives += usize::from(label == 1);
                } else {
                    s.true_negatives += usize::from(label == 0);
                }
                s.errors_predicted += wrong;
                self.partial_objective += wrong;
            } else {
                s.abstained[key.label as usize] += 1;
            }
            s.errors_all += wrong;
            let abstained = s.abstained[0] + s.abstained[1];

            if abstained <= self.max_abstain[key.group] {
                self.current.push(d);
                self.descend(i + 1);
                self.current.pop();
            }

            let s = &mut self.state[key.group];
            if d.omega {
                s.accepted -= usize::from(label == 1);
                if key.label == 1 {
                    s.true_positives -= usize::from(label == 1);
                } else {
                    s.true_negatives -= usize::from(label == 0);
                }
                s.errors_predicted -= wrong;
                self.partial_objective -= wrong;
            } else {
                s.abstained[key.label as usize] -= 1;
            }
            s.errors_all -= wrong;
        }
    }

    fn leaf(&mut self) {
        self.checked += 1;
        for (z, s) in self.state.iter().enumerate() {
            let predicted = self.sizes[z] - s.abstained[0] - s.abstained[1];
            if s.errors_predicted > self.max_errors[z][predicted] {
                return;
            }
            if let Some((scope, floors)) = &self.error_floor {
                let errors = match scope {
                    NonTrivialityScope::AllSamples => s.errors_all,
                    NonTrivialityScope::Predicted => s.errors_predicted,
                };
                if errors < floors[z] {
                    return;
                }
            }
        }
        for p in &self.pairs {
            let a = self.state[p.z].get(p.tally);
            let b = self.state[p.w].get(p.tally);
            if !p.ok[a * p.width + b] {
                return;
            }
        }
        let value = self.partial_objective;
        if self.best.is_none_or(|b| value < b) {
            self.best = Some(value);
            self.optima.clear();
        }
        if self.optima.len() < self.max_optima {
            self.optima.push(DecisionVector {
                decisions: self.current.clone(),
            });
        }
    }
}
