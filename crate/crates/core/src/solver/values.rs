use num_traits::Signed;
use serde::{Deserialize, Serialize};

use super::spec::{Bounds, ConstraintSpec, Fairness, NonTrivialityScope};
use crate::cells::{CellCounts, CellKey, CellTable};
use crate::exact::{int, ratio, to_f64, Rational};
use crate::{FanError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Disparity,
    Abstention,
    NoHarm,
    EqualAbstention,
    NonTriviality,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Disparity,
        Family::Abstention,
        Family::NoHarm,
        Family::EqualAbstention,
        Family::NonTriviality,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    AtMost,
    AtLeast,
}

/// One evaluated constraint: `value <= bound` or `value >= bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintValue {
    pub family: Family,
    pub name: String,
    pub sense: Sense,
    #[serde(with = "crate::exact::text")]
    pub value: Rational,
    #[serde(with = "crate::exact::text")]
    pub bound: Rational,
    /// Non-negative exactly when satisfied.
    #[serde(with = "crate::exact::text")]
    pub slack: Rational,
    pub slack_approx: f64,
}

impl ConstraintValue {
    fn new(family: Family, name: String, sense: Sense, value: Rational, bound: Rational) -> Self {
        let slack = match sense {
            Sense::AtMost => &bound - &value,
            Sense::AtLeast => &value - &bound,
        };
        Self {
            family,
            name,
            sense,
            slack_approx: to_f64(&slack),
            value,
            bound,
            slack,
        }
    }

    pub fn satisfied(&self) -> bool {
        !self.slack.is_negative()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub entries: Vec<ConstraintValue>,
}

impl ConstraintReport {
    pub fn violations(&self) -> Vec<ConstraintValue> {
        self.entries.iter().filter(|e| !e.satisfied()).cloned().collect()
    }

    pub fn is_feasible(&self) -> bool {
        self.entries.iter().all(ConstraintValue::satisfied)
    }

    pub fn family(&self, family: Family) -> impl Iterator<Item = &ConstraintValue> {
        self.entries.iter().filter(move |e| e.family == family)
    }
}

/// Per-group tallies implied by cell counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroupTallies {
    pub size: usize,
    pub label_sizes: [usize; 2],
    pub abstained: [usize; 2],
    /// Non-abstained samples predicted 1.
    pub accepted: usize,
    pub true_positives: usize,
    pub true_negatives: usize,
    pub errors_predicted: usize,
    /// Errors over all samples using `pred xor f`, abstained included.
    pub errors_all: usize,
}

impl GroupTallies {
    pub fn non_abstained(&self) -> usize {
        self.size - self.abstained[0] - self.abstained[1]
    }
}

pub fn group_tallies(counts: &CellCounts, table: &CellTable) -> Result<Vec<GroupTallies>> {
    counts.validate(table)?;
    let mut out = vec![GroupTallies::default(); table.n_groups()];
    for (c, n) in counts.cells.iter().enumerate() {
        let key = CellKey::from_index(c);
        let t = &mut out[key.group];
        let y = key.label as usize;
        t.size += n.total();
        t.label_sizes[y] += n.total();
        t.abstained[y] += n.abstain;
        // Samples whose emitted label is 1: kept positives and flipped negatives.
        let ones = if key.pred == 1 { n.keep } else { n.flip };
        let zeros = n.keep + n.flip - ones;
        t.accepted += ones;
        if key.label == 1 {
            t.true_positives += ones;
        } else {
            t.true_negatives += zeros;
        }
        if key.baseline_wrong() {
            t.errors_predicted += n.keep;
            t.errors_all += n.keep + n.abstain - n.abstain_flip;
        } else {
            t.errors_predicted += n.flip;
            t.errors_all += n.flip + n.abstain_flip;
        }
    }
    Ok(out)
}

/// Rejects specs whose rates would divide by an empty stratum.
pub(crate) fn check_strata(table: &CellTable, spec: &ConstraintSpec) -> Result<()> {
    let g = table.n_groups();
    for z in 0..g {
        if table.group_size(z) == 0 {
            return Err(FanError::domain(format!("group {z} has no samples")));
        }
    }
    if g < 2 {
        return Ok(());
    }
    let mut needed: Vec<(u8, &str)> = match spec.fairness {
        Fairness::Dp => vec![],
        Fairness::Eop => vec![(1, "true positive rate")],
        Fairness::Eod => vec![(1, "true positive rate"), (0, "true negative rate")],
    };
    for y in 0..2u8 {
        if spec.sigma[y as usize].is_some() {
            needed.push((y, "equal abstention"));
        }
    }
    for (y, what) in needed {
        for z in 0..g {
            if table.label_count(z, y) == 0 {
                return Err(FanError::domain(format!(
                    "{what} needs samples with label {y} in group {z}, but stratum (group {z}, label {y}) is empty"
                )));
            }
        }
    }
    Ok(())
}

/// Rates compared across groups by the disparity constraints, with labels.
pub(crate) fn disparity_rates(fairness: Fairness, t: &GroupTallies) -> Vec<(&'static str, Rational)> {
    let rate = |num: usize, den: usize| ratio(num as u64, den as u64);
    match fairness {
        Fairness::Dp => vec![("acceptance", rate(t.accepted, t.size))],
        Fairness::Eop => vec![("tpr", rate(t.true_positives, t.label_sizes[1]))],
        Fairness::Eod => vec![
            ("tpr", rate(t.true_positives, t.label_sizes[1])),
            ("tnr", rate(t.true_negatives, t.label_sizes[0])),
        ],
    }
}

/// Evaluates every constraint of `spec` at `counts` with exact arithmetic.
pub fn constraint_values(counts: &CellCounts, table: &CellTable, spec: &ConstraintSpec) -> Result<ConstraintReport> {
    check_strata(table, spec)?;
    let tallies = group_tallies(counts, table)?;
    let sizes: Vec<usize> = tallies.iter().map(|t| t.size).collect();
    let errors: Vec<usize> = (0..table.n_groups()).map(|z| table.baseline_errors(z)).collect();
    let bounds = Bounds::new(spec, &sizes, &errors)?;
    let g = tallies.len();
    let mut entries = Vec::new();

    let rates: Vec<_> = tallies.iter().map(|t| disparity_rates(spec.fairness, t)).collect();
    for z in 0..g {
        for w in z + 1..g {
            for (k, (what, r)) in rates[z].iter().enumerate() {
                entries.push(ConstraintValue::new(
                    Family::Disparity,
                    format!("{} {what} gap g{z}-g{w}", spec.fairness.name()),
                    Sense::AtMost,
                    (r - &rates[w][k].1).abs(),
                    bounds.epsilon.clone(),
                ));
            }
        }
    }

    for (z, t) in tallies.iter().enumerate() {
        let delta = crate::exact::decimal(spec.delta[z])?;
        entries.push(ConstraintValue::new(
            Family::Abstention,
            format!("non-abstained fraction g{z}"),
            Sense::AtLeast,
            ratio(t.non_abstained() as u64, t.size as u64),
            int(1) - delta,
        ));
    }

    for (z, t) in tallies.iter().enumerate() {
        entries.push(ConstraintValue::new(
            Family::NoHarm,
            format!("errors among predicted g{z}"),
            Sense::AtMost,
            int(t.errors_predicted as i64),
            &bounds.error_rate_cap[z] * int(t.non_abstained() as i64),
        ));
    }

    for (y, sigma) in bounds.sigma.iter().enumerate() {
        let Some(sigma) = sigma else { continue };
        for z in 0..g {
            for w in z + 1..g {
                let rate = |t: &GroupTallies| ratio(t.abstained[y] as u64, t.label_sizes[y] as u64);
                entries.push(ConstraintValue::new(
                    Family::EqualAbstention,
                    format!("abstention gap label {y} g{z}-g{w}"),
                    Sense::AtMost,
                    (rate(&tallies[z]) - rate(&tallies[w])).abs(),
                    sigma.clone(),
                ));
            }
        }
    }

    if let (Some(nt), Some(floors)) = (&spec.non_triviality, &bounds.error_floor) {
        for (z, t) in tallies.iter().enumerate() {
            let errors = match nt.scope {
                NonTrivialityScope::AllSamples => t.errors_all,
                NonTrivialityScope::Predicted => t.errors_predicted,
            };
            entries.push(ConstraintValue::new(
                Family::NonTriviality,
                format!("error floor g{z}"),
                Sense::AtLeast,
                int(errors as i64),
                int(floors[z]),
            ));
        }
    }
    Ok(ConstraintReport { entries })
}

/// Violated constraints of a candidate; empty exactly when it is feasible.
pub fn verify_counts(counts: &CellCounts, table: &CellTable, spec: &ConstraintSpec) -> Result<Vec<ConstraintValue>> {
    Ok(constraint_values(counts, table, spec)?.violations())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::CellCount;

    fn counts_for(table: &CellTable, f: impl Fn(usize, usize) -> CellCount) -> CellCounts {
        CellCounts {
            cells: (0..table.n_cells()).map(|c| f(c, table.size(c))).collect(),
        }
    }

    /// Two groups of 10: group 0 accepts 3 (all correctly), group 1 accepts 7.
    fn example_one() -> CellTable {
        // cells per group: (y0,b0), (y0,b1), (y1,b0), (y1,b1)
        CellTable::from_sizes(&[7, 0, 0, 3, 3, 0, 0, 7]).unwrap()
    }

    fn dp_gap(report: &ConstraintReport) -> Rational {
        report.family(Family::Disparity).next().unwrap().value.clone()
    }

    #[test]
    fn abstaining_and_flipping_accepted_samples_lowers_acceptance() {
        let t = example_one();
        let spec = ConstraintSpec::uniform(Fairness::Dp, 0.0, 1.0, 1.0, 2);
        let keep = CellCounts::keep_all(&t);
        assert_eq!(dp_gap(&constraint_values(&keep, &t, &spec).unwrap()), ratio(4, 10));

        // abstain one positive-predicted sample of group 1: acceptance 0.6
        let abstain = counts_for(&t, |c, m| {
            if c == 7 {
                CellCount {
                    abstain: 1,
                    keep: m - 1,
                    ..CellCount::default()
                }
            } else {
                CellCount {
                    keep: m,
                    ..CellCount::default()
                }
            }
        });
        let tallies = group_tallies(&abstain, &t).unwrap();
        assert_eq!(ratio(tallies[1].accepted as u64, 10), ratio(6, 10));

        // additionally flip two: acceptance 0.4
        let flip = counts_for(&t, |c, m| {
            if c == 7 {
                CellCount {
                    abstain: 1,
                    flip: 2,
                    keep: m - 3,
                    ..CellCount::default()
                }
            } else {
                CellCount {
                    keep: m,
                    ..CellCount::default()
                }
            }
        });
        let tallies = group_tallies(&flip, &t).unwrap();
        assert_eq!(ratio(tallies[0].accepted as u64, 10), ratio(3, 10));
        assert_eq!(ratio(tallies[1].accepted as u64, 10), ratio(4, 10));
    }

    #[test]
    fn abstaining_negatives_keeps_acceptance_unconditioned() {
        let t = example_one();
        let counts = counts_for(&t, |c, m| {
            if c == 0 {
                CellCount {
                    abstain: 1,
                    keep: m - 1,
                    ..CellCount::default()
                }
            } else {
                CellCount {
                    keep: m,
                    ..CellCount::default()
                }
            }
        });
        let tallies = group_tallies(&counts, &t).unwrap();
        assert_eq!(ratio(tallies[0].accepted as u64, tallies[0].size as u64), ratio(3, 10));
    }

    #[test]
    fn identical_groups_have_zero_disparity() {
        let t = CellTable::from_sizes(&[2, 1, 1, 3, 2, 1, 1, 3]).unwrap();
        for fairness in Fairness::ALL {
            let spec = ConstraintSpec::uniform(fairness, 0.0, 0.0, 0.0, 2);
            let report = constraint_values(&CellCounts::keep_all(&t), &t, &spec).unwrap();
            assert!(report.family(Family::Disparity).all(|e| e.value == int(0)));
            assert!(report.is_feasible());
        }
    }

    #[test]
    fn empty_positive_stratum_is_named() {
        let t = CellTable::from_sizes(&[2, 1, 0, 0, 2, 1, 1, 3]).unwrap();
        let spec = ConstraintSpec::uniform(Fairness::Eop, 0.0, 0.0, 0.0, 2);
        match constraint_values(&CellCounts::keep_all(&t), &t, &spec) {
            Err(FanError::Domain(msg)) => assert!(msg.contains("group 0, label 1"), "{msg}"),
            other => panic!("expected a domain error, got {other:?}"),
        }
        let dp = ConstraintSpec::uniform(Fairness::Dp, 0.0, 0.0, 0.0, 2);
        assert!(constraint_values(&CellCounts::keep_all(&t), &t, &dp).is_ok());
    }

    #[test]
    fn abstention_and_no_harm_rows() {
        let t = CellTable::from_sizes(&[4, 1, 1, 4]).unwrap();
        let spec = ConstraintSpec::uniform(Fairness::Dp, 0.0, 0.1, 0.0, 1);
        let counts = counts_for(&t, |c, m| {
            if c == 1 {
                CellCount {
                    abstain: 1,
                    ..CellCount::default()
                }
            } else {
                CellCount {
                    keep: m,
                    ..CellCount::default()
                }
            }
        });
        let report = constraint_values(&counts, &t, &spec).unwrap();
        let abst = report.family(Family::Abstention).next().unwrap();
        assert_eq!(abst.value, ratio(9, 10));
        assert!(abst.satisfied());
        let harm = report.family(Family::NoHarm).next().unwrap();
        // one error left among 9 predicted; cap 0.2 * 9
        assert_eq!(harm.value, int(1));
        assert_eq!(harm.bound, ratio(18, 10));
    }

    #[test]
    fn literal_error_floor_counts_abstained_labels() {
        let t = CellTable::from_sizes(&[3, 1, 0, 0]).unwrap();
        let mut spec = ConstraintSpec::uniform(Fairness::Dp, 0.0, 1.0, 0.0, 1);
        spec.non_triviality = Some(Default::default());
        // abstain the wrong prediction with f = 0: it still counts as an error
        let counts = counts_for(&t, |c, m| {
            if c == 1 {
                CellCount {
                    abstain: 1,
                    ..CellCount::default()
                }
            } else {
                CellCount {
                    keep: m,
                    ..CellCount::default()
                }
            }
        });
        assert!(verify_counts(&counts, &t, &spec).unwrap().is_empty());
        let mut flipped = counts.clone();
        flipped.cells[1].abstain_flip = 1;
        let violations = verify_counts(&flipped, &t, &spec).unwrap();
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].family, Family::NonTriviality);

        spec.non_triviality.as_mut().unwrap().scope = NonTrivialityScope::Predicted;
        assert_eq!(verify_counts(&counts, &t, &spec).unwrap().len(), 1);
    }

    #[test]
    fn report_round_trips_through_json() {
        let t = example_one();
        let spec = ConstraintSpec::uniform(Fairness::Eod, 0.3, 0.1, 0.0, 2);
        let report = constraint_values(&CellCounts::keep_all(&t), &t, &spec).unwrap();
        let text = serde_json::to_string(&report).unwrap();
        let back: ConstraintReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
    }
}
