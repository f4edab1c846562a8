//! Evaluation of per-sample outputs.
//!
//! Fairness rates divide by full group (or group and label) sizes and count
//! an abstention as not accepted. Accuracy conditions on non-abstained
//! samples. A rate whose denominator is zero is reported as `"undefined"`.

use num_traits::Signed;
use serde::{Deserialize, Serialize};

use crate::baseline::GroupErrorRates;
use crate::cells::DecisionVector;
use crate::data::Dataset;
use crate::exact::{decimal, int, ratio, to_f64, Rational};
use crate::solver::{ConstraintSpec, Fairness};
use crate::surrogate::FanOutput;
use crate::{FanError, GroupId, Label, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Undefined {
    Undefined,
}

/// An exact ratio with its float value, or an explicit undefined marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rate {
    Defined {
        #[serde(with = "crate::exact::text")]
        exact: Rational,
        value: f64,
    },
    Undefined(Undefined),
}

impl Rate {
    pub fn of(num: usize, den: usize) -> Self {
        if den == 0 {
            Rate::Undefined(Undefined::Undefined)
        } else {
            Rate::exact(ratio(num as u64, den as u64))
        }
    }

    pub fn exact(r: Rational) -> Self {
        Rate::Defined {
            value: to_f64(&r),
            exact: r,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Rate::Defined { value, .. } => Some(*value),
            Rate::Undefined(_) => None,
        }
    }

    pub fn as_exact(&self) -> Option<&Rational> {
        match self {
            Rate::Defined { exact, .. } => Some(exact),
            Rate::Undefined(_) => None,
        }
    }

    fn map2(&self, other: &Rate, f: impl Fn(&Rational, &Rational) -> Rational) -> Rate {
        match (self.as_exact(), other.as_exact()) {
            (Some(a), Some(b)) => Rate::exact(f(a, b)),
            _ => Rate::Undefined(Undefined::Undefined),
        }
    }

    fn gap(&self, other: &Rate) -> Rate {
        self.map2(other, |a, b| (a - b).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub group: GroupId,
    pub size: usize,
    pub label_sizes: [usize; 2],
    pub abstained: [usize; 2],
    /// Samples with emitted label 1.
    pub accepted: usize,
    pub true_positives: usize,
    pub true_negatives: usize,
    /// Non-abstained samples whose emitted label is wrong.
    pub errors: usize,
    /// Correct fraction among non-abstained samples.
    pub accuracy: Rate,
    pub error_rate: Rate,
    pub abstention_rate: Rate,
    /// Abstention rate among samples with label 0 and label 1.
    pub label_abstention_rate: [Rate; 2],
    pub acceptance_rate: Rate,
    pub true_positive_rate: Rate,
    pub true_negative_rate: Rate,
    /// `(1 + eta) e` of the baseline.
    pub no_harm_bound: Rate,
    /// `no_harm_bound - error_rate`; negative when the group is harmed.
    pub no_harm_margin: Rate,
}

impl GroupMetrics {
    pub fn non_abstained(&self) -> usize {
        self.size - self.abstained[0] - self.abstained[1]
    }
}

/// Absolute gaps between two groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDisparity {
    pub groups: (GroupId, GroupId),
    pub dp: Rate,
    pub eop: Rate,
    pub eod_tpr: Rate,
    pub eod_tnr: Rate,
    /// `(eod_tpr + eod_tnr) / 2`.
    pub eod_average: Rate,
}

impl PairDisparity {
    /// The gaps a disparity constraint of `fairness` bounds.
    pub fn constrained(&self, fairness: Fairness) -> Vec<&Rate> {
        match fairness {
            Fairness::Dp => vec![&self.dp],
            Fairness::Eop => vec![&self.eop],
            Fairness::Eod => vec![&self.eod_tpr, &self.eod_tnr],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_samples: usize,
    pub groups: Vec<GroupMetrics>,
    pub pairs: Vec<PairDisparity>,
}

fn max_defined<'a>(rates: impl Iterator<Item = &'a Rate>) -> Option<f64> {
    rates
        .filter_map(Rate::value)
        .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
}

impl EvalReport {
    /// Largest headline disparity over pairs: the acceptance gap for DP, the
    /// TPR gap for EOp and the averaged gap for EOd.
    pub fn max_disparity(&self, fairness: Fairness) -> Option<f64> {
        max_defined(self.pairs.iter().map(|p| match fairness {
            Fairness::Dp => &p.dp,
            Fairness::Eop => &p.eop,
            Fairness::Eod => &p.eod_average,
        }))
    }

    /// Largest gap among those a disparity constraint of `fairness` bounds.
    pub fn max_constrained_gap(&self, fairness: Fairness) -> Option<f64> {
        max_defined(self.pairs.iter().flat_map(|p| p.constrained(fairness)))
    }

    pub fn min_accuracy(&self) -> Option<f64> {
        self.groups
            .iter()
            .filter_map(|g| g.accuracy.value())
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.min(v))))
    }

    pub fn max_abstention_rate(&self) -> Option<f64> {
        max_defined(self.groups.iter().map(|g| &g.abstention_rate))
    }
}

/// Emitted labels of adjusted decisions over baseline predictions.
pub fn outputs_from_decisions(decisions: &DecisionVector, pred_labels: &[Label]) -> Result<Vec<Option<Label>>> {
    if decisions.len() != pred_labels.len() {
        return Err(FanError::Dimension {
            expected: pred_labels.len(),
            got: decisions.len(),
        });
    }
    Ok(decisions
        .decisions
        .iter()
        .zip(pred_labels)
        .map(|(d, &p)| d.output(p))
        .collect())
}

pub fn outputs_from_fan(outputs: &[FanOutput]) -> Vec<Option<Label>> {
    outputs.iter().map(FanOutput::label).collect()
}

/// Evaluates emitted labels (`None` = abstain) on `dataset`. `baseline`
/// and the no-harm slack of `spec` give each group's error bound.
pub fn evaluate(
    dataset: &Dataset,
    outputs: &[Option<Label>],
    baseline: &GroupErrorRates,
    spec: &ConstraintSpec,
) -> Result<EvalReport> {
    if outputs.len() != dataset.len() {
        return Err(FanError::Dimension {
            expected: dataset.len(),
            got: outputs.len(),
        });
    }
    let g = dataset.n_groups();
    if baseline.n_groups() != g || spec.eta.len() != g {
        return Err(FanError::Dimension {
            expected: g,
            got: baseline.n_groups().min(spec.eta.len()),
        });
    }

    #[derive(Default, Clone)]
    struct Tally {
        size: usize,
        label_sizes: [usize; 2],
        abstained: [usize; 2],
        accepted: usize,
        tp: usize,
        tn: usize,
        errors: usize,
    }
    let mut tallies = vec![Tally::default(); g];
    for (s, out) in dataset.samples().iter().zip(outputs) {
        let t = &mut tallies[s.group];
        let y = s.label as usize;
        t.size += 1;
        t.label_sizes[y] += 1;
        match *out {
            None => t.abstained[y] += 1,
            Some(label) => {
                if label == 1 {
                    t.accepted += 1;
                }
                if label == s.label {
                    if label == 1 {
                        t.tp += 1;
                    } else {
                        t.tn += 1;
                    }
                } else {
                    t.errors += 1;
                }
            }
        }
    }

    let groups = tallies
        .iter()
        .enumerate()
        .map(|(z, t)| {
            let predicted = t.size - t.abstained[0] - t.abstained[1];
            let bound = baseline.slackened_exact(z, spec.eta[z])?;
            let error_rate = Rate::of(t.errors, predicted);
            let no_harm_margin = Rate::exact(bound.clone()).map2(&error_rate, |b, e| b - e);
            Ok(GroupMetrics {
                group: z,
                size: t.size,
                label_sizes: t.label_sizes,
                abstained: t.abstained,
                accepted: t.accepted,
                true_positives: t.tp,
                true_negatives: t.tn,
                errors: t.errors,
                accuracy: Rate::of(predicted - t.errors, predicted),
                error_rate,
                abstention_rate: Rate::of(t.abstained[0] + t.abstained[1], t.size),
                label_abstention_rate: [
                    Rate::of(t.abstained[0], t.label_sizes[0]),
                    Rate::of(t.abstained[1], t.label_sizes[1]),
                ],
                acceptance_rate: Rate::of(t.accepted, t.size),
                true_positive_rate: Rate::of(t.tp, t.label_sizes[1]),
                true_negative_rate: Rate::of(t.tn, t.label_sizes[0]),
                no_harm_bound: Rate::exact(bound),
                no_harm_margin,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut pairs = Vec::new();
    for a in 0..g {
        for b in a + 1..g {
            let (ga, gb) = (&groups[a], &groups[b]);
            let eod_tpr = ga.true_positive_rate.gap(&gb.true_positive_rate);
            let eod_tnr = ga.true_negative_rate.gap(&gb.true_negative_rate);
            pairs.push(PairDisparity {
                groups: (a, b),
                dp: ga.acceptance_rate.gap(&gb.acceptance_rate),
                eop: eod_tpr.clone(),
                eod_average: eod_tpr.map2(&eod_tnr, |x, y| (x + y) / int(2)),
                eod_tpr,
                eod_tnr,
            });
        }
    }
    Ok(EvalReport {
        n_samples: dataset.len(),
        groups,
        pairs,
    })
}

/// Signed improvements of one report over another on the same dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// `baseline - fan` of the headline disparity, per notion.
    pub dp_reduction: Option<f64>,
    pub eop_reduction: Option<f64>,
    pub eod_reduction: Option<f64>,
    /// `fan - baseline` accuracy per group.
    pub accuracy_increase: Vec<Option<f64>>,
    /// Smallest per-group accuracy increase.
    pub min_accuracy_increase: Option<f64>,
}

pub fn compare_to_baseline(fan: &EvalReport, baseline: &EvalReport) -> Result<Comparison> {
    if fan.groups.len() != baseline.groups.len() || fan.n_samples != baseline.n_samples {
        return Err(FanError::domain("reports describe different datasets"));
    }
    let reduction = |f: Fairness| Some(baseline.max_disparity(f)? - fan.max_disparity(f)?);
    let accuracy_increase: Vec<Option<f64>> = fan
        .groups
        .iter()
        .zip(&baseline.groups)
        .map(|(a, b)| {
            let (a, b) = (a.accuracy.as_exact()?, b.accuracy.as_exact()?);
            Some(to_f64(&(a - b)))
        })
        .collect();
    let min_accuracy_increase = if accuracy_increase.iter().all(Option::is_some) {
        accuracy_increase.iter().flatten().copied().reduce(f64::min)
    } else {
        None
    };
    Ok(Comparison {
        dp_reduction: reduction(Fairness::Dp),
        eop_reduction: reduction(Fairness::Eop),
        eod_reduction: reduction(Fairness::Eod),
        accuracy_increase,
        min_accuracy_increase,
    })
}

/// Column names of [`csv_row`] for a report with `n_groups` groups.
pub fn csv_header(n_groups: usize) -> Vec<String> {
    let mut cols: Vec<String> = ["max_dp", "max_eop", "max_eod_average", "min_accuracy"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for z in 0..n_groups {
        cols.push(format!("accuracy_g{z}"));
        cols.push(format!("abstention_rate_g{z}"));
    }
    cols
}

/// A flat row of headline numbers; undefined values print as `undefined`.
pub fn csv_row(report: &EvalReport) -> Vec<String> {
    let show = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| v.to_string());
    let mut row = vec![
        show(report.max_disparity(Fairness::Dp)),
        show(report.max_disparity(Fairness::Eop)),
        show(report.max_disparity(Fairness::Eod)),
        show(report.min_accuracy()),
    ];
    for g in &report.groups {
        row.push(show(g.accuracy.value()));
        row.push(show(g.abstention_rate.value()));
    }
    row
}

/// The non-abstained fraction `1 - abstention rate`, exactly.
pub fn non_abstained_fraction(group: &GroupMetrics) -> Rate {
    Rate::of(group.non_abstained(), group.size)
}

/// Whether each group's abstention rate is within its `delta`.
pub fn abstention_within(report: &EvalReport, delta: &[f64]) -> Result<Vec<bool>> {
    report
        .groups
        .iter()
        .zip(delta)
        .map(|(g, &d)| {
            let d = decimal(d)?;
            Ok(g.abstention_rate.as_exact().is_none_or(|r| *r <= d))
        })
        .collect()
}
