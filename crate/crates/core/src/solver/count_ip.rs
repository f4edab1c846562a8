//! The program over per-cell abstain and flip counts.

use super::model::{IntRow, IntegerProgram, LinExpr};
use super::spec::{Bounds, ConstraintSpec, Fairness, NonTrivialityScope};
use super::values::Family;
use crate::cells::{CellCount, CellCounts, CellKey, CellTable};
use crate::exact::{int, ratio};
use crate::Label;

/// Branching priority of tallies compared across groups.
pub(crate) const RATE: u8 = 2;
/// Branching priority of the remaining per-group tallies.
pub(crate) const TALLY: u8 = 1;

/// Variable layout: per cell `A` (abstain), `F` (flip) and, under the
/// literal error floor, `AF` (abstained with `f = 1`), followed by integer
/// per-group tallies that branch first, cross-group rates before the rest.
pub(crate) struct CountModel {
    pub ip: IntegerProgram,
    stride: usize,
    sizes: Vec<usize>,
}

impl CountModel {
    fn abstain(&self, c: usize) -> usize {
        c * self.stride
    }

    fn flip(&self, c: usize) -> usize {
        c * self.stride + 1
    }

    fn abstain_flip(&self, c: usize) -> Option<usize> {
        (self.stride == 3).then_some(c * self.stride + 2)
    }

    pub fn build(table: &CellTable, spec: &ConstraintSpec, forbid_abstain: Option<Label>) -> crate::Result<Self> {
        let g = table.n_groups();
        let sizes = table.sizes();
        let group_sizes: Vec<usize> = (0..g).map(|z| table.group_size(z)).collect();
        let errors: Vec<usize> = (0..g).map(|z| table.baseline_errors(z)).collect();
        let bounds = Bounds::new(spec, &group_sizes, &errors)?;
        let stride = if spec.literal_non_triviality() { 3 } else { 2 };
        let mut model = CountModel {
            ip: IntegerProgram::new(sizes.len() * stride),
            stride,
            sizes: sizes.clone(),
        };

        for (c, &m) in sizes.iter().enumerate() {
            let key = CellKey::from_index(c);
            let m = m as i64;
            let a = model.abstain(c);
            let f = model.flip(c);
            model.ip.upper[a] = if forbid_abstain == Some(key.label) { 0 } else { m };
            model.ip.upper[f] = m;
            let mut cap = LinExpr::new();
            cap.add_var(a, &int(1));
            cap.add_var(f, &int(1));
            model.ip.push(IntRow::at_most(&cap, &int(m), None));
            if let Some(af) = model.abstain_flip(c) {
                model.ip.upper[af] = model.ip.upper[a];
                let mut link = LinExpr::new();
                link.add_var(af, &int(1));
                link.add_var(a, &int(-1));
                model.ip.push(IntRow::at_most(&link, &int(0), None));
            }
        }

        let groups: Vec<GroupExprs> = (0..g)
            .map(|z| {
                let ge = model.group_exprs(z);
                let n = table.group_size(z) as i64;
                let mut agg = |e: &LinExpr, p: u8| model.ip.aggregate(e, 0, n, p);
                let abstained = [agg(&ge.abstained[0], RATE), agg(&ge.abstained[1], RATE)];
                let mut non_abstained = LinExpr::constant(int(n));
                non_abstained.add_scaled(&abstained[0], &int(-1));
                non_abstained.add_scaled(&abstained[1], &int(-1));
                GroupExprs {
                    non_abstained,
                    accepted: agg(&ge.accepted, RATE),
                    true_positives: agg(&ge.true_positives, RATE),
                    true_negatives: agg(&ge.true_negatives, RATE),
                    errors_predicted: agg(&ge.errors_predicted, TALLY),
                    errors_all: agg(&ge.errors_all, TALLY),
                    abstained,
                }
            })
            .collect();

        let mut objective = LinExpr::new();
        for ge in &groups {
            objective.add_scaled(&ge.errors_predicted, &int(1));
        }
        model.ip.set_objective(&objective);

        for (z, ge) in groups.iter().enumerate() {
            let mut abst = LinExpr::new();
            for y in 0..2 {
                abst.add_scaled(&ge.abstained[y], &int(1));
            }
            model.ip.push(IntRow::at_most(
                &abst,
                &int(bounds.max_abstain[z]),
                Some(Family::Abstention),
            ));

            let mut harm = ge.errors_predicted.clone();
            harm.add_scaled(&ge.non_abstained, &-bounds.error_rate_cap[z].clone());
            model.ip.push(IntRow::at_most(&harm, &int(0), Some(Family::NoHarm)));
        }

        let rates: Vec<Vec<LinExpr>> = (0..g)
            .map(|z| {
                let ge = &groups[z];
                let per = |num: &LinExpr, den: usize| num.scaled(&ratio(1, den as u64));
                match spec.fairness {
                    Fairness::Dp => vec![per(&ge.accepted, table.group_size(z))],
                    Fairness::Eop => vec![per(&ge.true_positives, table.label_count(z, 1))],
                    Fairness::Eod => vec![
                        per(&ge.true_positives, table.label_count(z, 1)),
                        per(&ge.true_negatives, table.label_count(z, 0)),
                    ],
                }
            })
            .collect();
        for z in 0..g {
            for w in 0..g {
                if z == w {
                    continue;
                }
                for k in 0..rates[z].len() {
                    let gap = rates[z][k].minus(&rates[w][k]);
                    model
                        .ip
                        .push(IntRow::at_most(&gap, &bounds.epsilon, Some(Family::Disparity)));
                }
            }
        }

        for (y, sigma) in bounds.sigma.iter().enumerate() {
            let Some(sigma) = sigma else { continue };
            let rate = |z: usize| groups[z].abstained[y].scaled(&ratio(1, table.label_count(z, y as Label) as u64));
            for z in 0..g {
                for w in 0..g {
                    if z != w {
                        let gap = rate(z).minus(&rate(w));
                        model
                            .ip
                            .push(IntRow::at_most(&gap, sigma, Some(Family::EqualAbstention)));
                    }
                }
            }
        }

        if let (Some(nt), Some(floors)) = (&spec.non_triviality, &bounds.error_floor) {
            for (z, ge) in groups.iter().enumerate() {
                let errors = match nt.scope {
                    NonTrivialityScope::AllSamples => &ge.errors_all,
                    NonTrivialityScope::Predicted => &ge.errors_predicted,
                };
                model
                    .ip
                    .push(IntRow::at_least(errors, &int(floors[z]), Some(Family::NonTriviality)));
            }
        }
        Ok(model)
    }

    fn group_exprs(&self, z: usize) -> GroupExprs {
        let one = int(1);
        let minus = int(-1);
        let mut ge = GroupExprs::default();
        for c in z * 4..z * 4 + 4 {
            let key = CellKey::from_index(c);
            let m = int(self.sizes[c] as i64);
            let a = self.abstain(c);
            let f = self.flip(c);
            let mut keep = LinExpr::constant(m.clone());
            keep.add_var(a, &minus);
            keep.add_var(f, &minus);
            let mut flip = LinExpr::new();
            flip.add_var(f, &one);

            ge.non_abstained.add_const(&m);
            ge.non_abstained.add_var(a, &minus);
            ge.abstained[key.label as usize].add_var(a, &one);

            let (ones, zeros) = if key.pred == 1 { (&keep, &flip) } else { (&flip, &keep) };
            ge.accepted.add_scaled(ones, &one);
            if key.label == 1 {
                ge.true_positives.add_scaled(ones, &one);
            } else {
                ge.true_negatives.add_scaled(zeros, &one);
            }
            let wrong = if key.baseline_wrong() { &keep } else { &flip };
            ge.errors_predicted.add_scaled(wrong, &one);

            ge.errors_all.add_scaled(wrong, &one);
            if let Some(af) = self.abstain_flip(c) {
                if key.baseline_wrong() {
                    // abstained with f = 0 keep the wrong baseline label
                    ge.errors_all.add_var(a, &one);
                    ge.errors_all.add_var(af, &minus);
                } else {
                    ge.errors_all.add_var(af, &one);
                }
            }
        }
        ge
    }

    pub fn counts(&self, x: &[i64]) -> CellCounts {
        CellCounts {
            cells: self
                .sizes
                .iter()
                .enumerate()
                .map(|(c, &m)| {
                    let abstain = x[self.abstain(c)] as usize;
                    let flip = x[self.flip(c)] as usize;
                    CellCount {
                        abstain,
                        flip,
                        keep: m - abstain - flip,
                        abstain_flip: self.abstain_flip(c).map_or(0, |v| x[v] as usize),
                    }
                })
                .collect(),
        }
    }

    /// Keep everything, and flip every baseline mistake, over the cell
    /// variables only.
    pub fn starts(&self) -> Vec<Vec<i64>> {
        let n = self.sizes.len() * self.stride;
        let keep_all = vec![0; n];
        let mut flip_wrong = vec![0; n];
        for (c, &m) in self.sizes.iter().enumerate() {
            if CellKey::from_index(c).baseline_wrong() {
                flip_wrong[self.flip(c)] = m as i64;
            }
        }
        vec![keep_all, flip_wrong]
    }
}

#[derive(Default)]
struct GroupExprs {
    non_abstained: LinExpr,
    abstained: [LinExpr; 2],
    accepted: LinExpr,
    true_positives: LinExpr,
    true_negatives: LinExpr,
    errors_predicted: LinExpr,
    errors_all: LinExpr,
}
