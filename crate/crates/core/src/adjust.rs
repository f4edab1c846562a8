//! Prediction adjustment: a canonical within-cell assignment of decisions.
//!
//! The program only fixes how many samples of each cell abstain, flip or
//! keep. Adjustment hands those roles out by ascending baseline confidence so
//! that equal inputs receive equal decisions and the surrogates see a
//! score-monotone target.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cells::{counts_from_decisions, CellTable, Decision, DecisionVector};
use crate::data::Dataset;
use crate::{FanError, GroupId, Result};

/// Order in which the non-abstained roles follow the abstentions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentOrder {
    /// Abstain, then flip, then keep.
    #[default]
    AbstainFlipKeep,
    /// Abstain, then keep, then flip.
    AbstainKeepFlip,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjustOptions {
    #[serde(default)]
    pub order: AssignmentOrder,
    /// Keep the number of abstentions with `f = 1` per cell instead of
    /// clearing `f` on every abstention. The literal error floor counts those
    /// flips, so clearing them can break it.
    #[serde(default)]
    pub preserve_abstained_flips: bool,
}

/// Reassigns decisions within every cell by ascending `(score, index)`.
pub fn prediction_adjustment(
    decisions: &DecisionVector,
    table: &CellTable,
    scores: &[f64],
    options: &AdjustOptions,
) -> Result<DecisionVector> {
    if scores.len() != table.n_samples() {
        return Err(FanError::Dimension {
            expected: table.n_samples(),
            got: scores.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(FanError::domain(format!("score of sample {i} is NaN")));
    }
    let counts = counts_from_decisions(decisions, table)?;
    let per_cell: Vec<Vec<(usize, Decision)>> = (0..table.n_cells())
        .into_par_iter()
        .map(|c| {
            let n = &counts.cells[c];
            let mut members = table.members(c).to_vec();
            members.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
            let abstain_flip = if options.preserve_abstained_flips {
                n.abstain_flip
            } else {
                0
            };
            let (second, second_len, third) = match options.order {
                AssignmentOrder::AbstainFlipKeep => (Decision::FLIP, n.flip, Decision::KEEP),
                AssignmentOrder::AbstainKeepFlip => (Decision::KEEP, n.keep, Decision::FLIP),
            };
            members
                .into_iter()
                .enumerate()
                .map(|(rank, i)| {
                    let d = if rank < n.abstain {
                        Decision {
                            omega: false,
                            flip: rank < abstain_flip,
                        }
                    } else if rank < n.abstain + second_len {
                        second
                    } else {
                        third
                    };
                    (i, d)
                })
                .collect()
        })
        .collect();
    let mut out = vec![Decision::KEEP; table.n_samples()];
    for (i, d) in per_cell.into_iter().flatten() {
        out[i] = d;
    }
    Ok(DecisionVector { decisions: out })
}

/// Among classes of samples sharing features and group, the fraction of
/// classes with two or more members whose decisions all agree. `1.0` when
/// there are no duplicates.
pub fn consistency_rate(decisions: &DecisionVector, dataset: &Dataset) -> Result<f64> {
    if decisions.len() != dataset.len() {
        return Err(FanError::Dimension {
            expected: dataset.len(),
            got: decisions.len(),
        });
    }
    let mut classes: BTreeMap<(Vec<u64>, GroupId), Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.samples().iter().enumerate() {
        let key: Vec<u64> = s.features.iter().map(|v| v.to_bits()).collect();
        classes.entry((key, s.group)).or_default().push(i);
    }
    let (mut total, mut agreeing) = (0usize, 0usize);
    for members in classes.values().filter(|m| m.len() > 1) {
        total += 1;
        let first = decisions.decisions[members[0]];
        if members.iter().all(|&i| decisions.decisions[i] == first) {
            agreeing += 1;
        }
    }
    Ok(if total == 0 {
        1.0
    } else {
        agreeing as f64 / total as f64
    })
}
