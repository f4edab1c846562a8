//! Per-(group, label, baseline prediction) buckets and the count-space view of
//! abstain/flip decisions.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::{FanError, GroupId, Label, Result};

/// One bucket of samples sharing group, true label and baseline prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub group: GroupId,
    pub label: Label,
    pub pred: Label,
}

impl CellKey {
    pub fn new(group: GroupId, label: Label, pred: Label) -> Self {
        Self { group, label, pred }
    }

    /// Position of the cell in a [`CellTable`]: `4 * group + 2 * label + pred`.
    pub fn index(&self) -> usize {
        self.group * 4 + self.label as usize * 2 + self.pred as usize
    }

    pub fn from_index(index: usize) -> Self {
        Self {
            group: index / 4,
            label: ((index / 2) % 2) as Label,
            pred: (index % 2) as Label,
        }
    }

    /// Whether the baseline prediction is wrong on this cell.
    pub fn baseline_wrong(&self) -> bool {
        self.label != self.pred
    }
}

/// Partition of sample indices into cells, each ordered by ascending
/// baseline score with ties broken by index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellTable {
    n_groups: usize,
    n_samples: usize,
    members: Vec<Vec<usize>>,
}

impl CellTable {
    /// A table whose cells hold consecutive synthetic indices with the given
    /// sizes, indexed as in [`CellKey::index`].
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() || !sizes.len().is_multiple_of(4) {
            return Err(FanError::domain(format!(
                "cell sizes must come in groups of four, got {}",
                sizes.len()
            )));
        }
        let mut next = 0;
        let members = sizes
            .iter()
            .map(|&m| {
                let cell: Vec<usize> = (next..next + m).collect();
                next += m;
                cell
            })
            .collect();
        Ok(Self {
            n_groups: sizes.len() / 4,
            n_samples: next,
            members,
        })
    }

    /// A table over samples described only by their keys, ordered by index.
    pub fn from_keys(keys: &[CellKey], n_groups: usize) -> Result<Self> {
        let mut members = vec![Vec::new(); n_groups * 4];
        for (i, k) in keys.iter().enumerate() {
            if k.group >= n_groups || k.label > 1 || k.pred > 1 {
                return Err(FanError::domain(format!("sample {i} has an invalid cell key {k:?}")));
            }
            members[k.index()].push(i);
        }
        Ok(Self {
            n_groups,
            n_samples: keys.len(),
            members,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn n_cells(&self) -> usize {
        self.members.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn members(&self, cell: usize) -> &[usize] {
        &self.members[cell]
    }

    pub fn size(&self, cell: usize) -> usize {
        self.members[cell].len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn keys(&self) -> impl Iterator<Item = CellKey> {
        (0..self.members.len()).map(CellKey::from_index)
    }

    pub fn group_size(&self, z: GroupId) -> usize {
        (0..4).map(|k| self.members[z * 4 + k].len()).sum()
    }

    /// `N_{z,y}`.
    pub fn label_count(&self, z: GroupId, y: Label) -> usize {
        let base = z * 4 + y as usize * 2;
        self.members[base].len() + self.members[base + 1].len()
    }

    /// Baseline mistakes in group `z`.
    pub fn baseline_errors(&self, z: GroupId) -> usize {
        self.members[z * 4 + 1].len() + self.members[z * 4 + 2].len()
    }

    /// Cell index of every sample.
    pub fn cell_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_samples];
        for (c, cell) in self.members.iter().enumerate() {
            for &i in cell {
                out[i] = c;
            }
        }
        out
    }
}

pub fn build_cells(dataset: &Dataset, pred_labels: &[Label], scores: &[f64]) -> Result<CellTable> {
    if pred_labels.len() != dataset.len() {
        return Err(FanError::Dimension {
            expected: dataset.len(),
            got: pred_labels.len(),
        });
    }
    if scores.len() != dataset.len() {
        return Err(FanError::Dimension {
            expected: dataset.len(),
            got: scores.len(),
        });
    }
    if let Some(p) = pred_labels.iter().find(|&&p| p > 1) {
        return Err(FanError::domain(format!("prediction {p} is not binary")));
    }
    let mut members = vec![Vec::new(); dataset.n_groups() * 4];
    for (i, s) in dataset.samples().iter().enumerate() {
        members[CellKey::new(s.group, s.label, pred_labels[i]).index()].push(i);
    }
    for cell in &mut members {
        cell.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    }
    Ok(CellTable {
        n_groups: dataset.n_groups(),
        n_samples: dataset.len(),
        members,
    })
}

/// Decision tallies for one cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCount {
    pub abstain: usize,
    pub keep: usize,
    pub flip: usize,
    /// Abstained samples carrying `f = 1`.
    #[serde(default)]
    pub abstain_flip: usize,
}

impl CellCount {
    pub fn total(&self) -> usize {
        self.abstain + self.keep + self.flip
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub cells: Vec<CellCount>,
}

impl CellCounts {
    pub fn validate(&self, table: &CellTable) -> Result<()> {
        if self.cells.len() != table.n_cells() {
            return Err(FanError::Dimension {
                expected: table.n_cells(),
                got: self.cells.len(),
            });
        }
        for (c, count) in self.cells.iter().enumerate() {
            if count.total() != table.size(c) {
                return Err(FanError::domain(format!(
                    "cell {c} counts sum to {} but the cell holds {} samples",
                    count.total(),
                    table.size(c)
                )));
            }
            if count.abstain_flip > count.abstain {
                return Err(FanError::domain(format!(
                    "cell {c} has more abstained flips than abstentions"
                )));
            }
        }
        Ok(())
    }

    /// Every sample kept.
    pub fn keep_all(table: &CellTable) -> Self {
        Self {
            cells: (0..table.n_cells())
                .map(|c| CellCount {
                    keep: table.size(c),
                    ..CellCount::default()
                })
                .collect(),
        }
    }
}

/// Per-sample abstention indicator `omega` and flip indicator `f`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Decision {
    pub omega: bool,
    pub flip: bool,
}

impl Decision {
    pub const ABSTAIN: Decision = Decision {
        omega: false,
        flip: false,
    };
    pub const KEEP: Decision = Decision {
        omega: true,
        flip: false,
    };
    pub const FLIP: Decision = Decision {
        omega: true,
        flip: true,
    };

    /// `pred xor f`, regardless of abstention.
    pub fn adjusted(&self, pred: Label) -> Label {
        pred ^ u8::from(self.flip)
    }

    /// The emitted label, or `None` when abstaining.
    pub fn output(&self, pred: Label) -> Option<Label> {
        self.omega.then(|| self.adjusted(pred))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionVector {
    pub decisions: Vec<Decision>,
}

impl DecisionVector {
    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }
}

/// `sum over cells of keep * [pred != y] + flip * [pred == y]`.
pub fn counts_objective(counts: &CellCounts, table: &CellTable) -> Result<u64> {
    counts.validate(table)?;
    Ok(counts
        .cells
        .iter()
        .enumerate()
        .map(|(c, n)| {
            if CellKey::from_index(c).baseline_wrong() {
                n.keep as u64
            } else {
                n.flip as u64
            }
        })
        .sum())
}

/// Expands counts to per-sample decisions: within each cell, ascending by
/// score, abstain first, then flip, then keep. The lowest-scored
/// `abstain_flip` abstentions carry `f = 1`.
pub fn decisions_from_counts(counts: &CellCounts, table: &CellTable) -> Result<DecisionVector> {
    counts.validate(table)?;
    let mut decisions = vec![Decision::KEEP; table.n_samples()];
    for (c, n) in counts.cells.iter().enumerate() {
        for (rank, &i) in table.members(c).iter().enumerate() {
            decisions[i] = if rank < n.abstain {
                Decision {
                    omega: false,
                    flip: rank < n.abstain_flip,
                }
            } else if rank < n.abstain + n.flip {
                Decision::FLIP
            } else {
                Decision::KEEP
            };
        }
    }
    Ok(DecisionVector { decisions })
}

pub fn counts_from_decisions(decisions: &DecisionVector, table: &CellTable) -> Result<CellCounts> {
    if decisions.len() != table.n_samples() {
        return Err(FanError::Dimension {
            expected: table.n_samples(),
            got: decisions.len(),
        });
    }
    let cells = (0..table.n_cells())
        .map(|c| {
            let mut n = CellCount::default();
            for &i in table.members(c) {
                let d = decisions.decisions[i];
                match (d.omega, d.flip) {
                    (false, f) => {
                        n.abstain += 1;
                        n.abstain_flip += usize::from(f);
                    }
                    (true, false) => n.keep += 1,
                    (true, true) => n.flip += 1,
                }
            }
            n
        })
        .collect();
    Ok(CellCounts { cells })
}
