//! Tabular samples with a protected group and a binary label.

mod csv_io;
mod split;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::exact::{ratio, Rational};
use crate::{FanError, GroupId, Label, Result};

pub use csv_io::{load_csv, read_csv, write_csv, CsvSchema};
pub use split::{split, Splits};
pub use synthetic::{gen_synthetic, SyntheticConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub group: GroupId,
    pub label: Label,
}

/// An ordered collection of samples sharing one feature dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<Sample>,
    n_groups: usize,
    feature_dim: usize,
}

impl Dataset {
    /// Validates labels, group ids and feature dimensions, and requires every
    /// declared group to be represented.
    pub fn new(samples: Vec<Sample>, n_groups: usize) -> Result<Self> {
        let dataset = Self::with_groups(samples, n_groups)?;
        let sizes = dataset.group_sizes();
        if let Some(z) = sizes.iter().position(|&n| n == 0) {
            return Err(FanError::domain(format!("group {z} has no samples")));
        }
        Ok(dataset)
    }

    /// Like [`Dataset::new`] but tolerates groups without samples, which
    /// happens for small splits.
    pub fn with_groups(samples: Vec<Sample>, n_groups: usize) -> Result<Self> {
        let feature_dim = samples.first().map_or(0, |s| s.features.len());
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != feature_dim {
                return Err(FanError::Dimension {
                    expected: feature_dim,
                    got: s.features.len(),
                });
            }
            if s.group >= n_groups {
                return Err(FanError::domain(format!(
                    "sample {i} has group {} but only {n_groups} groups are declared",
                    s.group
                )));
            }
            if s.label > 1 {
                return Err(FanError::domain(format!("sample {i} has non-binary label {}", s.label)));
            }
        }
        Ok(Self {
            samples,
            n_groups,
            feature_dim,
        })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn groups(&self) -> Vec<GroupId> {
        self.samples.iter().map(|s| s.group).collect()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_groups];
        for s in &self.samples {
            sizes[s.group] += 1;
        }
        sizes
    }

    /// Subset in the order of `indices`.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let samples = indices.iter().map(|&i| self.samples[i].clone()).collect();
        Self::with_groups(samples, self.n_groups)
    }

    /// Rescales every feature column to `[0, 1]`; constant columns map to 0.
    pub fn min_max_scaled(&self) -> Self {
        let mut lo = vec![f64::INFINITY; self.feature_dim];
        let mut hi = vec![f64::NEG_INFINITY; self.feature_dim];
        for s in &self.samples {
            for (j, &v) in s.features.iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        let samples = self
            .samples
            .iter()
            .map(|s| Sample {
                features: s
                    .features
                    .iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        let span = hi[j] - lo[j];
                        if span > 0.0 {
                            (v - lo[j]) / span
                        } else {
                            0.0
                        }
                    })
                    .collect(),
                group: s.group,
                label: s.label,
            })
            .collect();
        Self {
            samples,
            n_groups: self.n_groups,
            feature_dim: self.feature_dim,
        }
    }
}

/// Per-group sizes and label counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub sizes: Vec<usize>,
    /// `label_counts[z][y]` is the number of samples in group `z` with label `y`.
    pub label_counts: Vec<[usize; 2]>,
    /// Qualification rate: fraction of each group with label 1.
    pub qualification_rate: Vec<f64>,
}

impl GroupStats {
    pub fn n_groups(&self) -> usize {
        self.sizes.len()
    }

    pub fn total(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Exact qualification rate of group `z`; `None` for an empty group.
    pub fn qualification_ratio(&self, z: GroupId) -> Option<Rational> {
        (self.sizes[z] > 0).then(|| ratio(self.label_counts[z][1] as u64, self.sizes[z] as u64))
    }
}

pub fn group_stats(dataset: &Dataset) -> Result<GroupStats> {
    if dataset.is_empty() {
        return Err(FanError::EmptyInput("dataset has no samples".into()));
    }
    let mut label_counts = vec![[0usize; 2]; dataset.n_groups()];
    for s in dataset.samples() {
        label_counts[s.group][s.label as usize] += 1;
    }
    let sizes: Vec<usize> = label_counts.iter().map(|c| c[0] + c[1]).collect();
    let qualification_rate = label_counts
        .iter()
        .zip(&sizes)
        .map(|(c, &n)| if n == 0 { f64::NAN } else { c[1] as f64 / n as f64 })
        .collect();
    Ok(GroupStats {
        sizes,
        label_counts,
        qualification_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(group: GroupId, label: Label) -> Sample {
        Sample {
            features: vec![0.0],
            group,
            label,
        }
    }

    #[test]
    fn stats_of_balanced_group() {
        let d = Dataset::new(vec![sample(0, 1), sample(0, 1), sample(0, 0), sample(0, 0)], 1).unwrap();
        let stats = group_stats(&d).unwrap();
        assert_eq!(stats.qualification_rate, vec![0.5]);
        assert_eq!(stats.label_counts, vec![[2, 2]]);
    }

    #[test]
    fn stats_all_positive() {
        let d = Dataset::new(vec![sample(0, 1), sample(0, 1)], 1).unwrap();
        assert_eq!(group_stats(&d).unwrap().qualification_rate, vec![1.0]);
    }

    #[test]
    fn stats_of_empty_dataset_fail() {
        let d = Dataset::with_groups(vec![], 2).unwrap();
        assert!(matches!(group_stats(&d), Err(FanError::EmptyInput(_))));
    }

    #[test]
    fn rejects_bad_samples() {
        assert!(Dataset::new(vec![sample(2, 0)], 2).is_err());
        assert!(Dataset::new(vec![sample(0, 2)], 1).is_err());
        assert!(Dataset::new(vec![sample(0, 1)], 2).is_err());
        let mut wide = sample(0, 1);
        wide.features.push(1.0);
        assert!(matches!(
            Dataset::new(vec![sample(0, 1), wide], 1),
            Err(FanError::Dimension { .. })
        ));
    }

    #[test]
    fn min_max_scaling() {
        let mut a = sample(0, 0);
        a.features = vec![2.0, 5.0];
        let mut b = sample(0, 1);
        b.features = vec![4.0, 5.0];
        let d = Dataset::new(vec![a, b], 1).unwrap().min_max_scaled();
        assert_eq!(d.samples()[0].features, vec![0.0, 0.0]);
        assert_eq!(d.samples()[1].features, vec![1.0, 0.0]);
    }
}
