//! The baseline scorer `h`, its thresholded predictions and per-group error
//! rates.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::exact::{clamp01, decimal, ratio, Rational};
use crate::mlp::{Mlp, MlpConfig};
use crate::{FanError, GroupId, Label, Result};

pub const MODEL_FORMAT: &str = "fan-mlp";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub net: Mlp,
    pub threshold: f64,
    pub config: MlpConfig,
    pub train_accuracy: f64,
    pub loss_curve: Vec<f64>,
}

/// On-disk layout of a trained network.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument<T> {
    format: String,
    version: u32,
    #[serde(flatten)]
    body: T,
}

pub(crate) fn save_json<T: Serialize>(body: &T, path: &Path) -> Result<()> {
    let doc = ModelDocument {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        body,
    };
    let text = serde_json::to_string_pretty(&doc)?;
    std::fs::write(path, text).map_err(|e| FanError::io(path, e))
}

pub(crate) fn load_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| FanError::io(path, e))?;
    let doc: ModelDocument<T> = serde_json::from_str(&text)?;
    if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
        return Err(FanError::Format(format!(
            "expected {MODEL_FORMAT} v{MODEL_VERSION}, found {} v{}",
            doc.format, doc.version
        )));
    }
    Ok(doc.body)
}

impl BaselineModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_json(self, path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: Self = load_json(path.as_ref())?;
        model.net.validate()?;
        Ok(model)
    }

    pub fn score_one(&self, features: &[f64]) -> f64 {
        self.net.predict_proba(features)
    }
}

/// Trains the baseline on binary cross-entropy with threshold `t0` recorded
/// for later prediction.
pub fn train_baseline(train: &Dataset, config: &MlpConfig, t0: f64) -> Result<BaselineModel> {
    check_threshold(t0)?;
    config.validate()?;
    if train.is_empty() {
        return Err(FanError::EmptyInput("training set is empty".into()));
    }
    let inputs: Vec<Vec<f64>> = train.samples().iter().map(|s| s.features.clone()).collect();
    let labels = train.labels();
    let mut net = Mlp::new(train.feature_dim(), &config.hidden_dims, config.seed);
    let loss_curve = net.fit(&inputs, &labels, None, config)?;
    let mut model = BaselineModel {
        net,
        threshold: t0,
        config: config.clone(),
        train_accuracy: 0.0,
        loss_curve,
    };
    let preds = predicted_labels(&score(&model, train)?, t0)?;
    let correct = preds.iter().zip(&labels).filter(|(p, y)| p == y).count();
    model.train_accuracy = correct as f64 / labels.len() as f64;
    Ok(model)
}

pub fn score(model: &BaselineModel, dataset: &Dataset) -> Result<Vec<f64>> {
    if !dataset.is_empty() && dataset.feature_dim() != model.net.input_dim {
        return Err(FanError::Dimension {
            expected: model.net.input_dim,
            got: dataset.feature_dim(),
        });
    }
    Ok(dataset.samples().iter().map(|s| model.score_one(&s.features)).collect())
}

fn check_threshold(t0: f64) -> Result<()> {
    if t0 > 0.0 && t0 < 1.0 {
        Ok(())
    } else {
        Err(FanError::domain(format!(
            "threshold {t0} must lie strictly between 0 and 1"
        )))
    }
}

/// `1[s >= t0]` for every score.
pub fn predicted_labels(scores: &[f64], t0: f64) -> Result<Vec<Label>> {
    check_threshold(t0)?;
    Ok(scores.iter().map(|&s| u8::from(s >= t0)).collect())
}

/// Baseline error counts per group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupErrorRates {
    pub error_counts: Vec<usize>,
    pub sizes: Vec<usize>,
    pub rates: Vec<f64>,
}

impl GroupErrorRates {
    pub fn from_counts(error_counts: Vec<usize>, sizes: Vec<usize>) -> Result<Self> {
        if error_counts.len() != sizes.len() {
            return Err(FanError::Dimension {
                expected: sizes.len(),
                got: error_counts.len(),
            });
        }
        if let Some(z) = sizes.iter().position(|&n| n == 0) {
            return Err(FanError::domain(format!(
                "group {z} is empty; its error rate is undefined"
            )));
        }
        if error_counts.iter().zip(&sizes).any(|(e, n)| e > n) {
            return Err(FanError::domain("error count exceeds group size"));
        }
        let rates = error_counts
            .iter()
            .zip(&sizes)
            .map(|(&e, &n)| e as f64 / n as f64)
            .collect();
        Ok(Self {
            error_counts,
            sizes,
            rates,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.sizes.len()
    }

    pub fn exact(&self, z: GroupId) -> Rational {
        ratio(self.error_counts[z] as u64, self.sizes[z] as u64)
    }

    /// `(1 + eta) * e_z`, clamped into `[0, 1]`, exactly.
    pub fn slackened_exact(&self, z: GroupId, eta: f64) -> Result<Rational> {
        let factor = decimal(1.0)? + decimal(eta)?;
        Ok(clamp01(factor * self.exact(z)))
    }

    /// `e'_z = (1 + eta) * e_z`, clamped into `[0, 1]`.
    pub fn slackened(&self, z: GroupId, eta: f64) -> f64 {
        ((1.0 + eta) * self.rates[z]).clamp(0.0, 1.0)
    }

    /// `a'_z = 1 - e'_z`.
    pub fn slackened_accuracy(&self, z: GroupId, eta: f64) -> f64 {
        1.0 - self.slackened(z, eta)
    }
}

pub fn group_error_rates(dataset: &Dataset, pred_labels: &[Label]) -> Result<GroupErrorRates> {
    if pred_labels.len() != dataset.len() {
        return Err(FanError::Dimension {
            expected: dataset.len(),
            got: pred_labels.len(),
        });
    }
    let mut errors = vec![0usize; dataset.n_groups()];
    for (s, &p) in dataset.samples().iter().zip(pred_labels) {
        if p != s.label {
            errors[s.group] += 1;
        }
    }
    GroupErrorRates::from_counts(errors, dataset.group_sizes())
}
