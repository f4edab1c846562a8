//! Stage II: the abstention block `h_A` and flip block `h_F`, trained on
//! features concatenated with the baseline score, and their composition
//! into the deployed rule.
//!
//! A sample is abstained when `h_A` outputs 0. Otherwise the baseline label
//! `1[s >= t0]` is emitted, inverted when `h_F` outputs 1.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baseline::{load_json, save_json, BaselineModel};
use crate::cells::DecisionVector;
use crate::data::Dataset;
use crate::mlp::{Mlp, MlpConfig};
use crate::{FanError, Label, Result};

/// Probability threshold of both blocks.
pub const SURROGATE_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SurrogateNet {
    Mlp {
        net: Mlp,
    },
    /// Fitted on labels of a single class.
    Constant {
        label: Label,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub net: SurrogateNet,
    /// Feature dimension plus one for the baseline score.
    pub input_dim: usize,
    pub config: MlpConfig,
    pub class_weighted: bool,
    pub train_accuracy: f64,
    pub loss_curve: Vec<f64>,
}

impl SurrogateModel {
    pub fn proba(&self, input: &[f64]) -> f64 {
        match &self.net {
            SurrogateNet::Mlp { net } => net.predict_proba(input),
            SurrogateNet::Constant { label } => f64::from(*label),
        }
    }

    pub fn predict(&self, input: &[f64]) -> Label {
        u8::from(self.proba(input) >= SURROGATE_THRESHOLD)
    }

    /// Per-epoch mean training loss; empty for a constant model.
    pub fn training_curve(&self) -> &[f64] {
        &self.loss_curve
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        save_json(self, path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let model: Self = load_json(path.as_ref())?;
        if let SurrogateNet::Mlp { net } = &model.net {
            net.validate()?;
            if net.input_dim != model.input_dim {
                return Err(FanError::Format(
                    "surrogate input dimension disagrees with its network".into(),
                ));
            }
        }
        Ok(model)
    }
}

/// Samples used to train the flip block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipTrainingSet {
    /// Only samples the adjusted decisions do not abstain on.
    #[default]
    NonAbstained,
    AllSamples,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateOptions {
    /// Weight each class by `n / (2 n_class)` in the loss of `h_A`.
    pub class_weighting: bool,
    /// The same weighting for `h_F`.
    pub flip_class_weighting: bool,
    pub flip_training_set: FlipTrainingSet,
}

impl Default for SurrogateOptions {
    fn default() -> Self {
        Self {
            class_weighting: true,
            flip_class_weighting: false,
            flip_training_set: FlipTrainingSet::NonAbstained,
        }
    }
}

/// `[features, score]`.
pub fn surrogate_input(features: &[f64], score: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(features.len() + 1);
    x.extend_from_slice(features);
    x.push(score);
    x
}

pub fn surrogate_inputs(dataset: &Dataset, scores: &[f64]) -> Result<Vec<Vec<f64>>> {
    if scores.len() != dataset.len() {
        return Err(FanError::Dimension {
            expected: dataset.len(),
            got: scores.len(),
        });
    }
    Ok(dataset
        .samples()
        .iter()
        .zip(scores)
        .map(|(s, &score)| surrogate_input(&s.features, score))
        .collect())
}

/// Fits a surrogate to binary targets; single-class targets give a constant
/// model and a warning.
pub fn train_surrogate(
    inputs: &[Vec<f64>],
    targets: &[Label],
    config: &MlpConfig,
    class_weighting: bool,
) -> Result<SurrogateModel> {
    config.validate()?;
    if inputs.len() != targets.len() {
        return Err(FanError::Dimension {
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    let Some(first) = inputs.first() else {
        return Err(FanError::EmptyInput("no surrogate training samples".into()));
    };
    let input_dim = first.len();
    let positives = targets.iter().filter(|&&t| t == 1).count();
    let negatives = targets.len() - positives;
    let (net, loss_curve) = if positives == 0 || negatives == 0 {
        let label = u8::from(positives > 0);
        log::warn!("surrogate targets are all {label}; fitting a constant model");
        (SurrogateNet::Constant { label }, Vec::new())
    } else {
        let weights: Option<Vec<f64>> = class_weighting.then(|| {
            let n = targets.len() as f64;
            let w = [n / (2.0 * negatives as f64), n / (2.0 * positives as f64)];
            targets.iter().map(|&t| w[t as usize]).collect()
        });
        let mut net = Mlp::new(input_dim, &config.hidden_dims, config.seed);
        let curve = net.fit(inputs, targets, weights.as_deref(), config)?;
        (SurrogateNet::Mlp { net }, curve)
    };
    let mut model = SurrogateModel {
        net,
        input_dim,
        config: config.clone(),
        class_weighted: class_weighting,
        train_accuracy: 0.0,
        loss_curve,
    };
    let correct = inputs
        .iter()
        .zip(targets)
        .filter(|(x, &t)| model.predict(x) == t)
        .count();
    model.train_accuracy = correct as f64 / targets.len() as f64;
    Ok(model)
}

fn check_lengths(dataset: &Dataset, decisions: &DecisionVector) -> Result<()> {
    if decisions.len() != dataset.len() {
        return Err(FanError::Dimension {
            expected: dataset.len(),
            got: decisions.len(),
        });
    }
    Ok(())
}

/// Trains `h_A` to reproduce `omega`.
pub fn train_ab(
    dataset: &Dataset,
    scores: &[f64],
    decisions: &DecisionVector,
    config: &MlpConfig,
    options: &SurrogateOptions,
) -> Result<SurrogateModel> {
    check_lengths(dataset, decisions)?;
    let inputs = surrogate_inputs(dataset, scores)?;
    let targets: Vec<Label> = decisions.decisions.iter().map(|d| u8::from(d.omega)).collect();
    train_surrogate(&inputs, &targets, config, options.class_weighting)
}

/// Trains `h_F` to reproduce `f`, by default on non-abstained samples only.
pub fn train_fb(
    dataset: &Dataset,
    scores: &[f64],
    decisions: &DecisionVector,
    config: &MlpConfig,
    options: &SurrogateOptions,
) -> Result<SurrogateModel> {
    check_lengths(dataset, decisions)?;
    let all = surrogate_inputs(dataset, scores)?;
    let (inputs, targets): (Vec<Vec<f64>>, Vec<Label>) = all
        .into_iter()
        .zip(&decisions.decisions)
        .filter(|(_, d)| d.omega || options.flip_training_set == FlipTrainingSet::AllSamples)
        .map(|(x, d)| (x, u8::from(d.flip)))
        .unzip();
    train_surrogate(&inputs, &targets, config, options.flip_class_weighting)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FanOutput {
    Abstain,
    Predict(Label),
}

impl FanOutput {
    pub fn label(&self) -> Option<Label> {
        match *self {
            FanOutput::Abstain => None,
            FanOutput::Predict(y) => Some(y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FanModel {
    pub baseline: BaselineModel,
    pub ab: SurrogateModel,
    pub fb: SurrogateModel,
}

/// Applies the composed rule to one sample; `h_F` is never consulted for an
/// abstained sample.
pub fn fan_predict(fan: &FanModel, features: &[f64]) -> FanOutput {
    let s = fan.baseline.score_one(features);
    let x = surrogate_input(features, s);
    if fan.ab.predict(&x) == 0 {
        return FanOutput::Abstain;
    }
    let pred = u8::from(s >= fan.baseline.threshold);
    FanOutput::Predict(pred ^ fan.fb.predict(&x))
}

/// Trains both blocks in parallel.
pub fn train_fan(
    baseline: BaselineModel,
    dataset: &Dataset,
    scores: &[f64],
    decisions: &DecisionVector,
    ab_config: &MlpConfig,
    fb_config: &MlpConfig,
    options: &SurrogateOptions,
) -> Result<FanModel> {
    let (ab, fb) = rayon::join(
        || train_ab(dataset, scores, decisions, ab_config, options),
        || train_fb(dataset, scores, decisions, fb_config, options),
    );
    Ok(FanModel {
        baseline,
        ab: ab?,
        fb: fb?,
    })
}

pub const FAN_MANIFEST: &str = "manifest.json";
pub const FAN_FORMAT: &str = "fan-model";

/// Index of a saved [`FanModel`] directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FanManifest {
    pub format: String,
    pub version: u32,
    pub threshold: f64,
    pub baseline: String,
    pub ab: String,
    pub fb: String,
    /// SHA-256 of each component's JSON training configuration.
    pub config_hashes: ConfigHashes,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigHashes {
    pub baseline: String,
    pub ab: String,
    pub fb: String,
}

/// Lowercase hex SHA-256 of a value's JSON encoding.
pub fn json_sha256<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl FanModel {
    pub fn threshold(&self) -> f64 {
        self.baseline.threshold
    }

    pub fn predict_dataset(&self, dataset: &Dataset) -> Vec<FanOutput> {
        dataset
            .samples()
            .iter()
            .map(|s| fan_predict(self, &s.features))
            .collect()
    }

    /// Writes the three networks and a manifest into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| FanError::io(dir, e))?;
        let manifest = FanManifest {
            format: FAN_FORMAT.into(),
            version: crate::baseline::MODEL_VERSION,
            threshold: self.threshold(),
            baseline: "baseline.json".into(),
            ab: "ab.json".into(),
            fb: "fb.json".into(),
            config_hashes: ConfigHashes {
                baseline: json_sha256(&self.baseline.config)?,
                ab: json_sha256(&self.ab.config)?,
                fb: json_sha256(&self.fb.config)?,
            },
        };
        self.baseline.save(dir.join(&manifest.baseline))?;
        self.ab.save(dir.join(&manifest.ab))?;
        self.fb.save(dir.join(&manifest.fb))?;
        let path = dir.join(FAN_MANIFEST);
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&path, text).map_err(|e| FanError::io(path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path: PathBuf = dir.join(FAN_MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| FanError::io(&path, e))?;
        let manifest: FanManifest = serde_json::from_str(&text)?;
        if manifest.format != FAN_FORMAT || manifest.version != crate::baseline::MODEL_VERSION {
            return Err(FanError::Format(format!(
                "expected {FAN_FORMAT} v{}, found {} v{}",
                crate::baseline::MODEL_VERSION,
                manifest.format,
                manifest.version
            )));
        }
        let fan = FanModel {
            baseline: BaselineModel::load(dir.join(&manifest.baseline))?,
            ab: SurrogateModel::load(dir.join(&manifest.ab))?,
            fb: SurrogateModel::load(dir.join(&manifest.fb))?,
        };
        if fan.threshold() != manifest.threshold {
            return Err(FanError::Format(
                "manifest threshold disagrees with the baseline model".into(),
            ));
        }
        let expected = fan.baseline.net.input_dim + 1;
        if fan.ab.input_dim != expected || fan.fb.input_dim != expected {
            return Err(FanError::Dimension {
                expected,
                got: fan.ab.input_dim.max(fan.fb.input_dim),
            });
        }
        Ok(fan)
    }
}

/// Mean and sample standard deviation of several loss curves, epoch by
/// epoch, over the epochs all curves share.
pub fn curve_summary(curves: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let epochs = curves.iter().map(Vec::len).min().unwrap_or(0);
    (0..epochs)
        .map(|e| {
            let n = curves.len() as f64;
            let mean = curves.iter().map(|c| c[e]).sum::<f64>() / n;
            let var = if curves.len() > 1 {
                curves.iter().map(|c| (c[e] - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            (mean, var.sqrt())
        })
        .collect()
}
