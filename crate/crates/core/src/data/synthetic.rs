use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Sample};
use crate::{FanError, Result};

/// Parameters of a synthetic population.
///
/// Each group `z` gets exactly `round(tau[z] * sizes[z])` positive labels.
/// Every sample carries a latent score `(2y - 1) + score_noise * N(0, 1)`;
/// feature 0 is the latent score, feature 1 a noisier copy, feature 2 the
/// group id and any further features are pure noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub tau: Vec<f64>,
    #[serde(default = "default_noise")]
    pub score_noise: f64,
    #[serde(default = "default_dim")]
    pub feature_dim: usize,
}

fn default_noise() -> f64 {
    1.0
}

fn default_dim() -> usize {
    4
}

impl SyntheticConfig {
    pub fn new(seed: u64, sizes: Vec<usize>, tau: Vec<f64>) -> Self {
        Self {
            seed,
            sizes,
            tau,
            score_noise: default_noise(),
            feature_dim: default_dim(),
        }
    }
}

pub fn gen_synthetic(config: &SyntheticConfig) -> Result<Dataset> {
    let n_groups = config.sizes.len();
    if n_groups == 0 {
        return Err(FanError::domain("at least one group is required"));
    }
    if config.tau.len() != n_groups {
        return Err(FanError::Dimension {
            expected: n_groups,
            got: config.tau.len(),
        });
    }
    if let Some(t) = config.tau.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(FanError::domain(format!("qualification rate {t} is outside [0, 1]")));
    }
    if config.sizes.contains(&0) {
        return Err(FanError::domain("every group needs at least one sample"));
    }
    if !(config.score_noise.is_finite() && config.score_noise >= 0.0) {
        return Err(FanError::domain("score_noise must be a finite non-negative number"));
    }
    if config.feature_dim == 0 {
        return Err(FanError::domain("feature_dim must be positive"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut samples = Vec::with_capacity(config.sizes.iter().sum());
    for (z, (&n, &tau)) in config.sizes.iter().zip(&config.tau).enumerate() {
        let positives = (tau * n as f64).round() as usize;
        let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < positives)).collect();
        labels.shuffle(&mut rng);
        for label in labels {
            let latent = if label == 1 { 1.0 } else { -1.0 } + config.score_noise * normal(&mut rng);
            let mut features = Vec::with_capacity(config.feature_dim);
            for j in 0..config.feature_dim {
                features.push(match j {
                    0 => latent,
                    1 => 0.5 * latent + normal(&mut rng),
                    2 => z as f64,
                    _ => normal(&mut rng),
                });
            }
            samples.push(Sample {
                features,
                group: z,
                label,
            });
        }
    }
    samples.shuffle(&mut rng);
    Dataset::new(samples, n_groups)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}
