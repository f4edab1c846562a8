//! Fully connected ReLU network with a single sigmoid output, trained on
//! (optionally weighted) binary cross-entropy by mini-batch gradient descent
//! with momentum. Shared by the baseline scorer and both surrogates.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{FanError, Label, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub hidden_dims: Vec<usize>,
    pub dropout_prob: f64,
    pub activation: Activation,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![100, 100],
            dropout_prob: 0.5,
            activation: Activation::Relu,
            epochs: 100,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(FanError::domain(
                "hidden_dims must be a non-empty list of positive sizes",
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(FanError::domain("dropout_prob must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(FanError::domain("batch_size must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(FanError::domain("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(FanError::domain("momentum must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Dense layer computing `weights * x + bias`, weights stored row-major
/// with one row per output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn init(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (cols as f64).sqrt();
        let weights = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
        let bias = (0..rows).map(|_| rng.random_range(-bound..=bound)).collect();
        Self {
            rows,
            cols,
            weights,
            bias,
        }
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            *o = self.bias[r] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub input_dim: usize,
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(input_dim: usize, hidden_dims: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(hidden_dims.len() + 1);
        let mut fan_in = input_dim;
        for &h in hidden_dims {
            layers.push(Dense::init(h, fan_in, &mut rng));
            fan_in = h;
        }
        layers.push(Dense::init(1, fan_in, &mut rng));
        Self { input_dim, layers }
    }

    /// Checks that consecutive layer shapes chain and end in one output.
    pub fn validate(&self) -> Result<()> {
        let mut fan_in = self.input_dim;
        for layer in &self.layers {
            if layer.cols != fan_in || layer.weights.len() != layer.rows * layer.cols || layer.bias.len() != layer.rows
            {
                return Err(FanError::Format("inconsistent layer shapes".into()));
            }
            fan_in = layer.rows;
        }
        if fan_in != 1 || self.layers.is_empty() {
            return Err(FanError::Format("network must end in a single output".into()));
        }
        Ok(())
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        let mut input = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; layer.rows];
            layer.forward(&input, &mut out);
            if l < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            input = out;
        }
        input[0]
    }

    /// Probability of class 1; dropout is never applied here.
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }

    /// Trains in place and returns the mean training loss of every epoch.
    ///
    /// `weights` are per-sample loss weights; `None` means uniform.
    pub fn fit(
        &mut self,
        inputs: &[Vec<f64>],
        targets: &[Label],
        weights: Option<&[f64]>,
        config: &MlpConfig,
    ) -> Result<Vec<f64>> {
        config.validate()?;
        if inputs.len() != targets.len() {
            return Err(FanError::Dimension {
                expected: inputs.len(),
                got: targets.len(),
            });
        }
        if let Some(x) = inputs.iter().find(|x| x.len() != self.input_dim) {
            return Err(FanError::Dimension {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        if inputs.is_empty() {
            return Err(FanError::EmptyInput("no training samples".into()));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9));
        let mut velocity: Vec<Dense> = self.layers.iter().map(zeros_like).collect();
        let mut grads: Vec<Dense> = self.layers.iter().map(zeros_like).collect();
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        let mut curve = Vec::with_capacity(config.epochs);
        let mut scratch = Scratch::new(self);

        for epoch in 0..config.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            let mut epoch_weight = 0.0;
            for batch in order.chunks(config.batch_size) {
                grads.iter_mut().for_each(clear);
                for &i in batch {
                    let w = weights.map_or(1.0, |w| w[i]);
                    let loss = self.accumulate(
                        &inputs[i],
                        targets[i],
                        w / batch.len() as f64,
                        config.dropout_prob,
                        &mut rng,
                        &mut scratch,
                        &mut grads,
                    );
                    epoch_loss += w * loss;
                    epoch_weight += w;
                }
                for ((layer, v), g) in self.layers.iter_mut().zip(&mut velocity).zip(&grads) {
                    step(&mut layer.weights, &mut v.weights, &g.weights, config);
                    step(&mut layer.bias, &mut v.bias, &g.bias, config);
                }
            }
            let mean = epoch_loss / epoch_weight.max(f64::MIN_POSITIVE);
            if !mean.is_finite() || self.layers.iter().any(|l| l.weights.iter().any(|w| !w.is_finite())) {
                return Err(FanError::TrainingDiverged { epoch });
            }
            curve.push(mean);
        }
        Ok(curve)
    }

    /// Forward and backward pass for one sample; adds `scale * dLoss/dparam`
    /// into `grads` and returns the unweighted loss.
    #[allow(clippy::too_many_arguments)]
    fn accumulate(
        &self,
        x: &[f64],
        y: Label,
        scale: f64,
        dropout: f64,
        rng: &mut ChaCha8Rng,
        s: &mut Scratch,
        grads: &mut [Dense],
    ) -> f64 {
        let last = self.layers.len() - 1;
        s.acts[0].copy_from_slice(x);
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = s.acts.split_at_mut(l + 1);
            layer.forward(&before[l], &mut after[0]);
            if l < last {
                let keep = 1.0 - dropout;
                for (v, m) in after[0].iter_mut().zip(s.masks[l].iter_mut()) {
                    let kept = dropout == 0.0 || rng.random::<f64>() < keep;
                    *m = if *v > 0.0 && kept { 1.0 / keep } else { 0.0 };
                    *v *= *m;
                }
            }
        }
        let z = s.acts[last + 1][0];
        let target = f64::from(y);
        // softplus(z) - y z, evaluated stably
        let loss = z.max(0.0) - z * target + (-z.abs()).exp().ln_1p();

        s.delta[last + 1][0] = (sigmoid(z) - target) * scale;
        for l in (0..=last).rev() {
            let layer = &self.layers[l];
            let (lower, upper) = s.delta.split_at_mut(l + 1);
            let upstream = &upper[0];
            let g = &mut grads[l];
            let input = &s.acts[l];
            for r in 0..layer.rows {
                let d = upstream[r];
                if d == 0.0 {
                    continue;
                }
                g.bias[r] += d;
                let grow = &mut g.weights[r * layer.cols..(r + 1) * layer.cols];
                for (gw, xv) in grow.iter_mut().zip(input) {
                    *gw += d * xv;
                }
            }
            if l > 0 {
                let down = &mut lower[l];
                down.iter_mut().for_each(|v| *v = 0.0);
                for r in 0..layer.rows {
                    let d = upstream[r];
                    if d == 0.0 {
                        continue;
                    }
                    let wrow = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                    for (dv, w) in down.iter_mut().zip(wrow) {
                        *dv += d * w;
                    }
                }
                // through dropout mask and ReLU derivative
                for (dv, m) in down.iter_mut().zip(&s.masks[l - 1]) {
                    *dv *= m;
                }
            }
        }
        loss
    }
}

struct Scratch {
    acts: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    masks: Vec<Vec<f64>>,
}

impl Scratch {
    fn new(net: &Mlp) -> Self {
        let mut dims = vec![net.input_dim];
        dims.extend(net.layers.iter().map(|l| l.rows));
        Self {
            acts: dims.iter().map(|&d| vec![0.0; d]).collect(),
            delta: dims.iter().map(|&d| vec![0.0; d]).collect(),
            masks: net.layers[..net.layers.len() - 1]
                .iter()
                .map(|l| vec![0.0; l.rows])
                .collect(),
        }
    }
}

fn zeros_like(layer: &Dense) -> Dense {
    Dense {
        rows: layer.rows,
        cols: layer.cols,
        weights: vec![0.0; layer.weights.len()],
        bias: vec![0.0; layer.bias.len()],
    }
}

fn clear(layer: &mut Dense) {
    layer.weights.iter_mut().for_each(|v| *v = 0.0);
    layer.bias.iter_mut().for_each(|v| *v = 0.0);
}

fn step(params: &mut [f64], velocity: &mut [f64], grad: &[f64], config: &MlpConfig) {
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = config.momentum * *v - config.learning_rate * g;
        *p += *v;
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> MlpConfig {
        MlpConfig {
            hidden_dims: vec![8],
            dropout_prob: 0.0,
            epochs: 60,
            batch_size: 16,
            learning_rate: 0.05,
            ..MlpConfig::default()
        }
    }

    /// Central finite differences against the analytic gradient.
    #[test]
    fn gradient_matches_finite_differences() {
        let net = Mlp::new(3, &[4, 3], 11);
        let x = vec![0.3, -1.2, 0.7];
        let mut grads: Vec<Dense> = net.layers.iter().map(zeros_like).collect();
        let mut scratch = Scratch::new(&net);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        net.accumulate(&x, 1, 1.0, 0.0, &mut rng, &mut scratch, &mut grads);

        let loss = |n: &Mlp| {
            let z = n.logit(&x);
            z.max(0.0) - z + (-z.abs()).exp().ln_1p()
        };
        let h = 1e-6;
        for l in 0..net.layers.len() {
            for k in 0..net.layers[l].weights.len() {
                let mut plus = net.clone();
                plus.layers[l].weights[k] += h;
                let mut minus = net.clone();
                minus.layers[l].weights[k] -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                assert!(
                    (numeric - grads[l].weights[k]).abs() < 1e-6,
                    "layer {l} weight {k}: {numeric} vs {}",
                    grads[l].weights[k]
                );
            }
        }
    }

    #[test]
    fn learns_a_threshold() {
        let xs: Vec<Vec<f64>> = (0..200).map(|i| vec![(i as f64 - 100.0) / 50.0]).collect();
        let ys: Vec<Label> = xs.iter().map(|x| u8::from(x[0] > 0.0)).collect();
        let mut net = Mlp::new(1, &[8], 1);
        let curve = net.fit(&xs, &ys, None, &small_config()).unwrap();
        assert!(curve.last().unwrap() < curve.first().unwrap());
        let correct = xs
            .iter()
            .zip(&ys)
            .filter(|(x, &y)| u8::from(net.predict_proba(x) >= 0.5) == y)
            .count();
        assert!(correct >= 190, "{correct}");
    }

    #[test]
    fn training_is_reproducible() {
        let xs: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 25.0 - 1.0, (i % 7) as f64]).collect();
        let ys: Vec<Label> = (0..50).map(|i| u8::from(i % 3 == 0)).collect();
        let cfg = MlpConfig {
            dropout_prob: 0.3,
            ..small_config()
        };
        let mut a = Mlp::new(2, &[8], 5);
        let mut b = Mlp::new(2, &[8], 5);
        assert_eq!(
            a.fit(&xs, &ys, None, &cfg).unwrap(),
            b.fit(&xs, &ys, None, &cfg).unwrap()
        );
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![1e3 * (i + 1) as f64]).collect();
        let ys: Vec<Label> = (0..20).map(|i| (i % 2) as u8).collect();
        let cfg = MlpConfig {
            learning_rate: 1e306,
            ..small_config()
        };
        let mut net = Mlp::new(1, &[4], 0);
        assert!(matches!(
            net.fit(&xs, &ys, None, &cfg),
            Err(FanError::TrainingDiverged { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = MlpConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.dropout_prob = 1.0;
        assert!(cfg.validate().is_err());
        cfg.dropout_prob = 0.0;
        cfg.hidden_dims.clear();
        assert!(cfg.validate().is_err());
    }
}
