use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Gradients, MlpModel, NetError};
use crate::dataset::EclipseDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub minibatch_size: usize,
    pub initial_lr: f64,
    pub epochs: usize,
    pub lr_decay: f64,
    /// First (0-based) epoch trained at the decayed rate.
    pub decay_start_epoch: usize,
    pub decay_every: usize,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            minibatch_size: 256,
            initial_lr: 3e-4,
            epochs: 60,
            lr_decay: 0.7,
            decay_start_epoch: 25,
            decay_every: 5,
            shuffle_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.minibatch_size == 0 || self.epochs == 0 || self.decay_every == 0 {
            return Err(NetError::Config(
                "minibatch size, epochs and decay interval must be positive".into(),
            ));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(NetError::Config(format!(
                "learning rate {}",
                self.initial_lr
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay < 1.0) {
            return Err(NetError::Config(format!(
                "decay factor {} outside (0, 1)",
                self.lr_decay
            )));
        }
        Ok(())
    }
}

/// Rate for 0-based `epoch`: multiplied by `lr_decay` at `decay_start_epoch`
/// and again every `decay_every` epochs after it.
pub fn learning_rate(config: &TrainConfig, epoch: usize) -> f64 {
    let k = if epoch < config.decay_start_epoch {
        0
    } else {
        (epoch - config.decay_start_epoch) / config.decay_every + 1
    };
    config.initial_lr * config.lr_decay.powi(k as i32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub lr: f64,
    /// Sample-weighted mean of the minibatch losses seen during the epoch.
    pub train_mse: f64,
    /// Full-pass loss on the validation set after the epoch.
    pub valid_mse: Option<f64>,
}

/// Adam with moment decays 0.9 / 0.999 and epsilon 1e-8.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPSILON: f64 = 1e-8;

    pub fn new(model: &MlpModel) -> Self {
        let n = model.param_count();
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn update(&mut self, model: &mut MlpModel, grads: &Gradients, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        let mut k = 0;
        for (layer, g) in model.layers_mut().iter_mut().zip(&grads.layers) {
            let params = layer.w.iter_mut().chain(layer.b.iter_mut());
            let gs = g.w.iter().chain(g.b.iter());
            for (p, &gi) in params.zip(gs) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * gi;
                *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * gi * gi;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPSILON);
                k += 1;
            }
        }
    }
}

fn mse(model: &MlpModel, inputs: &[[f64; 6]], targets: &[f64]) -> Result<f64, NetError> {
    let pred = model.predict(inputs)?;
    let sum: f64 = pred
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / targets.len() as f64)
}

/// Mean squared error of `model` on `dataset`.
pub fn evaluate(model: &MlpModel, dataset: &EclipseDataset) -> Result<f64, NetError> {
    if dataset.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    let inputs: Vec<[f64; 6]> = dataset.samples.iter().map(|s| s.input()).collect();
    let targets: Vec<f64> = dataset.samples.iter().map(|s| s.f_value).collect();
    mse(model, &inputs, &targets)
}

/// Minibatch Adam on raw arrays. Each epoch is one pass in an order
/// shuffled by a generator seeded once from `shuffle_seed`.
pub fn train_arrays(
    model: &mut MlpModel,
    inputs: &[[f64; 6]],
    targets: &[f64],
    config: &TrainConfig,
    valid: Option<(&[[f64; 6]], &[f64])>,
) -> Result<Vec<EpochLoss>, NetError> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(NetError::EmptyDataset);
    }
    if inputs.len() != targets.len() || model.config().input_dim != 6 {
        return Err(NetError::Shape("inputs and targets disagree".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.shuffle_seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut adam = Adam::new(model);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = learning_rate(config, epoch);
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for batch in order.chunks(config.minibatch_size) {
            let x = DMatrix::from_fn(6, batch.len(), |r, c| inputs[batch[c]][r]);
            let y = DMatrix::from_fn(1, batch.len(), |_, c| targets[batch[c]]);
            let (grads, loss) = model.backward(&x, &y)?;
            if !loss.is_finite() {
                return Err(NetError::Diverged { epoch });
            }
            adam.update(model, &grads, lr);
            weighted += loss * batch.len() as f64;
        }
        let train_mse = weighted / inputs.len() as f64;
        let valid_mse = match valid {
            Some((vx, vy)) if !vx.is_empty() => Some(mse(model, vx, vy)?),
            _ => None,
        };
        if !train_mse.is_finite() || valid_mse.is_some_and(|v| !v.is_finite()) {
            return Err(NetError::Diverged { epoch });
        }
        history.push(EpochLoss {
            epoch,
            lr,
            train_mse,
            valid_mse,
        });
    }
    model.history.extend_from_slice(&history);
    Ok(history)
}

/// [`train_arrays`] on dataset samples.
pub fn train(
    model: &mut MlpModel,
    dataset: &EclipseDataset,
    config: &TrainConfig,
    valid: Option<&EclipseDataset>,
) -> Result<Vec<EpochLoss>, NetError> {
    let split = |d: &EclipseDataset| -> (Vec<[f64; 6]>, Vec<f64>) {
        (
            d.samples.iter().map(|s| s.input()).collect(),
            d.samples.iter().map(|s| s.f_value).collect(),
        )
    };
    let (x, y) = split(dataset);
    let v = valid.map(split);
    train_arrays(
        model,
        &x,
        &y,
        config,
        v.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice())),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::{init_model, Activation, MlpConfig};

    #[test]
    fn staircase_schedule() {
        let c = TrainConfig::default();
        assert_eq!(learning_rate(&c, 0), 3e-4);
        assert_eq!(learning_rate(&c, 24), 3e-4);
        assert!((learning_rate(&c, 25) - 2.1e-4).abs() < 1e-18);
        assert!((learning_rate(&c, 29) - 2.1e-4).abs() < 1e-18);
        assert!((learning_rate(&c, 31) - 1.47e-4).abs() < 1e-18);
    }

    #[test]
    fn rejects_bad_configs_and_empty_data() {
        let mut m = init_model(&MlpConfig::small(Activation::Sine, 0)).unwrap();
        let bad = TrainConfig {
            lr_decay: 1.5,
            ..TrainConfig::default()
        };
        assert!(train_arrays(&mut m, &[[0.0; 6]], &[0.0], &bad, None).is_err());
        assert!(matches!(
            train_arrays(&mut m, &[], &[], &TrainConfig::default(), None),
            Err(NetError::EmptyDataset)
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let mut m = init_model(&MlpConfig::small(Activation::Rectifier, 0)).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let r = train_arrays(&mut m, &[[0.1; 6]], &[f64::INFINITY], &cfg, None);
        assert!(matches!(r, Err(NetError::Diverged { epoch: 0 })));
    }
}
