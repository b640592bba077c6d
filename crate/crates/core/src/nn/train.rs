use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Mode, Tape};
use super::model::ModelHandle;
use crate::data::{Dataset, InputShape};
use crate::rng::{self, Prng};
use crate::tensor::Matrix;
use crate::{Error, Result};

const BN_MOMENTUM: f64 = 0.1;
const MAX_SHIFT: i64 = 4;

/// Minibatch SGD settings. Learning rate at (0-based) epoch `e` is
/// `lr_initial * lr_decay_factor^(#{d in lr_decay_epochs : d <= e})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub lr_initial: f64,
    pub lr_decay_factor: f64,
    pub lr_decay_epochs: Vec<usize>,
    pub weight_decay: f64,
    /// Samples drawn (with replacement) per epoch, whatever the data size.
    pub nominal_epoch_size: usize,
    pub seed: u64,
    /// Random horizontal flips and shifts of up to 4 pixels (image inputs).
    pub augment: bool,
    /// Rescales each minibatch gradient to at most this L2 norm.
    pub max_grad_norm: Option<f64>,
}

impl Default for TrainConfig {
    /// Desk-scale schedule: 60 epochs, decay at 30 and 45, batch 32.
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 32,
            momentum: 0.9,
            lr_initial: 0.1,
            lr_decay_factor: 0.1,
            lr_decay_epochs: vec![30, 45],
            weight_decay: 5e-4,
            nominal_epoch_size: 2048,
            seed: 0,
            augment: false,
            max_grad_norm: Some(5.0),
        }
    }
}

impl TrainConfig {
    /// Full-scale image schedule: 200 epochs of 50,000 samples, batch 128,
    /// decay at 100 and 150, flips and shifts.
    pub fn full_scale() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 128,
            lr_decay_epochs: vec![100, 150],
            nominal_epoch_size: 50_000,
            augment: true,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.nominal_epoch_size == 0 {
            return Err(Error::invalid("batch_size and nominal_epoch_size must be >= 1"));
        }
        if !(self.lr_initial > 0.0 && self.lr_initial.is_finite()) {
            return Err(Error::invalid("lr_initial must be positive"));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor.is_finite()) {
            return Err(Error::invalid("lr_decay_factor must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::invalid("weight_decay must be non-negative"));
        }
        if self.max_grad_norm.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::invalid("max_grad_norm must be positive"));
        }
        if self.lr_decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("lr_decay_epochs must be strictly increasing"));
        }
        if self.lr_decay_epochs.last().is_some_and(|&e| e >= self.epochs) {
            return Err(Error::invalid("lr_decay_epochs must be < epochs"));
        }
        Ok(())
    }

    /// The same schedule stopped after `epochs` epochs (premature evaluation).
    pub fn truncated(&self, epochs: usize) -> Self {
        TrainConfig {
            epochs,
            lr_decay_epochs: self.lr_decay_epochs.iter().copied().filter(|&e| e < epochs).collect(),
            ..self.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        TrainConfig { seed, ..self.clone() }
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.nominal_epoch_size.div_ceil(self.batch_size)
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        let decays = self.lr_decay_epochs.iter().filter(|&&d| d <= epoch).count();
        self.lr_initial * libm::pow(self.lr_decay_factor, decays as f64)
    }
}

/// Trains `model` in place of its current parameters with momentum SGD on
/// softmax cross-entropy. L2 weight decay applies to weights only.
pub fn train(mut model: ModelHandle, data: &Dataset, cfg: &TrainConfig) -> Result<ModelHandle> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let d = model.spec().input_len();
    if data.dim() != d {
        return Err(Error::ShapeMismatch { expected: d, got: data.dim() });
    }
    if data.labels().iter().any(|&y| y >= model.spec().n_classes) {
        return Err(Error::invalid("data has more classes than the network"));
    }
    let augment = match model.spec().input_shape {
        InputShape::Image { height, width, channels } if cfg.augment => Some((height, width, channels)),
        _ => None,
    };
    let mut rng = rng::prng(cfg.seed);
    let decay_mask = model.layout().decay_mask();
    let mut velocity = vec![0.0; model.param_count()];
    let mut grads = vec![0.0; model.param_count()];
    let steps = cfg.steps_per_epoch();
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        let mut epoch_loss = 0.0;
        for step in 0..steps {
            let batch = cfg.batch_size.min(cfg.nominal_epoch_size - step * cfg.batch_size);
            let mut x = Vec::with_capacity(batch * d);
            let mut y = Vec::with_capacity(batch);
            for _ in 0..batch {
                let i = rng.gen_range(0..data.len());
                let start = x.len();
                x.extend(data.row(i).iter().map(|&v| f64::from(v)));
                if let Some(shape) = augment {
                    augment_in_place(&mut x[start..], shape, &mut rng);
                }
                y.push(data.labels()[i]);
            }
            grads.fill(0.0);
            let mut tape: Option<Tape> = None;
            let loss = model.accumulate_gradient(
                model.params(),
                Matrix::from_vec(batch, d, x),
                &y,
                Mode::Train,
                &mut rng,
                &mut grads,
                Some(&mut tape),
            )?;
            epoch_loss += loss * batch as f64;
            if let Some(tape) = tape {
                model.update_running_stats(&tape, BN_MOMENTUM);
            }
            let scale = match cfg.max_grad_norm {
                Some(c) => {
                    let norm = libm::sqrt(grads.iter().map(|g| g * g).sum::<f64>());
                    if norm > c { c / norm } else { 1.0 }
                }
                None => 1.0,
            };
            let params = model.params_mut();
            for k in 0..params.len() {
                let mut g = grads[k] * scale;
                if decay_mask[k] {
                    g += cfg.weight_decay * params[k];
                }
                velocity[k] = cfg.momentum * velocity[k] + g;
                params[k] -= lr * velocity[k];
            }
        }
        let mean = epoch_loss / cfg.nominal_epoch_size as f64;
        if !mean.is_finite() || model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
        model.record_epoch(mean);
        model.record_steps(steps);
    }
    Ok(model)
}

/// Random horizontal flip and integer shift with zero fill.
fn augment_in_place(sample: &mut [f64], (h, w, c): (usize, usize, usize), rng: &mut Prng) {
    let flip = rng.gen::<bool>();
    let dy = rng.gen_range(-MAX_SHIFT..=MAX_SHIFT);
    let dx = rng.gen_range(-MAX_SHIFT..=MAX_SHIFT);
    let src = sample.to_vec();
    for y in 0..h {
        for x in 0..w {
            let sy = y as i64 - dy;
            let sx0 = x as i64 - dx;
            let sx = if flip { w as i64 - 1 - sx0 } else { sx0 };
            let dst = (y * w + x) * c;
            if sy < 0 || sx < 0 || sy >= h as i64 || sx >= w as i64 {
                sample[dst..dst + c].fill(0.0);
            } else {
                let s = (sy as usize * w + sx as usize) * c;
                sample[dst..dst + c].copy_from_slice(&src[s..s + c]);
            }
        }
    }
}
