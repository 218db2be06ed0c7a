use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{zero_grads, Layer, Mode};
use super::loss::{mse, softmax_cross_entropy};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    #[serde(flatten)]
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        Self { kind: OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }, lr, clip_norm: Some(5.0) }
    }

    pub fn sgd(lr: f64, momentum: f64) -> Self {
        Self { kind: OptimizerKind::Sgd { momentum }, lr, clip_norm: Some(5.0) }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: i32,
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig) -> Self {
        Self { cfg, first: Vec::new(), second: Vec::new(), steps: 0 }
    }

    /// Apply accumulated gradients, then clear them. Returns the gradient
    /// norm before clipping.
    pub fn step(&mut self, model: &mut dyn Layer) -> f64 {
        let mut sq = 0.0;
        model.visit_params_ref(&mut |p| {
            if p.trainable {
                sq += p.grad.data().iter().map(|g| g * g).sum::<f64>();
            }
        });
        let norm = sq.sqrt();
        let scale = match self.cfg.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.steps += 1;
        let (cfg, steps) = (self.cfg, self.steps);
        let (first, second) = (&mut self.first, &mut self.second);
        let mut idx = 0;
        model.visit_params(&mut |p| {
            if !p.trainable {
                return;
            }
            if first.len() <= idx {
                first.push(vec![0.0; p.value.len()]);
                second.push(vec![0.0; p.value.len()]);
            }
            let (m, v) = (&mut first[idx], &mut second[idx]);
            let grads = p.grad.data();
            let vals = p.value.data_mut();
            match cfg.kind {
                OptimizerKind::Sgd { momentum } => {
                    for i in 0..vals.len() {
                        m[i] = momentum * m[i] + grads[i] * scale;
                        vals[i] -= cfg.lr * m[i];
                    }
                }
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let c1 = 1.0 - beta1.powi(steps);
                    let c2 = 1.0 - beta2.powi(steps);
                    for i in 0..vals.len() {
                        let g = grads[i] * scale;
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                        vals[i] -= cfg.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                    }
                }
            }
            p.zero_grad();
            idx += 1;
        });
        norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Learning-rate multiplier applied after each epoch.
    #[serde(default = "unit_decay")]
    pub lr_decay: f64,
    pub seed: u64,
}

fn unit_decay() -> f64 {
    1.0
}

#[derive(Debug, Clone)]
pub enum Target {
    Classes(Vec<usize>),
    Values(Tensor),
}

/// Mean training loss per epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epoch_losses: Vec<f64>,
}

impl TrainHistory {
    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// Loss and output gradient for one batch.
pub fn batch_loss(output: &Tensor, target: &Target) -> Result<(f64, Tensor)> {
    match target {
        Target::Classes(labels) => softmax_cross_entropy(output, labels),
        Target::Values(t) => mse(output, t),
    }
}

/// Mini-batch training over `n` examples; `batch` assembles inputs and
/// targets for the given example indices. Shuffling is seeded.
pub fn train<F>(model: &mut dyn Layer, n: usize, cfg: &TrainConfig, mut batch: F) -> Result<TrainHistory>
where
    F: FnMut(&[usize]) -> Result<(Tensor, Target)>,
{
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(Error::config("epochs and batch size must be positive"));
    }
    if n == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory::default();
    zero_grads(model);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, target) = batch(chunk)?;
            let out = model.forward(&x, Mode::Train)?;
            let (loss, grad) = batch_loss(&out, &target)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("loss became {loss} in epoch {}", epoch + 1)));
            }
            model.backward(&grad)?;
            opt.step(model);
            total += loss * chunk.len() as f64;
        }
        opt.cfg.lr *= cfg.lr_decay;
        let mean = total / n as f64;
        log::debug!("epoch {} loss {mean:.6}", epoch + 1);
        history.epoch_losses.push(mean);
    }
    Ok(history)
}
