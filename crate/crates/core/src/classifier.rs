//! Complexity classifier: scalogram stack to confidence over levels.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ScalogramStack;
use crate::metrics::{classification_report, ClassificationReport};
use crate::nn::loss::softmax;
use crate::nn::{
    checkpoint, train, BatchNorm2d, Conv2d, Dense, Flatten, Layer, MaxPool2d, Mode, OptimizerConfig, Relu, Sequential,
    SpatialAttention, Target, Tensor, TrainConfig, TrainHistory,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub filters: usize,
    pub kernel: usize,
    pub attention: bool,
    pub pool: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub input_side: usize,
    pub channels: usize,
    pub blocks: Vec<BlockSpec>,
    pub classes: usize,
    pub attention_kernel: usize,
}

impl ClassifierConfig {
    /// 64x64x4 input, 16/32/64 filters, attention in every block.
    pub fn desk() -> Self {
        let block = |filters, pool| BlockSpec { filters, kernel: 3, attention: true, pool };
        Self {
            input_side: 64,
            channels: 4,
            blocks: vec![block(16, true), block(32, true), block(64, false)],
            classes: 3,
            attention_kernel: 7,
        }
    }

    /// 227x227x8 input.
    pub fn paper() -> Self {
        Self { input_side: 227, channels: 8, ..Self::desk() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config("classifier needs at least 2 classes"));
        }
        if self.blocks.is_empty() {
            return Err(Error::config("classifier needs at least one block"));
        }
        if self.input_side == 0 || self.channels == 0 {
            return Err(Error::config("classifier input must be non-empty"));
        }
        if self.blocks.iter().any(|b| b.filters == 0 || b.kernel % 2 == 0) {
            return Err(Error::config("blocks need filters > 0 and odd kernels"));
        }
        if self.attention_kernel % 2 == 0 {
            return Err(Error::config("attention kernel must be odd"));
        }
        if self.feature_side() == 0 {
            return Err(Error::config("input too small for the pooling stages"));
        }
        Ok(())
    }

    fn feature_side(&self) -> usize {
        self.blocks.iter().filter(|b| b.pool).fold(self.input_side, |s, _| s / 2)
    }

    pub fn flatten_len(&self) -> usize {
        let side = self.feature_side();
        side * side * self.blocks.last().map_or(self.channels, |b| b.filters)
    }
}

/// Raw head scores and their renormalization `C_n^i = P^i / sum P`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceVector {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

impl ConfidenceVector {
    pub fn from_raw(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() || raw.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::NonFinite("confidence scores".into()));
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(Error::NonFinite("confidence scores sum to zero".into()));
        }
        let normalized = raw.iter().map(|p| p / sum).collect();
        Ok(Self { raw, normalized })
    }

    /// 1-based argmax, lowest index on ties.
    pub fn predict_level(&self) -> usize {
        predict_level(&self.normalized)
    }

    /// Normalized score of the predicted level.
    pub fn top(&self) -> f64 {
        self.normalized[self.predict_level() - 1]
    }
}

/// 1-based argmax with ties broken toward the lowest index.
pub fn predict_level(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best + 1
}

#[derive(Clone)]
pub struct Classifier {
    cfg: ClassifierConfig,
    net: Sequential,
}

impl std::fmt::Debug for Classifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Classifier").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

fn stacks_to_tensor(stacks: &[&ScalogramStack], cfg: &ClassifierConfig) -> Result<Tensor> {
    let (side, ch) = (cfg.input_side, cfg.channels);
    let mut data = Vec::with_capacity(stacks.len() * ch * side * side);
    for s in stacks {
        if s.zeta != side || s.channels != ch {
            return Err(Error::shape(format!(
                "stack is {}x{}x{}, classifier expects {side}x{side}x{ch}",
                s.zeta, s.zeta, s.channels
            )));
        }
        data.extend(s.pixels.iter().map(|&p| p as f64 / 255.0));
    }
    Tensor::new(vec![stacks.len(), ch, side, side], data)
}

impl Classifier {
    pub fn new(cfg: ClassifierConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Sequential::new();
        let mut in_ch = cfg.channels;
        for b in &cfg.blocks {
            net.push(Conv2d::new(in_ch, b.filters, b.kernel, &mut rng));
            net.push(BatchNorm2d::new(b.filters));
            net.push(Relu::new());
            if b.attention {
                net.push(SpatialAttention::new(cfg.attention_kernel, &mut rng));
            }
            if b.pool {
                net.push(MaxPool2d::new());
            }
            in_ch = b.filters;
        }
        net.push(Flatten::new());
        net.push(Dense::new(cfg.flatten_len(), cfg.classes, &mut rng));
        Ok(Self { cfg, net })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.cfg
    }

    pub fn network(&self) -> &Sequential {
        &self.net
    }

    pub fn param_count(&self) -> usize {
        crate::nn::layers::param_count(&self.net)
    }

    /// Softmax head followed by renormalization.
    pub fn classify_batch(&mut self, stacks: &[&ScalogramStack]) -> Result<Vec<ConfidenceVector>> {
        let x = stacks_to_tensor(stacks, &self.cfg)?;
        let logits = self.net.forward(&x, Mode::Eval)?;
        let probs = softmax(&logits)?;
        probs.data().chunks(self.cfg.classes).map(|p| ConfidenceVector::from_raw(p.to_vec())).collect()
    }

    pub fn classify(&mut self, stack: &ScalogramStack) -> Result<ConfidenceVector> {
        Ok(self.classify_batch(&[stack])?.remove(0))
    }

    /// Levels for many stacks, evaluated in chunks.
    pub fn predict(&mut self, stacks: &[&ScalogramStack]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(stacks.len());
        for chunk in stacks.chunks(32) {
            out.extend(self.classify_batch(chunk)?.iter().map(ConfidenceVector::predict_level));
        }
        Ok(out)
    }

    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        checkpoint::save(&self.net, w)
    }

    pub fn load<R: Read>(cfg: ClassifierConfig, r: R) -> Result<Self> {
        let mut c = Self::new(cfg, 0)?;
        checkpoint::load(&mut c.net, r)?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for ClassifierTraining {
    fn default() -> Self {
        Self { epochs: 6, batch_size: 16, lr: 2e-3, lr_decay: 0.7, train_fraction: 0.7, seed: 0 }
    }
}

/// Per-class seeded split; each class contributes `round(fraction * count)`
/// examples to training. Returns `(train, validation)` indices.
pub fn stratified_split(labels: &[usize], r: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config(format!("train fraction {fraction} must lie in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for class in 1..=r {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let cut = (fraction * idx.len() as f64).round() as usize;
        if cut == 0 {
            return Err(Error::MissingClass(class));
        }
        train.extend_from_slice(&idx[..cut]);
        val.extend_from_slice(&idx[cut..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

#[derive(Debug, Clone)]
pub struct ClassifierOutcome {
    pub model: Classifier,
    pub report: ClassificationReport,
    pub history: TrainHistory,
    pub train_idx: Vec<usize>,
    pub val_idx: Vec<usize>,
}

/// Cross-entropy training on a 70/30 split; the report covers the
/// validation split.
pub fn train_classifier(
    stacks: &[ScalogramStack],
    labels: &[usize],
    cfg: ClassifierConfig,
    training: &ClassifierTraining,
) -> Result<ClassifierOutcome> {
    if stacks.len() != labels.len() {
        return Err(Error::shape("stack and label counts differ"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l == 0 || l > cfg.classes) {
        return Err(Error::LabelOutOfRange { label: bad, classes: cfg.classes });
    }
    let (train_idx, val_idx) = stratified_split(labels, cfg.classes, training.train_fraction, training.seed)?;
    let mut model = Classifier::new(cfg, training.seed)?;
    let tc = TrainConfig {
        epochs: training.epochs,
        batch_size: training.batch_size,
        optimizer: OptimizerConfig::adam(training.lr),
        lr_decay: training.lr_decay,
        seed: training.seed,
    };
    let history = train(&mut model.net, train_idx.len(), &tc, |batch| {
        let chosen: Vec<&ScalogramStack> = batch.iter().map(|&i| &stacks[train_idx[i]]).collect();
        let x = stacks_to_tensor(&chosen, &model.cfg)?;
        Ok((x, Target::Classes(batch.iter().map(|&i| labels[train_idx[i]] - 1).collect())))
    })?;
    let val_stacks: Vec<&ScalogramStack> = val_idx.iter().map(|&i| &stacks[i]).collect();
    let preds = model.predict(&val_stacks)?;
    let truth: Vec<usize> = val_idx.iter().map(|&i| labels[i]).collect();
    let report = classification_report(&preds, &truth, model.cfg.classes)?;
    Ok(ClassifierOutcome { model, report, history, train_idx, val_idx })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ClassifierConfig {
        ClassifierConfig {
            input_side: 8,
            channels: 2,
            blocks: vec![BlockSpec { filters: 4, kernel: 3, attention: true, pool: true }],
            classes: 2,
            attention_kernel: 3,
        }
    }

    fn stack(side: usize, ch: usize, f: impl Fn(usize) -> f32) -> ScalogramStack {
        ScalogramStack { zeta: side, channels: ch, pixels: (0..side * side * ch).map(f).collect(), first_frame_index: 1 }
    }

    #[test]
    fn level_rules() {
        assert_eq!(predict_level(&[0.1, 0.7, 0.2]), 2);
        assert_eq!(predict_level(&[0.5, 0.5, 0.0]), 1);
        assert_eq!(predict_level(&[0.0, 0.0, 1.0]), 3);
    }

    #[test]
    fn renormalization_is_scale_free() {
        let a = ConfidenceVector::from_raw(vec![0.2, 0.5, 0.3]).unwrap();
        let b = ConfidenceVector::from_raw(vec![2.0, 5.0, 3.0]).unwrap();
        assert_eq!(a.predict_level(), b.predict_level());
        for (x, y) in a.normalized.iter().zip(&b.normalized) {
            assert!((x - y).abs() < 1e-15);
        }
        let u = ConfidenceVector::from_raw(vec![1.0; 3]).unwrap();
        assert!(u.normalized.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!(ConfidenceVector::from_raw(vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn desk_network_shape() {
        let cfg = ClassifierConfig::desk();
        assert_eq!(cfg.flatten_len(), 16 * 16 * 64);
        let mut c = Classifier::new(cfg, 1).unwrap();
        let s = stack(64, 4, |i| (i % 251) as f32);
        let conf = c.classify(&s).unwrap();
        assert_eq!(conf.normalized.len(), 3);
        assert!((conf.normalized.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(conf.normalized.iter().all(|&v| v >= 0.0));
        assert!(c.classify(&stack(32, 4, |_| 0.0)).is_err());
    }

    #[test]
    fn split_is_stratified_and_seeded() {
        let labels: Vec<usize> = (0..30).map(|i| 1 + i % 3).collect();
        let (tr, va) = stratified_split(&labels, 3, 0.7, 5).unwrap();
        assert_eq!(tr.len(), 21);
        assert_eq!(va.len(), 9);
        assert_eq!((tr.clone(), va.clone()), stratified_split(&labels, 3, 0.7, 5).unwrap());
        assert!(matches!(stratified_split(&[1, 1, 2], 3, 0.7, 0), Err(Error::MissingClass(3))));
    }

    #[test]
    fn learns_a_separable_toy_problem() {
        let stacks: Vec<ScalogramStack> = (0..40)
            .map(|i| {
                let bright = i % 2 == 1;
                stack(8, 2, move |p| if bright { 200.0 + (p % 7) as f32 } else { 20.0 + (p % 5) as f32 })
            })
            .collect();
        let labels: Vec<usize> = (0..40).map(|i| 1 + i % 2).collect();
        let training = ClassifierTraining { epochs: 15, batch_size: 8, lr: 1e-2, lr_decay: 1.0, train_fraction: 0.7, seed: 3 };
        let out = train_classifier(&stacks, &labels, tiny(), &training).unwrap();
        assert_eq!(out.report.accuracy, 100.0);
        let again = train_classifier(&stacks, &labels, tiny(), &training).unwrap();
        assert_eq!(out.report, again.report);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut c = Classifier::new(tiny(), 4).unwrap();
        let s = stack(8, 2, |i| i as f32);
        let before = c.classify(&s).unwrap();
        let mut buf = Vec::new();
        c.save(&mut buf).unwrap();
        let mut d = Classifier::load(tiny(), buf.as_slice()).unwrap();
        let after = d.classify(&s).unwrap();
        for (a, b) in before.normalized.iter().zip(&after.normalized) {
            assert!((a - b).abs() < 1e-5);
        }
    }
}
