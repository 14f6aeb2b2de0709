//! Mini-batch training with best-epoch selection, and evaluation.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Loss, Model, ModelConfig, ModelError, Sample, Scaler};
use crate::nn::{Adam, AdamConfig};

/// Samples per gradient partial; partials are summed in batch order so any
/// engine that honors the chunking reproduces the serial result bitwise.
pub const GRAD_CHUNK: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: Loss,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub folds: usize,
    pub seed: u64,
    /// Share of each training fold held out for best-epoch selection.
    pub val_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { loss: Loss::L1, lr: 1e-3, batch_size: 64, epochs: 35, folds: 3, seed: 0, val_fraction: 0.1 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(TrainError::Config(String::from("learning rate must be positive")));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config(String::from("batch size must be positive")));
        }
        if self.folds < 2 {
            return Err(TrainError::Config(String::from("at least two folds are required")));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(TrainError::Config(String::from("validation fraction must lie in [0, 1)")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("training configuration: {0}")]
    Config(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("training diverged in epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Computes summed losses and gradients for a batch.
pub trait GradientEngine {
    fn batch_gradient(
        &self,
        model: &Model,
        samples: &[Sample],
        targets: &[f64],
        batch: &[usize],
        loss: Loss,
        grads: &mut [f64],
    ) -> Result<f64, ModelError>;
}

/// Loss sum and gradient buffer of one chunk.
pub fn chunk_gradient(
    model: &Model,
    samples: &[Sample],
    targets: &[f64],
    chunk: &[usize],
    loss: Loss,
) -> Result<(f64, Vec<f64>), ModelError> {
    let mut buf = model.params.zeros_like();
    let mut total = 0.0;
    for &i in chunk {
        total += model.loss_grad(&samples[i], targets[i], loss, &mut buf)?;
    }
    Ok((total, buf))
}

/// Folds chunk partials into `grads` in order.
pub fn reduce_chunks(parts: impl IntoIterator<Item = (f64, Vec<f64>)>, grads: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for (l, g) in parts {
        total += l;
        for (a, b) in grads.iter_mut().zip(&g) {
            *a += b;
        }
    }
    total
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SerialEngine;

impl GradientEngine for SerialEngine {
    fn batch_gradient(
        &self,
        model: &Model,
        samples: &[Sample],
        targets: &[f64],
        batch: &[usize],
        loss: Loss,
        grads: &mut [f64],
    ) -> Result<f64, ModelError> {
        let mut parts = Vec::new();
        for chunk in batch.chunks(GRAD_CHUNK) {
            parts.push(chunk_gradient(model, samples, targets, chunk, loss)?);
        }
        Ok(reduce_chunks(parts, grads))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample loss on standardized labels.
    pub train_loss: f64,
    /// In target units.
    pub val_mae: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub scaler: Scaler,
    pub curve: Vec<EpochStats>,
    /// Zero when no epoch ran.
    pub best_epoch: usize,
}

/// Splits `0..n` into (train, validation) index lists, both sorted.
pub fn validation_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let mut n_val = libm::round(n as f64 * fraction) as usize;
    if fraction > 0.0 && n >= 2 {
        n_val = n_val.clamp(1, n - 1);
    }
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

pub fn train<E: GradientEngine + ?Sized>(
    model_config: &ModelConfig,
    train_set: &[Sample],
    val_set: &[Sample],
    config: &TrainConfig,
    engine: &E,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptySplit("training"));
    }
    let scaler = Scaler::fit(train_set.iter().map(|s| s.label));
    let targets: Vec<f64> = train_set.iter().map(|s| scaler.standardize(s.label)).collect();
    let mut model = Model::new(model_config.clone(), config.seed)?;
    let mut adam = Adam::new(AdamConfig { lr: config.lr, ..AdamConfig::default() }, model.params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut grads = model.params.zeros_like();

    let mut curve = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            grads.fill(0.0);
            let l = engine.batch_gradient(&model, train_set, &targets, batch, config.loss, &mut grads)?;
            if !l.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::Diverged { epoch, batch: b, loss: l });
            }
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| *g *= inv);
            adam.step(&mut model.params.values, &grads);
            sum += l;
        }
        let train_loss = sum / train_set.len() as f64;
        let val_mae = if val_set.is_empty() { None } else { Some(evaluate(&model, &scaler, val_set)?) };
        if let Some(v) = val_mae.filter(|v| !v.is_finite()) {
            return Err(TrainError::Diverged { epoch, batch: 0, loss: v });
        }
        let score = val_mae.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(_, s, _)| score < *s || val_mae.is_none()) {
            best = Some((epoch, score, model.params.values.clone()));
        }
        curve.push(EpochStats { epoch, train_loss, val_mae });
    }
    let best_epoch = match best {
        Some((epoch, _, values)) => {
            model.params.values = values;
            epoch
        }
        None => 0,
    };
    Ok(TrainOutcome { model, scaler, curve, best_epoch })
}

/// Predictions in target units.
pub fn predict(model: &Model, scaler: &Scaler, samples: &[Sample]) -> Result<Vec<f64>, ModelError> {
    samples.iter().map(|s| model.forward(s).map(|z| scaler.restore(z))).collect()
}

pub fn mae(predictions: &[f64], labels: &[f64]) -> Result<f64, TrainError> {
    if predictions.is_empty() || predictions.len() != labels.len() {
        return Err(TrainError::EmptySplit("evaluation"));
    }
    let sum: f64 = predictions.iter().zip(labels).map(|(p, y)| (p - y).abs()).sum();
    Ok(sum / predictions.len() as f64)
}

pub fn evaluate(model: &Model, scaler: &Scaler, samples: &[Sample]) -> Result<f64, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptySplit("evaluation"));
    }
    let preds = predict(model, scaler, samples)?;
    let labels: Vec<f64> = samples.iter().map(|s| s.label).collect();
    mae(&preds, &labels)
}
