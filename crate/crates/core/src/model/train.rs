//! Supervised training with per-epoch validation and best-checkpoint selection.

use candle_core::Tensor;
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{Clip, Example};
use super::recognizer::{cross_entropy, softmax_rows, RecognitionModel};
use crate::error::{Error, Result};
use crate::eval::{compute_metrics, MetricReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Peak learning rate; decays to zero on a cosine over the run.
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Stop after this many optimiser steps even mid-epoch.
    pub max_steps: Option<usize>,
    /// Seed for the example shuffle.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 10, batch_size: 8, learning_rate: 1e-4, weight_decay: 0.01, max_steps: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub val: Option<MetricReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub step_losses: Vec<f64>,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights the model holds after training (best validation weighted F1).
    pub best_epoch: Option<usize>,
    pub best_val_weighted_f1: Option<f64>,
}

/// Cosine decay from `peak` at step 0 towards zero at `total`.
pub fn cosine_lr(peak: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return peak;
    }
    peak * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos())
}

/// Frame features per example, cached once when the vision encoder is frozen.
struct FeatureCache(Option<Vec<Tensor>>);

impl FeatureCache {
    fn build(model: &RecognitionModel, examples: &[Example], batch_size: usize) -> Result<Self> {
        if !model.config().freeze_vision {
            return Ok(FeatureCache(None));
        }
        let mut out = Vec::with_capacity(examples.len());
        for chunk in examples.chunks(batch_size.max(1)) {
            let clips: Vec<&Clip> = chunk.iter().map(|e| &e.clip).collect();
            let batch = Clip::batch(&clips, model.dtype(), model.device())?;
            let feats = model.encode_frames(&batch.frames)?;
            for i in 0..chunk.len() {
                out.push(feats.get(i)?);
            }
        }
        Ok(FeatureCache(Some(out)))
    }

    fn logits(&self, model: &RecognitionModel, examples: &[Example], idx: &[usize]) -> Result<Tensor> {
        let clips: Vec<&Clip> = idx.iter().map(|&i| &examples[i].clip).collect();
        let batch = Clip::batch(&clips, model.dtype(), model.device())?;
        match &self.0 {
            Some(cache) => {
                let v_seq = Tensor::stack(&idx.iter().map(|&i| cache[i].clone()).collect::<Vec<_>>(), 0)?;
                model.forward_features(&v_seq, &batch.skeleton)
            }
            None => model.forward(&batch),
        }
    }
}

fn labels_tensor(model: &RecognitionModel, examples: &[Example], idx: &[usize]) -> Result<Tensor> {
    let labels: Vec<u32> = idx.iter().map(|&i| examples[i].label.index() as u32).collect();
    Ok(Tensor::new(labels, model.device())?)
}

fn check_labels(model: &RecognitionModel, examples: &[Example]) -> Result<()> {
    let nc = model.config().num_classes;
    match examples.iter().find(|e| e.label.index() >= nc) {
        Some(e) => Err(Error::config(format!("label {} has no class description", e.label))),
        None => Ok(()),
    }
}

fn scores(model: &RecognitionModel, cache: &FeatureCache, examples: &[Example], batch_size: usize) -> Result<Vec<Vec<f32>>> {
    let all: Vec<usize> = (0..examples.len()).collect();
    let mut rows = Vec::with_capacity(examples.len());
    for idx in all.chunks(batch_size.max(1)) {
        rows.extend(softmax_rows(&cache.logits(model, examples, idx)?.detach())?);
    }
    Ok(rows)
}

/// Class probabilities for every example.
pub fn predict(model: &RecognitionModel, examples: &[Example], batch_size: usize) -> Result<Vec<Vec<f32>>> {
    let cache = FeatureCache::build(model, examples, batch_size)?;
    scores(model, &cache, examples, batch_size)
}

pub fn evaluate(model: &RecognitionModel, examples: &[Example], batch_size: usize) -> Result<MetricReport> {
    let probs = predict(model, examples, batch_size)?;
    let truth: Vec<usize> = examples.iter().map(|e| e.label.index()).collect();
    compute_metrics(&truth, &probs, model.config().num_classes)
}

/// Trains `model` in place. When `val` is non-empty the weights of the epoch with the
/// best validation weighted F1 (earliest on ties) are restored at the end.
pub fn train(model: &RecognitionModel, train: &[Example], val: &[Example], cfg: &TrainConfig) -> Result<TrainHistory> {
    if train.is_empty() {
        return Err(Error::validation("training set is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::config("batch_size must be positive"));
    }
    check_labels(model, train)?;
    check_labels(model, val)?;

    let steps_per_epoch = train.len().div_ceil(cfg.batch_size);
    let total_steps = (steps_per_epoch * cfg.epochs).min(cfg.max_steps.unwrap_or(usize::MAX));
    let params = ParamsAdamW { lr: cfg.learning_rate, weight_decay: cfg.weight_decay, ..Default::default() };
    let mut opt = AdamW::new(model.trainable_vars(), params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train_cache = FeatureCache::build(model, train, cfg.batch_size)?;
    let val_cache = FeatureCache::build(model, val, cfg.batch_size)?;
    let val_truth: Vec<usize> = val.iter().map(|e| e.label.index()).collect();

    let mut history = TrainHistory { step_losses: Vec::new(), epochs: Vec::new(), best_epoch: None, best_val_weighted_f1: None };
    let mut best_weights = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        if step >= total_steps {
            break;
        }
        order.shuffle(&mut rng);
        let mut epoch_loss = Vec::new();
        for idx in order.chunks(cfg.batch_size) {
            if step >= total_steps {
                break;
            }
            opt.set_learning_rate(cosine_lr(cfg.learning_rate, step, total_steps));
            let logits = train_cache.logits(model, train, idx)?;
            let loss = cross_entropy(&logits, &labels_tensor(model, train, idx)?)?;
            opt.backward_step(&loss)?;
            model.clamp_tau()?;
            let l = loss.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
            if !l.is_finite() {
                return Err(Error::validation(format!("training loss became {l} at step {step}")));
            }
            history.step_losses.push(l);
            epoch_loss.push(l);
            step += 1;
        }
        let val_report = if val.is_empty() {
            None
        } else {
            let probs = scores(model, &val_cache, val, cfg.batch_size)?;
            Some(compute_metrics(&val_truth, &probs, model.config().num_classes)?)
        };
        if let Some(r) = &val_report {
            if history.best_val_weighted_f1.is_none_or(|b| r.weighted_f1 > b) {
                history.best_val_weighted_f1 = Some(r.weighted_f1);
                history.best_epoch = Some(epoch);
                best_weights = Some(model.params().snapshot()?);
            }
        }
        tracing::info!(epoch, loss = epoch_loss.iter().sum::<f64>() / epoch_loss.len().max(1) as f64, "epoch done");
        history.epochs.push(EpochRecord {
            epoch,
            mean_train_loss: epoch_loss.iter().sum::<f64>() / epoch_loss.len().max(1) as f64,
            val: val_report,
        });
    }
    if let Some(w) = best_weights {
        model.params().restore(&w)?;
    }
    Ok(history)
}

/// Training-set accuracy of the current weights.
pub fn accuracy(model: &RecognitionModel, examples: &[Example], batch_size: usize) -> Result<f64> {
    let probs = predict(model, examples, batch_size)?;
    let hits = probs
        .iter()
        .zip(examples)
        .filter(|(p, e)| crate::eval::argmax(p) == e.label.index())
        .count();
    Ok(hits as f64 / examples.len().max(1) as f64)
}

