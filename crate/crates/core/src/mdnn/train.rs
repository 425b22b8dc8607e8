use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::layers::Param;
use super::model::Model;
use super::tensor::Tensor;
use crate::augment::{LabeledDataset, Sample};
use crate::error::{Error, Result};
use crate::seed::{self, stream};
use crate::spectrum::MixtureLabel;
use crate::tf::ScaleImage;

/// Probability clamp used by the cross-entropy.
pub const BCE_EPS: f64 = 1e-7;
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// 0 gives plain SGD.
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience_epochs: usize,
    pub loss_tolerance: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 16,
            max_epochs: 20,
            patience_epochs: 2,
            loss_tolerance: 1e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::param("learning_rate", format!("must be finite and non-negative, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::param("momentum", format!("must lie in [0, 1), got {}", self.momentum)));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch_size", "must be positive"));
        }
        if self.patience_epochs == 0 {
            return Err(Error::param("patience_epochs", "must be at least 1"));
        }
        if !(self.loss_tolerance.is_finite() && self.loss_tolerance >= 0.0) {
            return Err(Error::param("loss_tolerance", "must be finite and non-negative"));
        }
        Ok(())
    }
}

/// Mean binary cross-entropy and its gradient with respect to the logits.
pub fn bce_loss(probs: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    if probs.dims() != targets.dims() || probs.dims().len() != 2 {
        return Err(Error::shape(format!("[N, L] targets matching {:?}", probs.dims()), format!("{:?}", targets.dims())));
    }
    let count = probs.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(probs.len());
    for (&p, &y) in probs.data().iter().zip(targets.data()) {
        let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        loss -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        grad.push((p - y) / count);
    }
    Ok((loss / count, Tensor::new(probs.dims().to_vec(), grad)?))
}

/// Images `[N, H, W]` and multi-hot targets `[N, 3]` for the given items.
pub fn batch_tensors<'a>(items: impl IntoIterator<Item = &'a Sample>) -> Result<(Tensor, Tensor)> {
    let mut pixels = Vec::new();
    let mut targets = Vec::new();
    let mut n = 0;
    let mut hw = None;
    for s in items {
        let dims = (s.image.height, s.image.width);
        if *hw.get_or_insert(dims) != dims {
            return Err(Error::shape(format!("{:?} images", hw.unwrap()), format!("{dims:?}")));
        }
        pixels.extend(s.image.pixels.iter().map(|&v| v as f64));
        targets.extend(s.label().to_target());
        n += 1;
    }
    let (h, w) = hw.unwrap_or((0, 0));
    Ok((Tensor::new(vec![n, h, w], pixels)?, Tensor::new(vec![n, MixtureLabel::N_BITS], targets)?))
}

fn check_finite(loss: f64, context: impl FnOnce() -> String) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Divergence { context: context(), loss })
    }
}

fn sgd_update(params: Vec<&mut Param>, lr: f64, momentum: f64) {
    for p in params {
        if momentum == 0.0 {
            p.value.iter_mut().zip(&p.grad).for_each(|(w, g)| *w -= lr * g);
        } else {
            for ((w, v), g) in p.value.iter_mut().zip(p.velocity.iter_mut()).zip(&p.grad) {
                *v = momentum * *v - lr * g;
                *w += *v;
            }
        }
    }
}

fn step(model: &mut Model, batch: &Tensor, targets: &Tensor, lr: f64, momentum: f64) -> Result<f64> {
    let probs = model.forward(batch)?;
    let (loss, grad) = bce_loss(&probs, targets)?;
    check_finite(loss, || "train step".to_string())?;
    model.zero_grad();
    model.backward_logits(&grad)?;
    sgd_update(model.params_mut(), lr, momentum);
    Ok(loss)
}

/// One plain SGD step; returns the loss before the update.
pub fn train_step(model: &mut Model, batch: &Tensor, targets: &Tensor, lr: f64) -> Result<f64> {
    step(model, batch, targets, lr, 0.0)
}

/// Mean cross-entropy of the model over a dataset, without touching state.
pub fn dataset_loss(model: &Model, data: &LabeledDataset) -> Result<f64> {
    let mut total = 0.0;
    for chunk in data.items().chunks(EVAL_CHUNK) {
        let (x, y) = batch_tensors(chunk)?;
        let (loss, _) = bce_loss(&model.infer(&x)?, &y)?;
        total += loss * chunk.len() as f64;
    }
    Ok(total / data.len().max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::EarlyStop => "early_stop",
            StopReason::MaxEpochs => "max_epochs",
        }
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// `None` when no epoch ran.
    pub stop_reason: Option<StopReason>,
    pub best_epoch: Option<usize>,
}

impl TrainReport {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.epochs[e - 1].val_loss)
    }

    /// `epoch,train_loss,val_loss`
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "epoch,train_loss,val_loss")?;
        for r in &self.epochs {
            writeln!(out, "{},{},{}", r.epoch, r.train_loss, r.val_loss)?;
        }
        out.flush()?;
        Ok(())
    }

    /// `key,value` lines: stop reason, best epoch and epoch count.
    pub fn write_summary_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "key,value")?;
        writeln!(out, "stop_reason,{}", self.stop_reason.map_or("none", StopReason::as_str))?;
        match self.best_epoch {
            Some(e) => writeln!(out, "best_epoch,{e}")?,
            None => writeln!(out, "best_epoch,none")?,
        }
        match self.best_val_loss() {
            Some(v) => writeln!(out, "best_val_loss,{v}")?,
            None => writeln!(out, "best_val_loss,none")?,
        }
        writeln!(out, "epochs_run,{}", self.epochs.len())?;
        out.flush()?;
        Ok(())
    }
}

/// Mini-batch training with per-epoch reshuffling and plateau early stopping
/// on the validation loss. The weights of the best validation epoch are kept.
pub fn fit(model: &mut Model, train: &LabeledDataset, val: &LabeledDataset, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let (h, w) = model.config().input_hw;
    for (name, ds) in [("train", train), ("val", val)] {
        if let Some(size) = ds.image_size() {
            if size != (h, w) {
                return Err(Error::shape(format!("{name} images of {h}x{w}"), format!("{}x{}", size.0, size.1)));
            }
        }
    }
    if train.is_empty() || val.is_empty() {
        return Err(Error::param("dataset", "train and validation sets must be non-empty"));
    }

    let mut report = TrainReport::default();
    if cfg.max_epochs == 0 {
        return Ok(report);
    }
    model.params_mut().into_iter().for_each(|p| p.velocity.fill(0.0));
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let mut rng = seed::derived_rng(cfg.seed, stream::SHUFFLE, epoch as u64);
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y) = batch_tensors(chunk.iter().map(|&i| &train.items()[i]))?;
            let loss = step(model, &x, &y, cfg.learning_rate, cfg.momentum).map_err(|e| with_context(e, epoch))?;
            sum += loss * chunk.len() as f64;
        }
        let train_loss = sum / train.len() as f64;
        let val_loss = check_finite(dataset_loss(model, val)?, || format!("epoch {epoch} validation"))?;
        report.epochs.push(EpochRecord { epoch, train_loss, val_loss });

        if best.as_ref().is_none_or(|(b, _)| val_loss < *b) {
            best = Some((val_loss, model.params().iter().map(|p| p.value.clone()).collect()));
            report.best_epoch = Some(epoch);
        }
        if plateaued(&report.epochs, cfg.patience_epochs, cfg.loss_tolerance) {
            report.stop_reason = Some(StopReason::EarlyStop);
            break;
        }
    }
    report.stop_reason.get_or_insert(StopReason::MaxEpochs);
    if let Some((_, values)) = best {
        for (p, v) in model.params_mut().into_iter().zip(values) {
            p.value = v;
        }
    }
    Ok(report)
}

fn with_context(e: Error, epoch: usize) -> Error {
    match e {
        Error::Divergence { context, loss } => Error::Divergence { context: format!("epoch {epoch}, {context}"), loss },
        other => other,
    }
}

/// True when each of the last `patience` epoch-to-epoch changes in
/// validation loss is within `tol`.
fn plateaued(epochs: &[EpochRecord], patience: usize, tol: f64) -> bool {
    epochs.len() > patience && epochs[epochs.len() - patience - 1..].windows(2).all(|w| (w[1].val_loss - w[0].val_loss).abs() <= tol)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub bits: Vec<bool>,
    pub scores: Vec<f64>,
}

impl Prediction {
    pub fn from_scores(scores: Vec<f64>, threshold: f64) -> Self {
        Prediction { bits: scores.iter().map(|&s| s >= threshold).collect(), scores }
    }

    /// Requires a three-label model.
    pub fn label(&self) -> Result<MixtureLabel> {
        MixtureLabel::from_slice(&self.bits)
    }
}

pub fn predict_labels(model: &Model, image: &ScaleImage, threshold: f64) -> Result<Prediction> {
    let x = Tensor::new(vec![1, image.height, image.width], image.pixels.iter().map(|&v| v as f64).collect())?;
    let scores = model.infer(&x)?.into_data();
    Ok(Prediction::from_scores(scores, threshold))
}

/// Scores `[N, n_labels]` for many images, evaluated in chunks.
pub fn score_images(model: &Model, images: &[&ScaleImage]) -> Result<Vec<Vec<f64>>> {
    let (h, w) = model.config().input_hw;
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(EVAL_CHUNK) {
        let mut pixels = Vec::with_capacity(chunk.len() * h * w);
        for img in chunk {
            if (img.height, img.width) != (h, w) {
                return Err(Error::shape(format!("{h}x{w} image"), format!("{}x{}", img.height, img.width)));
            }
            pixels.extend(img.pixels.iter().map(|&v| v as f64));
        }
        let probs = model.infer(&Tensor::new(vec![chunk.len(), h, w], pixels)?)?;
        out.extend(probs.data().chunks_exact(model.config().n_labels).map(<[f64]>::to_vec));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_of_half_is_ln2() {
        let p = Tensor::new(vec![2, 3], vec![0.5; 6]).unwrap();
        let y = Tensor::new(vec![2, 3], vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        let (loss, _) = bce_loss(&p, &y).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn bce_of_exact_targets_is_tiny() {
        let y = Tensor::new(vec![1, 3], vec![1.0, 0.0, 1.0]).unwrap();
        let (loss, _) = bce_loss(&y, &y).unwrap();
        assert!(loss <= 1e-6);
    }

    #[test]
    fn thresholds_select_bits() {
        let p = Prediction::from_scores(vec![0.9, 0.1, 0.6], 0.5);
        assert_eq!(p.bits, vec![true, false, true]);
        assert!(Prediction::from_scores(vec![0.9, 0.1, 0.6], 1.1).bits.iter().all(|b| !b));
        assert!(Prediction::from_scores(vec![0.9, 0.1, 0.6], 0.0).bits.iter().all(|&b| b));
    }

    #[test]
    fn plateau_needs_patience_flat_deltas() {
        let rec = |v| EpochRecord { epoch: 0, train_loss: 0.0, val_loss: v };
        assert!(!plateaued(&[rec(1.0), rec(1.0)], 2, 1e-4));
        assert!(plateaued(&[rec(2.0), rec(1.0), rec(1.00005), rec(1.0)], 2, 1e-4));
        assert!(!plateaued(&[rec(1.0), rec(1.0), rec(0.5)], 2, 1e-4));
    }
}
