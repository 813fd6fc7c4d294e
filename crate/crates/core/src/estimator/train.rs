use std::io::Write;

use serde::{Deserialize, Serialize};

use super::eval::{score_samples, EvalReport};
use super::{batch_tensor, EstimatorError, ModelParams};
use crate::augment::{AugmentConfig, TrainingStream};
use crate::nn::{NnError, Sgd};
use crate::state::EyeState;
use crate::strip::EyeStrip;
use crate::synth::dataset::{load_split, DatasetManifest, Split};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f32,
    pub momentum: f32,
    /// The learning rate halves every this many epochs (0 disables decay).
    pub lr_halving_epochs: usize,
    /// Caps the samples drawn from the expanded pool per epoch.
    pub samples_per_epoch: Option<usize>,
    /// Stops after this many epochs without a new best validation top-1.
    pub patience: Option<usize>,
    /// Stops as soon as validation top-1 (percent) reaches this value.
    pub target_val_top1: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 30,
            learning_rate: 0.01,
            momentum: 0.9,
            lr_halving_epochs: 10,
            samples_per_epoch: None,
            patience: None,
            target_val_top1: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), EstimatorError> {
        if self.batch_size < 2 {
            return Err(EstimatorError::Config("batch size must be at least 2 for batch norm".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || !(0.0..1.0).contains(&self.momentum) {
            return Err(EstimatorError::Config("learning rate must be positive, momentum in [0, 1)".into()));
        }
        Ok(())
    }

    fn rate_at(&self, epoch: usize) -> f32 {
        match self.lr_halving_epochs {
            0 => self.learning_rate,
            k => self.learning_rate * 0.5f32.powi((epoch / k) as i32),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
    pub val_top1: f64,
    /// Mean validation cross-entropy, used to break top-1 ties.
    #[serde(skip)]
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation top-1.
    pub params: ModelParams<f32>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Mini-batch SGD over the augmented stream, keeping the parameters of the
/// best validation epoch (ties go to the lower validation loss). `on_epoch` sees each record as it is produced.
pub fn train(
    mut params: ModelParams<f32>,
    stream: &TrainingStream,
    val: &[(EyeStrip, EyeState)],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, EstimatorError> {
    config.validate()?;
    if stream.is_empty() {
        return Err(EstimatorError::EmptySplit("train"));
    }
    if val.is_empty() {
        return Err(EstimatorError::EmptySplit("val"));
    }
    let mut sgd = Sgd::new(config.learning_rate, config.momentum);
    let mut history = Vec::new();
    let mut best: Option<(EpochRecord, ModelParams<f32>)> = None;
    let mut batch_id = 0usize;

    for epoch in 0..config.epochs {
        sgd.learning_rate = config.rate_at(epoch);
        let limit = config.samples_per_epoch.unwrap_or(usize::MAX);
        let mut items = stream.epoch(epoch).take(limit).peekable();
        let (mut loss_sum, mut batches) = (0.0f64, 0usize);
        while items.peek().is_some() {
            let chunk: Vec<(EyeStrip, EyeState)> = items.by_ref().take(config.batch_size).collect();
            if chunk.len() < 2 {
                // Batch statistics are undefined for a single sample.
                break;
            }
            let batch = batch_tensor(chunk.iter().map(|(s, _)| s));
            let labels: Vec<usize> = chunk.iter().map(|(_, l)| l.index()).collect();
            let pass = params.forward_backward(&batch, &labels)?;
            if !pass.loss.is_finite() {
                return Err(EstimatorError::NonFiniteLoss { epoch, batch: batch_id });
            }
            match sgd.step(&mut params.learnable_mut(), &pass.grads.0) {
                Err(NnError::NonFiniteGradient(_)) => {
                    return Err(EstimatorError::NonFiniteLoss { epoch, batch: batch_id })
                }
                other => other?,
            }
            params.update_running_stats(&pass.stats);
            loss_sum += pass.loss as f64;
            batches += 1;
            batch_id += 1;
        }

        let scores = score_samples(&params, val)?;
        let truths: Vec<EyeState> = val.iter().map(|(_, l)| *l).collect();
        let val_top1 = EvalReport::from_scores(&truths, &scores).top1;
        let val_loss = truths
            .iter()
            .zip(&scores)
            .map(|(t, s)| -(s[t.index()].max(f32::MIN_POSITIVE) as f64).ln())
            .sum::<f64>()
            / val.len() as f64;
        let record = EpochRecord {
            epoch: epoch + 1,
            loss: loss_sum / batches.max(1) as f64,
            val_top1,
            val_loss,
        };
        on_epoch(&record);

        let improved = best.as_ref().is_none_or(|(b, _)| {
            val_top1 > b.val_top1 || (val_top1 == b.val_top1 && val_loss < b.val_loss)
        });
        if improved {
            best = Some((record.clone(), params.clone()));
        }
        history.push(record);
        let best_record = &best.as_ref().expect("set above").0;
        if config.target_val_top1.is_some_and(|t| best_record.val_top1 >= t) {
            break;
        }
        if config.patience.is_some_and(|p| epoch + 1 - best_record.epoch >= p) {
            break;
        }
    }

    let (best_epoch, params) = match best {
        Some((record, p)) => (record.epoch, p),
        None => (0, params),
    };
    Ok(TrainOutcome { params, history, best_epoch })
}

/// Loads the train and val splits of a generated dataset and trains on them.
pub fn train_from_manifest(
    params: ModelParams<f32>,
    manifest: &DatasetManifest,
    augment: &AugmentConfig,
    config: &TrainConfig,
    seed: u64,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, EstimatorError> {
    let train_set = load_split(manifest, Split::Train)?;
    if train_set.is_empty() {
        return Err(EstimatorError::EmptySplit("train"));
    }
    let val = load_split(manifest, Split::Val)?;
    let stream = TrainingStream::new(train_set, augment.clone(), seed)
        .map_err(|e| EstimatorError::Config(e.to_string()))?;
    train(params, &stream, &val, config, on_epoch)
}

/// Writes the history as CSV with columns epoch, loss, val_top1.
pub fn write_history_csv<W: Write>(w: W, history: &[EpochRecord]) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(w);
    for r in history {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{build_model, ModelConfig};
    use crate::synth::{render_eye_strip, Renderer, SynthParams};

    fn samples(n: usize, seed: u64) -> Vec<(EyeStrip, EyeState)> {
        let r = Renderer::new(SynthParams::single_eye()).unwrap();
        (0..n)
            .map(|i| {
                let s = EyeState::from_index(i % 10);
                (render_eye_strip(s, &r, seed + i as u64), s)
            })
            .collect()
    }

    #[test]
    fn one_epoch_gives_one_record() {
        let data = samples(10, 0);
        let stream = TrainingStream::new(data.clone(), AugmentConfig::none(), 1).unwrap();
        let m = build_model(ModelConfig::single_eye(), 1).unwrap();
        let cfg = TrainConfig { epochs: 1, batch_size: 4, ..TrainConfig::default() };
        let out = train(m, &stream, &data, &cfg, |_| {}).unwrap();
        assert_eq!(out.history.len(), 1);
        assert_eq!(out.history[0].epoch, 1);
        assert_eq!(out.best_epoch, 1);
    }

    #[test]
    fn overfits_one_repeated_image() {
        let (strip, label) = samples(1, 42).remove(0);
        let mut m = build_model(ModelConfig::single_eye(), 3).unwrap();
        let batch = batch_tensor(std::iter::repeat_n(&strip, 4));
        let labels = vec![label.index(); 4];
        let mut sgd = Sgd::new(0.01f32, 0.9);
        let mut loss = f32::INFINITY;
        for _ in 0..200 {
            let pass = m.forward_backward(&batch, &labels).unwrap();
            loss = pass.loss;
            if loss < 0.01 {
                break;
            }
            sgd.step(&mut m.learnable_mut(), &pass.grads.0).unwrap();
            m.update_running_stats(&pass.stats);
        }
        assert!(loss < 0.01, "loss {loss}");
    }

    #[test]
    fn exploding_rate_reports_batch() {
        let data = samples(8, 5);
        let stream = TrainingStream::new(data.clone(), AugmentConfig::none(), 1).unwrap();
        let m = build_model(ModelConfig::single_eye(), 1).unwrap();
        let cfg = TrainConfig { epochs: 3, batch_size: 4, learning_rate: 1e30, ..TrainConfig::default() };
        let err = train(m, &stream, &data, &cfg, |_| {}).unwrap_err();
        assert!(matches!(err, EstimatorError::NonFiniteLoss { .. }), "{err}");
    }

    #[test]
    fn empty_val_rejected() {
        let data = samples(4, 5);
        let stream = TrainingStream::new(data, AugmentConfig::none(), 1).unwrap();
        let m = build_model(ModelConfig::single_eye(), 1).unwrap();
        let err = train(m, &stream, &[], &TrainConfig::default(), |_| {}).unwrap_err();
        assert!(matches!(err, EstimatorError::EmptySplit("val")));
    }

    #[test]
    fn history_csv_header() {
        let mut buf = Vec::new();
        let h = [EpochRecord { epoch: 1, loss: 2.0, val_top1: 50.0, val_loss: 1.0 }];
        write_history_csv(&mut buf, &h).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("epoch,loss,val_top1"));
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn halving_schedule() {
        let c = TrainConfig::default();
        assert_eq!(c.rate_at(0), 0.01);
        assert_eq!(c.rate_at(10), 0.005);
        assert_eq!(c.rate_at(25), 0.0025);
    }
}
