use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{angle_targets, image_to_tensor, pfadn_loss, LossWeights, PfadnModel};
use crate::autodiff::{Adam, AdamConfig, Graph, ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::io::{load_weights, save_weights, DatasetManifest, NamedTensors, Sample, Split};

/// One training triple converted to network tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSample {
    pub input: Tensor<f32>,
    pub intensity: Tensor<f32>,
    pub angle: Tensor<f32>,
    /// Per-pixel loss weight (1 valid, 0 ignored).
    pub mask: Option<Vec<f32>>,
}

impl TrainingSample {
    pub fn from_sample(s: &Sample) -> Self {
        Self {
            input: image_to_tensor(s.input.image()),
            intensity: image_to_tensor(&s.intensity),
            angle: angle_targets(&s.aolp),
            mask: s
                .mask
                .as_ref()
                .map(|m| m.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect()),
        }
    }
}

pub fn load_training_samples(manifest: &DatasetManifest, split: Split) -> Result<Vec<TrainingSample>> {
    Ok(manifest
        .load_split(split)?
        .iter()
        .map(TrainingSample::from_sample)
        .collect())
}

/// Splits off the last `fraction` of `samples` (at least one when there are
/// two or more samples) as a validation set.
pub fn split_validation(mut samples: Vec<TrainingSample>, fraction: f64) -> (Vec<TrainingSample>, Vec<TrainingSample>) {
    let n = samples.len();
    let mut n_val = (n as f64 * fraction).round() as usize;
    if fraction > 0.0 && n >= 2 {
        n_val = n_val.clamp(1, n - 1);
    }
    let val = samples.split_off(n - n_val.min(n));
    (samples, val)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub loss: LossWeights,
    pub batch_size: usize,
    /// Epochs to run in this invocation.
    pub epochs: usize,
    pub seed: u64,
    /// Epochs without validation improvement before the rate is halved.
    pub patience: usize,
    pub lr_factor: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            loss: LossWeights::default(),
            batch_size: 8,
            epochs: 10,
            seed: 0,
            patience: 3,
            lr_factor: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.patience == 0 || !(self.lr_factor > 0.0 && self.lr_factor <= 1.0) {
            return Err(Error::Config("patience must be positive and lr factor in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

/// Optimizer and schedule state carried across epochs and checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub adam: Adam<f32>,
    /// Epochs completed so far.
    pub epoch: usize,
    pub best_val: Option<f64>,
    pub bad_epochs: usize,
}

#[derive(Serialize, Deserialize)]
struct StateMeta {
    epoch: usize,
    step: u64,
    lr: f64,
    best_val: Option<f64>,
    bad_epochs: usize,
}

impl TrainState {
    pub fn new(lr: f64) -> Self {
        Self {
            adam: Adam::new(AdamConfig { lr, ..AdamConfig::default() }),
            epoch: 0,
            best_val: None,
            bad_epochs: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.adam.config.lr
    }

    /// Sidecar paths next to a weights file: moments and schedule metadata.
    pub fn sidecar_paths(weights: &Path) -> (PathBuf, PathBuf) {
        let mut moments = weights.as_os_str().to_owned();
        moments.push(".state");
        let mut meta = moments.clone();
        meta.push(".json");
        (moments.into(), meta.into())
    }

    pub fn save(&self, weights: &Path) -> Result<()> {
        let (moments, meta) = Self::sidecar_paths(weights);
        let mut set = NamedTensors::new();
        for (k, v) in &self.adam.m {
            set.insert(format!("m.{k}"), v.clone());
        }
        for (k, v) in &self.adam.v {
            set.insert(format!("v.{k}"), v.clone());
        }
        save_weights(&set, &moments)?;
        let m = StateMeta {
            epoch: self.epoch,
            step: self.adam.step,
            lr: self.lr(),
            best_val: self.best_val,
            bad_epochs: self.bad_epochs,
        };
        fs::write(&meta, serde_json::to_vec_pretty(&m)?).map_err(|e| Error::io(&meta, e))
    }

    /// Loads the sidecars of `weights`, or `None` when they do not exist.
    pub fn load(weights: &Path) -> Result<Option<Self>> {
        let (moments, meta) = Self::sidecar_paths(weights);
        if !meta.exists() {
            return Ok(None);
        }
        let text = fs::read(&meta).map_err(|e| Error::io(&meta, e))?;
        let m: StateMeta = serde_json::from_slice(&text)?;
        let mut adam = Adam::new(AdamConfig {
            lr: m.lr,
            ..AdamConfig::default()
        });
        adam.step = m.step;
        for (k, v) in load_weights(&moments)? {
            if let Some(name) = k.strip_prefix("m.") {
                adam.m.insert(name.to_string(), v);
            } else if let Some(name) = k.strip_prefix("v.") {
                adam.v.insert(name.to_string(), v);
            } else {
                return Err(Error::Config(format!("unexpected optimizer entry {k:?}")));
            }
        }
        Ok(Some(Self {
            adam,
            epoch: m.epoch,
            best_val: m.best_val,
            bad_epochs: m.bad_epochs,
        }))
    }

    /// Records a validation loss; halves (by `factor`) the rate after
    /// `patience` epochs without improvement. Returns true on a rate change.
    pub fn observe_validation(&mut self, val: f64, patience: usize, factor: f64) -> bool {
        match self.best_val {
            Some(best) if val >= best => {
                self.bad_epochs += 1;
                if self.bad_epochs >= patience {
                    self.adam.config.lr *= factor;
                    self.bad_epochs = 0;
                    return true;
                }
            }
            _ => {
                self.best_val = Some(val);
                self.bad_epochs = 0;
            }
        }
        false
    }
}

/// Loss of one sample without gradients.
pub fn sample_loss(model: &PfadnModel<f32>, s: &TrainingSample, w: LossWeights) -> Result<f64> {
    let mut g = Graph::new();
    let p = model.bind(&mut g, false);
    let x = g.input(s.input.clone());
    let out = model.forward(&mut g, &p, x)?;
    let i = g.input(s.intensity.clone());
    let a = g.input(s.angle.clone());
    let l = pfadn_loss(&mut g, out.intensity, i, out.angle, a, w, s.mask.as_deref())?;
    Ok(f64::from(g.value(l).item()))
}

pub fn mean_loss(model: &PfadnModel<f32>, samples: &[TrainingSample], w: LossWeights) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("no samples to evaluate"));
    }
    let mut total = 0.0;
    for s in samples {
        total += sample_loss(model, s, w)?;
    }
    Ok(total / samples.len() as f64)
}

/// Mean loss and mean parameter gradient over a batch.
pub fn batch_gradient(model: &PfadnModel<f32>, batch: &[&TrainingSample], w: LossWeights) -> Result<(f64, ParamSet<f32>)> {
    let mut sum: ParamSet<f32> = ParamSet::new();
    let mut loss = 0.0;
    for s in batch {
        let mut g = Graph::new();
        let p = model.bind(&mut g, true);
        let x = g.input(s.input.clone());
        let out = model.forward(&mut g, &p, x)?;
        let i = g.input(s.intensity.clone());
        let a = g.input(s.angle.clone());
        let l = pfadn_loss(&mut g, out.intensity, i, out.angle, a, w, s.mask.as_deref())?;
        loss += f64::from(g.value(l).item());
        let mut grads = g.backward(l);
        for (name, &var) in p.iter() {
            let gt = grads.take(var).unwrap_or_else(|| Tensor::zeros(g.value(var).shape()));
            match sum.get_mut(name) {
                Some(acc) => acc.add_assign(&gt),
                None => {
                    sum.insert(name.clone(), gt);
                }
            }
        }
    }
    let inv = 1.0 / batch.len() as f32;
    for t in sum.values_mut() {
        t.data_mut().iter_mut().for_each(|v| *v *= inv);
    }
    Ok((loss / batch.len() as f64, sum))
}

/// Runs `config.epochs` further epochs of minibatch Adam. `on_epoch` is called
/// after each epoch with the updated model and state (for checkpointing and
/// logging). With an empty validation set the training loss drives the
/// schedule.
pub fn train(
    model: &mut PfadnModel<f32>,
    train_set: &[TrainingSample],
    val_set: &[TrainingSample],
    config: &TrainConfig,
    state: &mut TrainState,
    mut on_epoch: impl FnMut(&EpochMetrics, &PfadnModel<f32>, &TrainState) -> Result<()>,
) -> Result<Vec<EpochMetrics>> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Empty("training set is empty"));
    }
    let mut log = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let epoch = state.epoch + 1;
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed ^ epoch as u64));
        let mut total = 0.0;
        for (step, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&TrainingSample> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (loss, grads) = batch_gradient(model, &batch, config.loss)?;
            if !loss.is_finite() || grads.values().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            state.adam.step(model.params_mut(), &grads)?;
            total += loss * batch.len() as f64;
        }
        let train_loss = total / train_set.len() as f64;
        let val_loss = if val_set.is_empty() {
            train_loss
        } else {
            mean_loss(model, val_set, config.loss)?
        };
        let metrics = EpochMetrics {
            epoch,
            train_loss,
            val_loss,
            lr: state.lr(),
        };
        state.epoch = epoch;
        if state.observe_validation(val_loss, config.patience, config.lr_factor) {
            log::info!("epoch {epoch}: validation plateau, learning rate now {:e}", state.lr());
        }
        log::info!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        on_epoch(&metrics, model, state)?;
        log.push(metrics);
    }
    Ok(log)
}

/// Writes the per-epoch log as CSV with header `epoch,train_loss,val_loss,lr`.
pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[EpochMetrics]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{other:?}")),
    })?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
