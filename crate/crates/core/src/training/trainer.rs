use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::models::{forward_on_tape, ForwardOptions, Model, ModelConfig};
use crate::numerics::{grad, Tape, Tensor};
use crate::rng;
use crate::training::optim::{adam_step, clip_grad_norm, sgd_step, AdamParams, AdamState, SgdState};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    Mae,
    Mse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Windows per optimiser step.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// SGD only.
    pub momentum: f64,
    pub loss: LossKind,
    /// Epochs without validation improvement before stopping; 0 never stops.
    pub patience: usize,
    /// Set from the run seed; not read from config files.
    #[serde(skip)]
    pub seed: u64,
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            momentum: 0.9,
            loss: LossKind::Mae,
            patience: 10,
            seed: 0,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.epochs < 1 {
            return fail("epochs must be >= 1".into());
        }
        if self.batch_size < 1 {
            return fail("batch_size must be >= 1".into());
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return fail(format!("learning_rate must be >= 0, got {}", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("beta1 and beta2 must lie in [0, 1)".into());
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return fail("epsilon must be > 0".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return fail("momentum must lie in [0, 1)".into());
        }
        if let Some(c) = self.clip_norm {
            if c.is_nan() || c <= 0.0 {
                return fail(format!("clip_norm must be > 0, got {c}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub train_loss: f64,
    pub val_mae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: String,
    pub param_count: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub stopped_early: bool,
    pub wall_time_secs: f64,
}

impl TrainReport {
    pub fn write_epochs_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epoch", "train_loss", "val_mae"])?;
        for e in &self.epochs {
            w.write_record([e.epoch.to_string(), e.train_loss.to_string(), e.val_mae.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `<stem>.json` and the per-epoch `<stem>_epochs.csv` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(self)? + "\n")?;
        self.write_epochs_csv(std::fs::File::create(dir.join(format!("{stem}_epochs.csv")))?)
    }
}

/// Windows per gradient chunk. Fixed so the reduction order does not depend
/// on the thread count.
const CHUNK: usize = 16;

fn check_dataset(ds: &WindowedDataset, config: &ModelConfig, what: &str) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::Data(format!("{what} dataset is empty")));
    }
    if ds.t_in != config.t_in || ds.t_out != config.t_out {
        return Err(Error::shape(
            "train",
            format!(
                "{what} windows are {}->{} but the model is {}->{}",
                ds.t_in, ds.t_out, config.t_in, config.t_out
            ),
        ));
    }
    Ok(())
}

/// Loss sum (not mean) over one chunk and its parameter gradients.
fn chunk_grad(model: &Model, ds: &WindowedDataset, idx: &[usize], loss: LossKind, scale: f64) -> Result<(f64, Vec<Tensor>)> {
    let (x, y) = ds.batch(idx);
    let mut tape = Tape::new();
    let vars = model.params().register(&mut tape, true);
    let xv = tape.constant(x);
    let yv = tape.constant(y);
    let out = forward_on_tape(&mut tape, model.config(), &vars, xv, ForwardOptions::default())?;
    let diff = tape.sub(out, yv)?;
    let per_point = match loss {
        LossKind::Mae => tape.abs(diff),
        LossKind::Mse => tape.mul(diff, diff)?,
    };
    let total = tape.sum(per_point);
    let scaled = tape.scale(total, scale);
    let leaves: Vec<_> = vars.iter().map(|(_, v)| v).collect();
    let grads = grad(&tape, scaled, &leaves)?;
    Ok((tape.value(scaled).item()?, grads))
}

/// Mean loss and gradients over one batch, reduced in chunk order.
fn batch_grad(model: &Model, ds: &WindowedDataset, idx: &[usize], loss: LossKind) -> Result<(f64, Vec<Tensor>)> {
    let points = (idx.len() * ds.n_channels() * ds.t_out) as f64;
    let parts: Vec<Result<(f64, Vec<Tensor>)>> = idx
        .par_chunks(CHUNK)
        .map(|c| chunk_grad(model, ds, c, loss, 1.0 / points))
        .collect();
    let mut total = 0.0;
    let mut acc: Option<Vec<Tensor>> = None;
    for part in parts {
        let (l, g) = part?;
        total += l;
        acc = Some(match acc {
            None => g,
            Some(a) => a.iter().zip(&g).map(|(a, b)| a.add(b)).collect::<Result<_>>()?,
        });
    }
    Ok((total, acc.unwrap_or_default()))
}

/// Forecasts for every window, `[N, n, t_out]`, alongside the targets.
pub fn predict(model: &Model, ds: &WindowedDataset) -> Result<(Tensor, Tensor)> {
    let n = ds.n_channels();
    let t_out = ds.t_out;
    let idx: Vec<usize> = (0..ds.len()).collect();
    let parts: Vec<Result<(Tensor, Tensor)>> = idx
        .par_chunks(256)
        .map(|c| {
            let (x, y) = ds.batch(c);
            Ok((model.forward(&x)?, y))
        })
        .collect();
    let (mut pred, mut target) = (Vec::with_capacity(ds.len() * n * t_out), Vec::with_capacity(ds.len() * n * t_out));
    for part in parts {
        let (p, y) = part?;
        pred.extend_from_slice(p.data());
        target.extend_from_slice(y.data());
    }
    Ok((
        Tensor::new(vec![ds.len(), n, t_out], pred)?,
        Tensor::new(vec![ds.len(), n, t_out], target)?,
    ))
}

/// MAE over every point of every window.
pub fn evaluate_mae(model: &Model, ds: &WindowedDataset) -> Result<f64> {
    let (p, y) = predict(model, ds)?;
    crate::metrics::mae(p.data(), y.data(), None)
}

/// Trains a fresh model of `config` and returns the parameters of the epoch
/// with the lowest validation MAE.
pub fn train(config: &ModelConfig, train_ds: &WindowedDataset, val_ds: &WindowedDataset, tc: &TrainConfig) -> Result<(Model, TrainReport)> {
    let model = Model::init(config.clone(), tc.seed)?;
    train_from(model, train_ds, val_ds, tc)
}

/// Like [`train`], starting from the given parameters.
pub fn train_from(mut model: Model, train_ds: &WindowedDataset, val_ds: &WindowedDataset, tc: &TrainConfig) -> Result<(Model, TrainReport)> {
    tc.validate()?;
    let config = model.config().clone();
    config.validate()?;
    check_dataset(train_ds, &config, "training")?;
    check_dataset(val_ds, &config, "validation")?;
    if train_ds.n_channels() != val_ds.n_channels() {
        return Err(Error::shape(
            "train",
            format!("{} training channels vs {} validation", train_ds.n_channels(), val_ds.n_channels()),
        ));
    }
    let started = Instant::now();
    let mut shuffle = rng::substream(tc.seed, "shuffle");
    let mut adam = AdamState::new(model.params());
    let mut sgd = SgdState::new(model.params());
    let hp = AdamParams {
        lr: tc.learning_rate,
        beta1: tc.beta1,
        beta2: tc.beta2,
        eps: tc.epsilon,
    };
    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    let mut epochs = Vec::new();
    let mut best = (0usize, f64::INFINITY, model.clone());
    let mut since_best = 0;
    let mut stopped_early = false;
    for epoch in 1..=tc.epochs {
        order.shuffle(&mut shuffle);
        let mut loss_sum = 0.0;
        let mut steps = 0;
        for (step, idx) in order.chunks(tc.batch_size).enumerate() {
            let (loss, mut grads) = batch_grad(&model, train_ds, idx, tc.loss)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, step, loss });
            }
            if let Some(c) = tc.clip_norm {
                clip_grad_norm(&mut grads, c);
            }
            match tc.optimizer {
                OptimizerKind::Adam => adam_step(model.params_mut(), &grads, &mut adam, hp),
                OptimizerKind::Sgd => sgd_step(model.params_mut(), &grads, &mut sgd, tc.learning_rate, tc.momentum),
            }
            loss_sum += loss;
            steps += 1;
        }
        let val_mae = evaluate_mae(&model, val_ds)?;
        if !val_mae.is_finite() {
            return Err(Error::Diverged {
                epoch,
                step: steps,
                loss: val_mae,
            });
        }
        let train_loss = loss_sum / steps as f64;
        debug!("epoch {epoch}: train {train_loss:.6} val MAE {val_mae:.6}");
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_mae,
        });
        if val_mae < best.1 {
            best = (epoch, val_mae, model.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if tc.patience > 0 && since_best >= tc.patience {
                info!("early stop at epoch {epoch}; best epoch {}", best.0);
                stopped_early = true;
                break;
            }
        }
    }
    let report = TrainReport {
        model: config.kind.name().to_string(),
        param_count: best.2.params().scalar_count(),
        epochs,
        best_epoch: best.0,
        best_val_mae: best.1,
        stopped_early,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((best.2, report))
}
