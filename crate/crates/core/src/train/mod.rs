//! Loss, metrics, optimiser and the epoch loop.

pub mod checkpoint;
pub mod metric_log;
pub mod metrics;
pub mod optim;

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use metric_log::{MetricLog, MetricRow};
pub use metrics::{
    channel_errors, linf_err, mean_sample_relative_l2, moving_average, mse_loss, mse_loss_var,
    phase_balance, relative_l2, ChannelErrors, PhaseBalance,
};
pub use optim::{cosine_lr, AdamW};

use crate::data::generate::sample_rng;
use crate::data::{Dataset, Metadata, Normalizer};
use crate::deeponet::{normalized_times, HybridModel};
use crate::tensor::{Tape, Tensor};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub opt: AdamW,
    /// Completed epochs.
    pub epoch: usize,
    pub total_epochs: usize,
    pub lr0: f64,
    pub seed: u64,
    /// Best selection metric so far (lower is better).
    pub best: f64,
}

impl TrainState {
    pub fn new(model: &HybridModel, cfg: &TrainConfig) -> Self {
        TrainState {
            opt: AdamW::new(model.params(), cfg.weight_decay),
            epoch: 0,
            total_epochs: cfg.epochs,
            lr0: cfg.lr,
            seed: cfg.seed,
            best: f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// `last.hno` and `best.hno` go here when set.
    pub checkpoint_dir: Option<PathBuf>,
    /// Stop after this epoch index even if `epochs` is larger (the schedule
    /// still follows `epochs`); used to interrupt runs.
    pub stop_after: Option<usize>,
    /// Extra entries stored in every checkpoint.
    pub meta: Metadata,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 8,
            lr: 1e-2,
            weight_decay: 0.0,
            seed: 0,
            checkpoint_dir: None,
            stop_after: None,
            meta: Metadata::new(),
        }
    }
}

/// Encoded model inputs and targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub v: Tensor,
    pub xi: Tensor,
    pub y: Tensor,
}

impl Split {
    pub fn len(&self) -> usize {
        self.v.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Split {
        Split {
            v: self.v.select_axis0(idx),
            xi: self.xi.select_axis0(idx),
            y: self.y.select_axis0(idx),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainData {
    pub train: Split,
    pub val: Option<Split>,
    pub input_norm: Normalizer,
    pub target_norm: Normalizer,
    pub channels: Vec<String>,
}

fn encode(d: &Dataset, inorm: &Normalizer, tnorm: &Normalizer) -> Result<Split> {
    Ok(Split {
        v: inorm.encode(&d.inputs)?,
        xi: normalized_times(&d.times, d.len()),
        y: tnorm.encode(&d.targets)?,
    })
}

impl TrainData {
    /// Normalisers come from the dataset when present, otherwise they are
    /// fitted on `train`.
    pub fn new(train: &Dataset, val: Option<&Dataset>) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyData);
        }
        let inorm = match &train.input_norm {
            Some(n) => n.clone(),
            None => Normalizer::fit(crate::data::NormMode::MeanStd, &train.inputs, 1)?,
        };
        let tnorm = match &train.target_norm {
            Some(n) => n.clone(),
            None => Normalizer::fit(crate::data::NormMode::MeanStd, &train.targets, 1)?,
        };
        Ok(TrainData {
            train: encode(train, &inorm, &tnorm)?,
            val: val
                .filter(|v| !v.is_empty())
                .map(|v| encode(v, &inorm, &tnorm))
                .transpose()?,
            input_norm: inorm,
            target_norm: tnorm,
            channels: train.output_channels.clone(),
        })
    }

    /// Holds out the trailing `fraction` of the training samples.
    pub fn with_validation_split(d: &Dataset, fraction: f64) -> Result<Self> {
        let tr = d.train();
        let n_val = ((tr.len() as f64) * fraction).round() as usize;
        if n_val >= tr.len() {
            return Err(Error::InvalidCounts(format!(
                "validation split {fraction} leaves no training samples"
            )));
        }
        let cut = tr.len() - n_val;
        let a = tr.select(&(0..cut).collect::<Vec<_>>());
        let b = tr.select(&(cut..tr.len()).collect::<Vec<_>>());
        Self::new(&a, (n_val > 0).then_some(&b))
    }
}

/// Model outputs in encoded units, evaluated `batch` samples at a time.
pub fn predict_encoded(model: &HybridModel, split: &Split, batch: usize) -> Result<Tensor> {
    let mut outs = Vec::new();
    for start in (0..split.len()).step_by(batch.max(1)) {
        let idx: Vec<usize> = (start..(start + batch).min(split.len())).collect();
        let s = split.select(&idx);
        outs.push(model.predict(&s.v, &s.xi)?);
    }
    Tensor::concat(&outs, 0)
}

pub fn predict_decoded(
    model: &HybridModel,
    split: &Split,
    norm: &Normalizer,
    batch: usize,
) -> Result<Tensor> {
    norm.decode(&predict_encoded(model, split, batch)?)
}

/// Squared error and squared reference of channel 0, in field units.
fn channel0_sums(pred: &Tensor, target: &Tensor) -> (f64, f64) {
    let per = pred.len() / (pred.shape()[0] * pred.shape()[1]);
    let c = pred.shape()[1];
    let mut e = 0.0;
    let mut r = 0.0;
    for s in 0..pred.shape()[0] {
        let base = s * c * per;
        for i in base..base + per {
            e += (pred.data()[i] - target.data()[i]).powi(2);
            r += target.data()[i].powi(2);
        }
    }
    (e, r)
}

/// Epoch loop: shuffle (stream fixed by seed and epoch), forward, MSE in
/// encoded units, backward, AdamW with the cosine rate of the epoch. Keeps
/// `last.hno` and the best-by-validation `best.hno` when a checkpoint
/// directory is configured. Returns the rows of the epochs run here.
pub fn train(
    model: &mut HybridModel,
    data: &TrainData,
    state: &mut TrainState,
    cfg: &TrainConfig,
) -> Result<MetricLog> {
    let n = data.train.len();
    if cfg.batch_size == 0 || cfg.batch_size > n {
        return Err(Error::InvalidCounts(format!(
            "batch size {} for {n} training samples",
            cfg.batch_size
        )));
    }
    if state.opt.m.len() != model.params().len() {
        return Err(Error::shape(
            "train",
            &[model.params().len()],
            &[state.opt.m.len()],
        ));
    }
    let mut log = MetricLog::new(data.channels.clone());
    let mut extra = cfg.meta.clone();
    extra.set("normalizer.inputs", data.input_norm.to_text());
    extra.set("normalizer.targets", data.target_norm.to_text());
    extra.set("channels", data.channels.join(","));
    let last_epoch = cfg
        .stop_after
        .map_or(state.total_epochs, |s| s.min(state.total_epochs));
    while state.epoch < last_epoch {
        let epoch = state.epoch;
        let clock = Instant::now();
        let lr = cosine_lr(epoch, state.total_epochs, state.lr0);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut sample_rng(state.seed, epoch));
        let (mut loss_acc, mut e0, mut r0, mut skipped) = (0.0, 0.0, 0.0, 0);
        for chunk in order.chunks(cfg.batch_size) {
            let b = data.train.select(chunk);
            let mut tape = Tape::new();
            let p = model.params().bind(&mut tape);
            let v = tape.constant(b.v);
            let xi = tape.constant(b.xi);
            let y = tape.constant(b.y.clone());
            let out = model.forward(&mut tape, &p, v, xi)?;
            let loss = mse_loss_var(&mut tape, out, y)?;
            let lv = tape.value(loss).item();
            if !lv.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            loss_acc += lv * chunk.len() as f64;
            let pred = data.target_norm.decode(tape.value(out))?;
            let (e, r) = channel0_sums(&pred, &data.target_norm.decode(&b.y)?);
            e0 += e;
            r0 += r;
            let mut grads = tape.backward(loss)?;
            let g: Vec<Tensor> = p
                .vars()
                .iter()
                .map(|&v| {
                    grads
                        .take(v)
                        .expect("parameter leaves always get gradients")
                })
                .collect();
            match state.opt.step(model.params_mut(), &g, lr) {
                Ok(()) => {}
                Err(Error::NonFiniteGradient(name)) => {
                    log::warn!("epoch {epoch}: skipped step, non-finite gradient in {name}");
                    skipped += 1;
                }
                Err(e) => return Err(e),
            }
        }
        let mut row = MetricRow {
            epoch: epoch + 1,
            lr,
            train_mse: loss_acc / n as f64,
            train_rel: if r0 > 0.0 { (e0 / r0).sqrt() } else { f64::NAN },
            val_mse: None,
            val_rel: None,
            val_rel_channels: Vec::new(),
            skipped_steps: skipped,
            seconds: 0.0,
        };
        if let Some(val) = &data.val {
            let raw = predict_encoded(model, val, cfg.batch_size)?;
            row.val_mse = Some(mse_loss(&raw, &val.y)?);
            let pred = data.target_norm.decode(&raw)?;
            let truth = data.target_norm.decode(&val.y)?;
            let ce = channel_errors(&pred, &truth)?;
            row.val_rel = Some(ce[0].rel);
            row.val_rel_channels = ce.iter().map(|c| c.rel).collect();
        }
        let select = row.val_rel.unwrap_or(row.train_rel);
        state.epoch += 1;
        row.seconds = clock.elapsed().as_secs_f64();
        log::info!(
            "epoch {} lr {:.3e} train_mse {:.4e} train_rel {:.4} val_rel {:?} ({:.1}s)",
            row.epoch,
            lr,
            row.train_mse,
            row.train_rel,
            row.val_rel,
            row.seconds
        );
        let improved = select < state.best;
        if improved {
            state.best = select;
        }
        if let Some(dir) = &cfg.checkpoint_dir {
            std::fs::create_dir_all(dir)?;
            if improved {
                save_checkpoint(dir.join("best.hno"), model, state, &extra)?;
            }
            save_checkpoint(dir.join("last.hno"), model, state, &extra)?;
        }
        log.push(row)?;
    }
    Ok(log)
}
