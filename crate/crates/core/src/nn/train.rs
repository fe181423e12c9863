use std::path::PathBuf;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{lit, write_checkpoint, AdamState, LossReport, Real, VaeModel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop once this many epochs pass without enough relative improvement.
    pub patience: usize,
    pub min_rel_improvement: f64,
    /// Written after every completed epoch.
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 128,
            seed: 0,
            patience: 20,
            min_rel_improvement: 1e-4,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub batches: Vec<LossReport>,
    /// Sample-weighted mean total loss per epoch.
    pub epoch_loss: Vec<f64>,
    pub stopped_early: bool,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.epoch_loss.len()
    }
}

fn gather<T: Real>(data: ArrayView2<T>, idx: &[usize]) -> Array2<T> {
    data.select(Axis(0), idx)
}

/// Minibatch training with per-epoch shuffling. Shuffling and sampling
/// noise come from one ChaCha stream seeded with `cfg.seed`.
pub fn train<T: Real>(
    model: &mut VaeModel<T>,
    adam: &mut AdamState<T>,
    data: ArrayView2<T>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if data.ncols() != model.input_dim() {
        return Err(Error::dims(format!("{} features", model.input_dim()), data.ncols()));
    }
    if data.nrows() == 0 || cfg.batch_size == 0 {
        return Err(Error::param("data/batch_size", "need at least one sample and batch size >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    let latent = model.latent_dim();
    let mut report = TrainReport {
        batches: Vec::new(),
        epoch_loss: Vec::new(),
        stopped_early: false,
    };
    let mut best = f64::INFINITY;
    let mut stale = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut acc = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let x = gather(data, idx);
            let noise = Array2::from_shape_fn((idx.len(), latent), |_| {
                lit::<T>(StandardNormal.sample(&mut rng))
            });
            let pass = model.forward_train(x.view(), noise.view())?;
            let (loss, heads) = model.loss_and_grads(&pass, x.view());
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            let grads = model.backward(x.view(), &pass, &heads);
            adam.step(model, &grads)?;
            acc += loss.total * idx.len() as f64;
            report.batches.push(loss);
        }
        let mean = acc / data.nrows() as f64;
        report.epoch_loss.push(mean);
        if let Some(path) = &cfg.checkpoint {
            write_checkpoint(path, model, adam)?;
        }
        if mean < best * (1.0 - cfg.min_rel_improvement) {
            best = mean;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                report.stopped_early = true;
                break;
            }
        }
    }
    Ok(report)
}
