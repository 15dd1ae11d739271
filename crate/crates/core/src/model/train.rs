use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::network::Autoencoder;
use crate::nn::{LossKind, Real, Tensor};
use crate::optim::{Optimizer, OptimizerConfig};

/// Shuffling draws from this stream of the run seed; initialization uses
/// streams 0.. (one per layer), so the two never overlap in practice.
const SHUFFLE_STREAM: u64 = 1 << 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 70,
            batch_size: 32,
            optimizer: OptimizerConfig::default(),
            loss: LossKind::Mse,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch must be at least 1".into()));
        }
        self.optimizer.validate()
    }
}

/// Minibatch training. Returns one entry per epoch: the mean of that epoch's
/// per-batch losses. The last, possibly short, batch is kept.
///
/// Per-sample gradients inside a batch are computed in parallel and summed
/// in sample order, so results do not depend on thread scheduling.
pub fn train<T: Real>(
    model: &mut Autoencoder<T>,
    tiles: &[Tensor<T>],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    train_with(model, tiles, cfg, |_, _| {})
}

/// As [`train`], calling `on_epoch(epoch, loss)` after every epoch.
pub fn train_with<T: Real>(
    model: &mut Autoencoder<T>,
    tiles: &[Tensor<T>],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if tiles.is_empty() {
        return Err(Error::Empty("training needs at least one tile"));
    }
    for t in tiles {
        t.expect_shape("train", &model.input_shape)?;
    }
    let mut optimizer = Optimizer::new(cfg.optimizer, model.params())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..tiles.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut batch_losses = Vec::new();
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let per_sample: Vec<(f64, Vec<Tensor<T>>)> = batch
                .par_iter()
                .map(|&i| model.loss_and_grads(&tiles[i], cfg.loss))
                .collect::<Result<_>>()
                .map_err(|e| match e {
                    Error::NumericFault { .. } => Error::NonFiniteLoss { epoch, batch: b },
                    other => other,
                })?;

            let loss = per_sample.iter().map(|(l, _)| l).sum::<f64>() / batch.len() as f64;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            let mut samples = per_sample.into_iter().map(|(_, g)| g);
            let mut grads = samples.next().expect("batches are non-empty");
            for sample in samples {
                for (acc, g) in grads.iter_mut().zip(&sample) {
                    acc.add_assign(g)?;
                }
            }
            let inv = T::of(1.0 / batch.len() as f64);
            for g in &mut grads {
                g.scale(inv);
            }
            optimizer.step(model.params_mut(), &grads)?;
            batch_losses.push(loss);
        }
        let epoch_loss = batch_losses.iter().sum::<f64>() / batch_losses.len() as f64;
        debug!("epoch {} loss {epoch_loss:.6}", epoch + 1);
        on_epoch(epoch, epoch_loss);
        history.push(epoch_loss);
    }
    Ok(history)
}
