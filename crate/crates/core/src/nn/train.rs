//! Mini-batch training loop.
//!
//! Each epoch shuffles the training set with a seeded stream, materializes
//! per-sample augmented views, and applies one Nadam step per batch on the
//! mean batch loss. Validation runs in inference mode (dropout off).
//! Everything is derived from (config seed, epoch, sample index), so runs
//! are bit-reproducible; batch members may be evaluated in parallel and
//! their gradients are reduced in fixed sample order.

use super::layers::mse_loss;
use super::nadam::{nadam_step, NadamHyper};
use super::unet::{backward, forward_cached, ConvParam, UNetModel};
use crate::error::{Error, Result};
use crate::rng::{split_seed, SeededRng};
use ndarray::Array3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    /// Compute validation loss every this many epochs.
    pub validation_every: usize,
    /// Evaluate batch members in parallel (gradients still reduced in
    /// fixed order, so results are bit-identical either way).
    pub parallel: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 75,
            batch_size: 4,
            learning_rate: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            validation_every: 1,
            parallel: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.validation_every == 0 {
            return Err(Error::validation(
                "epochs, batch size and validation interval must be >= 1",
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::validation("learning rate must be positive"));
        }
        Ok(())
    }

    pub fn hyper(&self) -> NadamHyper {
        NadamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Per-epoch losses; `val_loss` is NaN on epochs where validation was
/// skipped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// A set of training pairs that materializes (input, target) views on
/// demand; augmentation draws come from the passed stream.
pub trait TrainingSet: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn sample(&self, index: usize, rng: &mut SeededRng) -> (Array3<f64>, Array3<f64>);
}

/// Plain in-memory pairs without augmentation.
pub struct MemorySet {
    pub pairs: Vec<(Array3<f64>, Array3<f64>)>,
}

impl TrainingSet for MemorySet {
    fn len(&self) -> usize {
        self.pairs.len()
    }
    fn sample(&self, index: usize, _rng: &mut SeededRng) -> (Array3<f64>, Array3<f64>) {
        self.pairs[index].clone()
    }
}

/// One Nadam update on the mean gradient of the given samples.
/// Returns the mean sample loss.
fn train_batch(
    model: &mut UNetModel,
    batch: &[(usize, u64)],
    train_set: &dyn TrainingSet,
    config: &TrainConfig,
) -> Result<f64> {
    let eval = |&(index, sample_seed): &(usize, u64)| -> Result<(f64, Vec<ConvParam>)> {
        let mut aug_rng = SeededRng::new(split_seed(sample_seed, 0));
        let (input, target) = train_set.sample(index, &mut aug_rng);
        let dropout_seed = split_seed(sample_seed, 1);
        let (out, cache) = forward_cached(model, &input, true, dropout_seed)?;
        let (loss, loss_grad) = mse_loss(&out, &target)?;
        let (grads, _) = backward(model, &cache, &loss_grad)?;
        Ok((loss, grads))
    };

    let results: Vec<Result<(f64, Vec<ConvParam>)>> = if config.parallel {
        batch.par_iter().map(eval).collect()
    } else {
        batch.iter().map(eval).collect()
    };

    let scale = 1.0 / batch.len() as f64;
    let mut loss_sum = 0.0;
    let mut mean_grads: Option<Vec<ConvParam>> = None;
    for result in results {
        let (loss, grads) = result?;
        loss_sum += loss;
        match &mut mean_grads {
            None => mean_grads = Some(grads),
            Some(acc) => {
                for (a, g) in acc.iter_mut().zip(grads.iter()) {
                    a.kernels += &g.kernels;
                    a.bias += &g.bias;
                }
            }
        }
    }
    let mut grads = mean_grads.expect("batch is non-empty");
    for g in grads.iter_mut() {
        g.kernels *= scale;
        g.bias *= scale;
    }

    model.optimizer.step += 1;
    let t = model.optimizer.step;
    let hyper = config.hyper();
    for ((param, grad), (m, v)) in model
        .convs
        .iter_mut()
        .zip(grads.iter())
        .zip(
            model
                .optimizer
                .first_moment
                .iter_mut()
                .zip(model.optimizer.second_moment.iter_mut()),
        )
    {
        nadam_step(
            param.kernels.as_slice_mut().expect("standard layout"),
            grad.kernels.as_slice().expect("standard layout"),
            m.kernels.as_slice_mut().expect("standard layout"),
            v.kernels.as_slice_mut().expect("standard layout"),
            t,
            &hyper,
        )?;
        nadam_step(
            param.bias.as_slice_mut().expect("standard layout"),
            grad.bias.as_slice().expect("standard layout"),
            m.bias.as_slice_mut().expect("standard layout"),
            v.bias.as_slice_mut().expect("standard layout"),
            t,
            &hyper,
        )?;
    }
    Ok(loss_sum * scale)
}

/// Mean inference-mode loss over a set (no augmentation draws consumed).
pub fn evaluate_loss(model: &UNetModel, set: &dyn TrainingSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::validation("cannot evaluate an empty set"));
    }
    let mut total = 0.0;
    for i in 0..set.len() {
        let mut rng = SeededRng::new(0); // unused by non-augmenting sets
        let (input, target) = set.sample(i, &mut rng);
        let (out, _) = forward_cached(model, &input, false, 0)?;
        total += mse_loss(&out, &target)?.0;
    }
    Ok(total / set.len() as f64)
}

/// Train `model` in place; returns per-epoch history (length = epochs).
pub fn train(
    model: &mut UNetModel,
    train_set: &dyn TrainingSet,
    val_set: &dyn TrainingSet,
    config: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    train_epoch_range(model, train_set, val_set, config, 1, config.epochs)
}

/// Run epochs `first..=last` of the schedule defined by `config`. Epoch
/// seeds depend only on (config seed, epoch index), so training epochs
/// 1..=5, checkpointing, and resuming with 6..=10 reproduces an
/// uninterrupted 10-epoch run bit-exactly.
pub fn train_epoch_range(
    model: &mut UNetModel,
    train_set: &dyn TrainingSet,
    val_set: &dyn TrainingSet,
    config: &TrainConfig,
    first_epoch: usize,
    last_epoch: usize,
) -> Result<Vec<EpochStats>> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::validation("training set is empty"));
    }
    if first_epoch < 1 || first_epoch > last_epoch {
        return Err(Error::validation("bad epoch range"));
    }
    let mut history = Vec::with_capacity(last_epoch + 1 - first_epoch);
    for epoch in first_epoch..=last_epoch {
        let epoch_seed = split_seed(config.seed, epoch as u64);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        SeededRng::new(epoch_seed).shuffle(&mut order);

        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(usize, u64)> = chunk
                .iter()
                .map(|&index| (index, split_seed(epoch_seed, 1 + index as u64)))
                .collect();
            let batch_loss = train_batch(model, &batch, train_set, config)?;
            epoch_loss += batch_loss * chunk.len() as f64;
        }
        let train_loss = epoch_loss / train_set.len() as f64;

        let val_loss = if !val_set.is_empty() && epoch % config.validation_every == 0 {
            evaluate_loss(model, val_set)?
        } else {
            f64::NAN
        };
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
    }
    Ok(history)
}

/// Write history as CSV (`epoch,train_loss,val_loss`; blank when skipped).
pub fn write_history_csv(history: &[EpochStats], path: impl AsRef<std::path::Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for h in history {
        if h.val_loss.is_nan() {
            out.push_str(&format!("{},{:.12e},\n", h.epoch, h.train_loss));
        } else {
            out.push_str(&format!("{},{:.12e},{:.12e}\n", h.epoch, h.train_loss, h.val_loss));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
