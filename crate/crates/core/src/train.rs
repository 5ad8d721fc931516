//! Supervised regression of the value function on oracle costs.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::math::Real;
use crate::optim::{Adam, AdamConfig};
use crate::rgnn::{loss_and_grad, value, Model, ModelError, Prepared};
use crate::seed;
use crate::tensor::Mat;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Fraction of examples held out for model selection.
    pub val_fraction: Real,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 64,
            epochs: 40,
            seed: 0,
            val_fraction: 0.1,
        }
    }
}

pub struct Example {
    pub input: Prepared,
    pub target: Real,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: Real,
    pub val_loss: Real,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: Real,
    pub train_size: usize,
    pub val_size: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("empty training set")]
    Empty,
    #[error("batch size must be positive")]
    BatchSize,
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type GradResult = Result<(Real, Vec<Option<Mat>>), ModelError>;

/// Runs independent per-example jobs; results must come back in index order.
pub trait Executor {
    fn run(&self, n: usize, job: &(dyn Fn(usize) -> GradResult + Sync)) -> Vec<GradResult>;
}

pub struct Sequential;

impl Executor for Sequential {
    fn run(&self, n: usize, job: &(dyn Fn(usize) -> GradResult + Sync)) -> Vec<GradResult> {
        (0..n).map(job).collect()
    }
}

/// Seeded train/validation split. A single example serves as both.
pub fn split(n: usize, val_fraction: Real, seed_value: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed_value, "split", 0));
    if n < 2 || val_fraction <= 0.0 {
        return (idx.clone(), idx);
    }
    let val = ((n as Real * val_fraction) as usize).clamp(1, n - 1);
    let train = idx.split_off(val);
    (train, idx)
}

fn mean_loss(
    model: &Model,
    examples: &[Example],
    idx: &[usize],
    exec: &dyn Executor,
) -> Result<Real, ModelError> {
    if idx.is_empty() {
        return Ok(0.0);
    }
    let job = |i: usize| -> GradResult {
        let e = &examples[idx[i]];
        let v = value(model, &e.input)?;
        Ok(((v - e.target) * (v - e.target), Vec::new()))
    };
    let mut total = 0.0;
    for r in exec.run(idx.len(), &job) {
        total += r?.0;
    }
    Ok(total / idx.len() as Real)
}

/// Adam on mini-batch mean squared error. Per-example gradients are summed
/// in example order, so results do not depend on the executor. Returns with
/// `model` holding the parameters of the epoch with lowest validation loss.
pub fn train(
    model: &mut Model,
    examples: &[Example],
    config: &TrainConfig,
    exec: &dyn Executor,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainReport, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::Empty);
    }
    if config.batch_size == 0 {
        return Err(TrainError::BatchSize);
    }
    let (mut train_idx, val_idx) = split(examples.len(), config.val_fraction, config.seed);
    let mut adam = Adam::new(config.adam, model.params());
    let mut best = (Real::INFINITY, 0usize, model.params().to_vec());
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut seed::rng(config.seed, "epoch", epoch as u64));
        let mut epoch_loss = 0.0;
        for batch in train_idx.chunks(config.batch_size) {
            let snapshot: &Model = model;
            let job = |i: usize| {
                loss_and_grad(
                    snapshot,
                    &examples[batch[i]].input,
                    examples[batch[i]].target,
                )
            };
            let results = exec.run(batch.len(), &job);
            let mut sum: Vec<Option<Mat>> = (0..model.params().len()).map(|_| None).collect();
            for r in results {
                let (loss, grads) = r?;
                epoch_loss += loss;
                for (acc, g) in sum.iter_mut().zip(grads) {
                    match (acc.as_mut(), g) {
                        (Some(a), Some(g)) => {
                            a.data.iter_mut().zip(&g.data).for_each(|(x, y)| *x += y)
                        }
                        (None, Some(g)) => *acc = Some(g),
                        _ => {}
                    }
                }
            }
            let scale = 1.0 / batch.len() as Real;
            for g in sum.iter_mut().flatten() {
                g.data.iter_mut().for_each(|x| *x *= scale);
            }
            adam.step(model.params_mut(), &sum);
        }
        let entry = EpochLog {
            epoch,
            train_loss: epoch_loss / train_idx.len() as Real,
            val_loss: mean_loss(model, examples, &val_idx, exec)?,
        };
        on_epoch(&entry);
        if entry.val_loss < best.0 {
            best = (entry.val_loss, epoch, model.params().to_vec());
        }
        log.push(entry);
    }
    if config.epochs > 0 {
        for (p, b) in model.params_mut().iter_mut().zip(best.2) {
            *p = b;
        }
    } else {
        best.0 = mean_loss(model, examples, &val_idx, exec)?;
    }
    Ok(TrainReport {
        log,
        best_epoch: best.1,
        best_val_loss: best.0,
        train_size: train_idx.len(),
        val_size: val_idx.len(),
    })
}
