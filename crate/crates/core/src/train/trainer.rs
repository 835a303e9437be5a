//! Seeded mini-batch training loop.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::{Adam, AdamConfig, AdamState};
use super::augment::augment_flip;
use super::dataset::{make_batch, LabeledSlice};
use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::model::{Checkpoint, DrUnet104, ModelConfig};
use crate::ops::ClassMap;
use crate::tensor::{Real, Tensor4};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Used when building the model through [`TrainConfig::model_config`].
    pub dropout_rate: f64,
    pub augment_flips: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 10,
            epochs: 50,
            learning_rate: 1e-4,
            dropout_rate: 0.2,
            augment_flips: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate {} is not a finite non-negative number",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout rate {} not in [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn model_config(
        &self,
        in_channels: usize,
        n_class: usize,
        width_divisor: usize,
    ) -> ModelConfig {
        ModelConfig {
            in_channels,
            n_class,
            dropout_rate: self.dropout_rate,
            width_divisor,
            seed: self.seed,
        }
    }
}

/// One optimization step on a prepared batch: train-mode forward, loss,
/// backward, Adam update, then the running-statistics update. Returns the
/// batch loss. Nothing is modified when the loss is not finite.
pub fn train_step<T: Real, R: Rng + ?Sized>(
    model: &mut DrUnet104<T>,
    optimizer: &mut Adam<T>,
    images: &Tensor4<T>,
    labels: &ClassMap,
    rng: &mut R,
) -> Result<f64> {
    let mut tape = Tape::new();
    let x = tape.leaf(images.clone());
    let fwd = model.forward_train(&mut tape, x, rng)?;
    let loss_var = tape.sparse_ce(fwd.logits, labels)?;
    let loss = tape.value(loss_var).to_scalar()?.to_f64_lossy();
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            epoch: 0,
            batch: 0,
            loss,
        });
    }
    let grads = tape.backward(loss_var)?;
    optimizer.step(model.params_mut(), &grads)?;
    model.apply_norm_updates(&fwd.norm_updates);
    Ok(loss)
}

pub struct Trainer<T: Real> {
    pub model: DrUnet104<T>,
    pub optimizer: Adam<T>,
    pub config: TrainConfig,
    rng: ChaCha8Rng,
    epochs_done: usize,
    loss_history: Vec<f64>,
}

impl<T: Real> Trainer<T> {
    pub fn new(model: DrUnet104<T>, config: TrainConfig) -> Result<Self> {
        let state = AdamState::new(model.params());
        Self::resume(model, state, config)
    }

    /// Continues from saved optimizer state. The shuffling / dropout
    /// stream restarts from `config.seed`.
    pub fn resume(model: DrUnet104<T>, state: AdamState<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if state.moments.len() != model.params().len() {
            return Err(Error::Shape(format!(
                "optimizer state covers {} tensors, model has {}",
                state.moments.len(),
                model.params().len()
            )));
        }
        Ok(Self {
            optimizer: Adam::from_state(
                AdamConfig::with_learning_rate(config.learning_rate),
                state,
            ),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            model,
            config,
            epochs_done: 0,
            loss_history: Vec::new(),
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::from_model(&self.model, Some(&self.optimizer.state))
    }

    /// One step with an explicit random stream (dropout only; no flips).
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        images: &Tensor4<T>,
        labels: &ClassMap,
        rng: &mut R,
    ) -> Result<f64> {
        train_step(&mut self.model, &mut self.optimizer, images, labels, rng)
    }

    /// One pass over `data` in a fresh seeded order. Returns the mean
    /// per-slice loss.
    pub fn run_epoch(&mut self, data: &[LabeledSlice<T>]) -> Result<f64> {
        check_dataset(data)?;
        let epoch = self.epochs_done + 1;
        let batches = epoch_batches(data.len(), self.config.batch_size, &mut self.rng);
        let mut total = 0.0;
        for (batch, indices) in batches.iter().enumerate() {
            let (mut images, mut labels) = make_batch(data, indices)?;
            if self.config.augment_flips {
                augment_flip(&mut images, &mut labels, &mut self.rng)?;
            }
            let loss = train_step(
                &mut self.model,
                &mut self.optimizer,
                &images,
                &labels,
                &mut self.rng,
            )
            .map_err(|e| match e {
                Error::NonFinite { loss, .. } => Error::NonFinite { epoch, batch, loss },
                other => other,
            })?;
            log::debug!("epoch {epoch} batch {batch} loss {loss:.6}");
            total += loss * indices.len() as f64;
        }
        let mean = total / data.len() as f64;
        self.epochs_done = epoch;
        self.loss_history.push(mean);
        Ok(mean)
    }

    /// Runs `config.epochs` epochs, calling `on_epoch(epoch, mean_loss, self)`
    /// after each.
    pub fn run(
        &mut self,
        data: &[LabeledSlice<T>],
        mut on_epoch: impl FnMut(usize, f64, &Self) -> Result<()>,
    ) -> Result<Vec<f64>> {
        for _ in 0..self.config.epochs {
            let loss = self.run_epoch(data)?;
            on_epoch(self.epochs_done, loss, self)?;
        }
        Ok(self.loss_history.clone())
    }
}

/// Seeded shuffle of `0..len` cut into batches of `batch_size`; the last
/// batch may be short. This is the first draw an epoch takes from its
/// stream.
pub fn epoch_batches<R: Rng + ?Sized>(
    len: usize,
    batch_size: usize,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    order
        .chunks(batch_size.max(1))
        .map(<[usize]>::to_vec)
        .collect()
}

fn check_dataset<T: Real>(data: &[LabeledSlice<T>]) -> Result<()> {
    let first = data
        .first()
        .ok_or_else(|| Error::Data("training set is empty".into()))?;
    let s = first.image.shape();
    for (i, d) in data.iter().enumerate() {
        if d.image.shape() != s {
            return Err(Error::Shape(format!(
                "slice {i} has shape {}, slice 0 has {s}",
                d.image.shape()
            )));
        }
    }
    Ok(())
}

/// Trains `model` on `data` and returns it with the per-epoch loss history.
pub fn train<T: Real>(
    model: DrUnet104<T>,
    data: &[LabeledSlice<T>],
    config: &TrainConfig,
) -> Result<(DrUnet104<T>, Vec<f64>)> {
    let mut trainer = Trainer::new(model, config.clone())?;
    let history = trainer.run(data, |epoch, loss, _| {
        log::info!("epoch {epoch}: mean loss {loss:.6}");
        Ok(())
    })?;
    Ok((trainer.model, history))
}

/// `epoch,mean_loss` CSV, epochs numbered from 1.
pub fn loss_history_csv(history: &[f64]) -> String {
    let mut out = String::from("epoch,mean_loss\n");
    for (i, l) in history.iter().enumerate() {
        let _ = writeln!(out, "{},{l:.8}", i + 1);
    }
    out
}
