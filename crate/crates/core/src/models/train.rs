use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ModelConfig, ModelError, TieredGae, TieredInput, TieredVgae};
use crate::models::vgae::{elbo, GaussianNoise};
use crate::numerics::{NumericsError, OptimizerKind, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Target KL weight of the VGAE objective.
    pub beta: f64,
    /// Fraction of the epochs over which β ramps linearly from 0.
    pub warmup_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 0.01,
            seed: 42,
            optimizer: OptimizerKind::Adam,
            beta: 1.0,
            warmup_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("the training set is empty")]
    EmptyDataset,
    #[error("learning rate must be positive and finite, got {0}")]
    LearningRate(f64),
    #[error("non-finite loss at epoch {epoch} on molecule {molecule}")]
    NonFinite { epoch: usize, molecule: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl From<NumericsError> for TrainError {
    fn from(e: NumericsError) -> Self {
        TrainError::Model(e.into())
    }
}

/// Epoch-mean loss; epochs count from 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaeEpoch {
    pub epoch: usize,
    pub loss: f64,
}

/// Epoch-mean ELBO (at the target β) and summed-over-tiers KL.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VgaeEpoch {
    pub epoch: usize,
    pub elbo: f64,
    pub kl: f64,
}

/// KL weight used at 0-based `epoch`: `beta · min(1, epoch / warm-up)` with a
/// warm-up of `ceil(fraction · epochs)` epochs.
pub fn beta_schedule(config: &TrainConfig, epoch: usize) -> f64 {
    let warm = (config.warmup_fraction * config.epochs as f64).ceil();
    if warm <= 0.0 {
        config.beta
    } else {
        config.beta * (epoch as f64 / warm).min(1.0)
    }
}

fn check(dataset: &[TieredInput], config: &TrainConfig) -> Result<(), TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
        return Err(TrainError::LearningRate(config.learning_rate));
    }
    Ok(())
}

impl TieredGae {
    /// One full-batch step per molecule, in dataset order, for every epoch.
    pub fn fit(&mut self, dataset: &[TieredInput], config: &TrainConfig) -> Result<Vec<GaeEpoch>, TrainError> {
        check(dataset, config)?;
        let mut opt = config.optimizer.build(config.learning_rate);
        let mut trace = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            let mut total = 0.0;
            for (k, input) in dataset.iter().enumerate() {
                let tape = Tape::new();
                let p = self.store().bind(&tape);
                let loss = self.loss(&p, &tape, input)?.total;
                let value = loss.scalar();
                if !value.is_finite() {
                    return Err(TrainError::NonFinite { epoch: epoch + 1, molecule: k });
                }
                let grads = tape.backward(loss)?;
                let store = self.store_mut();
                store.accumulate(&p, &grads)?;
                opt.step(store)?;
                let decoder = self.decoder().clone();
                decoder.symmetrize(self.store_mut());
                total += value;
            }
            trace.push(GaeEpoch {
                epoch: epoch + 1,
                loss: total / dataset.len() as f64,
            });
        }
        Ok(trace)
    }
}

impl TieredVgae {
    /// Gradient ascent on the ELBO with β warm-up. Noise is drawn from a
    /// stream seeded by `config.seed`.
    pub fn fit(&mut self, dataset: &[TieredInput], config: &TrainConfig) -> Result<Vec<VgaeEpoch>, TrainError> {
        check(dataset, config)?;
        let mut opt = config.optimizer.build(config.learning_rate);
        let mut noise = GaussianNoise::new(config.seed.wrapping_add(1));
        let mut trace = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            let beta = beta_schedule(config, epoch);
            let (mut elbo_sum, mut kl_sum) = (0.0, 0.0);
            for (k, input) in dataset.iter().enumerate() {
                let tape = Tape::new();
                let p = self.store().bind(&tape);
                let terms = elbo(self, &p, &tape, input, &mut noise, beta)?;
                let reported = -terms.reconstruction - config.beta * terms.kl;
                if !(terms.elbo.scalar().is_finite() && reported.is_finite()) {
                    return Err(TrainError::NonFinite { epoch: epoch + 1, molecule: k });
                }
                let grads = tape.backward(terms.elbo.neg())?;
                let store = self.store_mut();
                store.accumulate(&p, &grads)?;
                opt.step(store)?;
                let decoder = self.decoder().clone();
                decoder.symmetrize(self.store_mut());
                elbo_sum += reported;
                kl_sum += terms.kl;
            }
            let n = dataset.len() as f64;
            trace.push(VgaeEpoch {
                epoch: epoch + 1,
                elbo: elbo_sum / n,
                kl: kl_sum / n,
            });
        }
        Ok(trace)
    }
}

pub fn train_gae(
    dataset: &[TieredInput],
    model: ModelConfig,
    config: &TrainConfig,
) -> Result<(TieredGae, Vec<GaeEpoch>), TrainError> {
    let mut gae = TieredGae::new(model, config.seed)?;
    let trace = gae.fit(dataset, config)?;
    Ok((gae, trace))
}

pub fn train_vgae(
    dataset: &[TieredInput],
    model: ModelConfig,
    config: &TrainConfig,
) -> Result<(TieredVgae, Vec<VgaeEpoch>), TrainError> {
    let mut vgae = TieredVgae::new(model, config.seed)?;
    let trace = vgae.fit(dataset, config)?;
    Ok((vgae, trace))
}

/// `epoch,loss` rows; floats use the shortest exact decimal form.
pub fn gae_trace_csv(trace: &[GaeEpoch]) -> String {
    let mut s = String::from("epoch,loss\n");
    for e in trace {
        writeln!(s, "{},{}", e.epoch, e.loss).unwrap();
    }
    s
}

pub fn vgae_trace_csv(trace: &[VgaeEpoch]) -> String {
    let mut s = String::from("epoch,elbo,kl\n");
    for e in trace {
        writeln!(s, "{},{},{}", e.epoch, e.elbo, e.kl).unwrap();
    }
    s
}
