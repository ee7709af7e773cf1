use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::folds::class_weights;
use crate::error::{Error, Result};
use crate::gnn::{GraphInput, Model};
use crate::numkit::{AdamConfig, AdamState, ParamSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub use_class_weights: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 16,
            learning_rate: 8e-5,
            use_class_weights: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: ParamSet,
    /// Sample-weighted mean batch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub class_weights: [f64; 2],
    pub steps: u64,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        *self.epoch_losses.last().expect("at least one epoch")
    }
}

/// Initialises parameters from `seed` and runs `epochs` passes of shuffled
/// mini-batch Adam, one step per batch.
pub fn train_fold(model: &Model, train: &[&GraphInput], cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Input("empty training set".into()));
    }
    let labels: Vec<usize> = train.iter().map(|g| g.label).collect();
    let weights = if cfg.use_class_weights { class_weights(&labels)? } else { [1.0, 1.0] };
    let mut params = model.init_params(seed);
    let mut adam = AdamState::new(&params, AdamConfig::with_lr(cfg.learning_rate));
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&GraphInput> = chunk.iter().map(|&i| train[i]).collect();
            let (loss, grads) = model.loss_and_grads(&params, &batch, &weights)?;
            if !loss.is_finite() {
                let ids: Vec<&str> = batch.iter().map(|g| g.article_id.as_str()).collect();
                return Err(Error::Numerical(format!(
                    "loss {loss} at epoch {epoch}, batch {b} (articles {ids:?})"
                )));
            }
            adam.step(&mut params, &grads)?;
            total += loss * batch.len() as f64;
        }
        log::debug!("epoch {epoch}: loss {:.6}", total / train.len() as f64);
        epoch_losses.push(total / train.len() as f64);
    }
    Ok(TrainOutcome {
        params,
        epoch_losses,
        class_weights: weights,
        steps: adam.step_count(),
    })
}
