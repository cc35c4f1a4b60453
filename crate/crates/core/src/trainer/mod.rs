//! Split-point training: per-entity ordering and split sampling, exact
//! backpropagation, Adam with weight decay, mini-batches and early stopping.

mod adam;
mod backprop;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::RatingDataset;
use crate::error::{Error, Result};
use crate::eval::evaluate_model_with;
use crate::loss::CostConfig;
use crate::model::{ModelConfig, ParameterSet};
use crate::numeric::SeededRng;
use crate::Scalar;

pub use adam::{adam_update, AdamState, AdamStep, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use backprop::{
    accumulate_step, backprop_step, sample_training_step, step_cost, GradientSink, SparseGradient, TrainStep,
};

/// Entities per parallel work unit; bounds the memory held in sparse gradients.
const PAR_UNIT: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplies the learning rate of first-layer arrays (input weights,
    /// `B` and the first hidden bias `c`).
    pub first_layer_lr_multiplier: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub cost: CostConfig,
    /// Single worker everywhere.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            first_layer_lr_multiplier: 1.0,
            weight_decay: 0.015,
            batch_size: 512,
            max_epochs: 100,
            patience: 10,
            seed: 1,
            cost: CostConfig::ordinal(),
            deterministic: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(
                "learning_rate",
                format!("{} must be finite and non-negative", self.learning_rate),
            ));
        }
        if !(self.first_layer_lr_multiplier > 0.0 && self.first_layer_lr_multiplier.is_finite()) {
            return Err(Error::config("first_layer_lr_multiplier", "must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay", "must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::config("patience", "must be at least 1"));
        }
        self.cost.validate()
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean split-scaled cost per training entity.
    pub train_cost: f64,
    /// NaN when there is no validation split.
    pub valid_rmse: f64,
    pub seconds: f64,
}

impl EpochRecord {
    /// `epoch \t train cost \t validation rmse \t seconds`.
    pub fn tsv_line(&self) -> String {
        format!(
            "{}\t{:.10}\t{:.10}\t{:.3}",
            self.epoch, self.train_cost, self.valid_rmse, self.seconds
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStop,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    /// Parameters from the epoch with the best validation RMSE.
    pub best: ParameterSet<T>,
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
    pub stop: StopReason,
}

/// Trains a freshly initialized model.
pub fn train<T: Scalar>(
    train_set: &RatingDataset,
    valid_set: &RatingDataset,
    model: &ModelConfig,
    config: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    let mut init_rng = SeededRng::substream(config.seed, 0);
    let params = ParameterSet::init(*model, &mut init_rng)?;
    train_from(params, train_set, valid_set, config, on_epoch)
}

/// Trains starting from `params`.
///
/// Each epoch visits the non-empty entities in shuffled order, in batches of
/// `batch_size`; every entity contributes one sampled (ordering, split) case
/// and the batch gradient is the mean over the batch.
pub fn train_from<T: Scalar>(
    mut params: ParameterSet<T>,
    train_set: &RatingDataset,
    valid_set: &RatingDataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    train_set.check_compatible(valid_set)?;
    let model = *params.config();
    if model.num_items != train_set.num_targets || model.rating_scale != train_set.scale {
        return Err(Error::Shape {
            what: "model vs dataset".into(),
            expected: format!("M={} K={} (dataset)", train_set.num_targets, train_set.scale),
            found: format!("M={} K={} (model)", model.num_items, model.rating_scale),
        });
    }
    let entities: Vec<usize> = (0..train_set.num_entities())
        .filter(|&e| !train_set.entries[e].is_empty())
        .collect();
    if entities.is_empty() {
        return Err(Error::Empty("training split has no ratings".into()));
    }

    let mut rng = SeededRng::substream(config.seed, 1);
    let mut adam = AdamState::new(&params);
    let mut grads = params.zeros_like();
    let limit = model.rating_scale as f64;

    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut best_metric = f64::INFINITY;
    let mut since_best = 0;
    let mut over_limit = 0;
    let mut log = Vec::new();
    let mut stop = StopReason::MaxEpochs;

    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        let mut order = entities.clone();
        rng.shuffle(&mut order);
        let mut cost_sum = 0.0f64;

        for batch in order.chunks(config.batch_size) {
            let steps: Vec<TrainStep> = batch
                .iter()
                .map(|&e| sample_training_step(&mut rng, &train_set.entries[e]))
                .collect();
            let weight = T::one() / T::of_usize(steps.len());
            grads.fill(T::zero());
            if config.deterministic {
                for step in &steps {
                    cost_sum += accumulate_step(&params, step, &config.cost, weight, &mut grads)?.as_f64();
                }
            } else {
                for unit in steps.chunks(PAR_UNIT) {
                    let results: Vec<Result<(T, SparseGradient<T>)>> = unit
                        .par_iter()
                        .map(|step| {
                            let mut sparse = SparseGradient::new();
                            accumulate_step(&params, step, &config.cost, weight, &mut sparse).map(|c| (c, sparse))
                        })
                        .collect();
                    for r in results {
                        let (c, sparse) = r?;
                        cost_sum += c.as_f64();
                        sparse.apply(&mut grads);
                    }
                }
            }
            adam_update(&mut params, &grads, &mut adam, config);
        }

        if !params.is_finite() {
            return Err(Error::NonFinite(format!("parameters after epoch {epoch}")));
        }
        let train_cost = cost_sum / entities.len() as f64;
        let valid_rmse = if valid_set.is_empty() {
            f64::NAN
        } else {
            evaluate_model_with(&params, train_set, valid_set, !config.deterministic)?.rmse
        };
        let record = EpochRecord {
            epoch,
            train_cost,
            valid_rmse,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::info!("{}", record.tsv_line());
        on_epoch(&record);
        log.push(record);

        if !train_cost.is_finite() {
            return Err(Error::NonFinite(format!("training cost at epoch {epoch}")));
        }
        if valid_rmse > limit {
            over_limit += 1;
            if over_limit >= 3 {
                return Err(Error::Divergence {
                    epoch,
                    rmse: valid_rmse,
                    limit,
                });
            }
        } else {
            over_limit = 0;
        }

        let metric = if valid_rmse.is_nan() { train_cost } else { valid_rmse };
        if metric < best_metric {
            best_metric = metric;
            best = params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                stop = StopReason::EarlyStop;
                break;
            }
        }
    }

    Ok(TrainOutcome {
        best,
        best_epoch,
        log,
        stop,
    })
}
