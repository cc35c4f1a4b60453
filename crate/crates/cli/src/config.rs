use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cfnade::{CostConfig, ModelConfig, TrainConfig};

use crate::error::{CliError, CliResult};

/// Everything a training run needs, as one flat JSON document.
///
/// `num_items` and `rating_scale` are not listed: they come from the
/// prepared data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Directory written by `prepare`.
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub hidden_units: usize,
    pub layers: usize,
    pub factor_rank: Option<usize>,
    pub share_ratings: bool,
    pub learning_rate: f64,
    /// Applied to the input weights, the input factor and the first hidden bias.
    pub first_layer_lr_multiplier: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Weight of the ordinal cost.
    pub lambda: f64,
    pub deterministic: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            data_dir: None,
            out_dir: None,
            hidden_units: 500,
            layers: 1,
            factor_rank: None,
            share_ratings: true,
            learning_rate: t.learning_rate,
            first_layer_lr_multiplier: t.first_layer_lr_multiplier,
            weight_decay: t.weight_decay,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            seed: t.seed,
            lambda: t.cost.lambda,
            deterministic: t.deterministic,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::File {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn model(&self, num_items: usize, rating_scale: usize) -> ModelConfig {
        ModelConfig {
            num_items,
            rating_scale,
            hidden_units: self.hidden_units,
            layers: self.layers,
            factor_rank: self.factor_rank,
            share_ratings: self.share_ratings,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            first_layer_lr_multiplier: self.first_layer_lr_multiplier,
            weight_decay: self.weight_decay,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            cost: CostConfig { lambda: self.lambda },
            deterministic: self.deterministic,
        }
    }

    pub fn data_dir(&self) -> CliResult<&Path> {
        self.data_dir
            .as_deref()
            .ok_or_else(|| CliError::Config("data_dir: not set (use --data or the config file)".into()))
    }

    pub fn out_dir(&self) -> CliResult<&Path> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| CliError::Config("out_dir: not set (use --out or the config file)".into()))
    }
}
