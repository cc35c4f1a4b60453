//! Neural autoregressive collaborative filtering.
//!
//! Each user (or item, for the item-based variant) gets its own
//! autoregressive model over the ratings it has given; all of those models
//! share one set of weights. The crate covers the plain model, rating-shared
//! weights, low-rank factored weights, stacked hidden layers, the regular and
//! ordinal training costs, split-point training with Adam, and RMSE
//! evaluation.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`, which is what the CLI and the
//! gradient checks use.

pub mod data;
pub mod error;
pub mod eval;
pub mod loss;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use data::{Basis, IdMap, RatingDataset, RatingTable, RatingTriple, Split, SplitSpec};
pub use eval::EvalReport;
pub use loss::CostConfig;
pub use model::{ModelConfig, ParamGroup};
pub use numeric::SeededRng;
pub use trainer::{TrainConfig, TrainStep};

/// Row-major dense matrix of `f64`.
pub type Matrix = numeric::DenseMatrix<f64>;
/// Model parameters in `f64`.
pub type Params = model::ParameterSet<f64>;
/// Gradients in `f64`, one array per parameter array.
pub type Gradients = model::GradientSet<f64>;
/// Adam moment accumulators in `f64`.
pub type Adam = trainer::AdamState<f64>;
/// Result of a training run in `f64`.
pub type Outcome = trainer::TrainOutcome<f64>;

/// Model parameters in `f32`.
pub type ParamsF32 = model::ParameterSet<f32>;
