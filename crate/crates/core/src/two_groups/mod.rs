//! Two-groups model with a covariate-dependent Beta prior on the
//! alternative probability.
pub mod model;
pub mod objective;
pub mod quadrature;
pub mod select;

pub use model::{
    posteriors, train, train_with_alternative, EpochLog, FitConfig, FittedModel, Seeds, TrainingConfig,
    TrainingLog, Variant, MODEL_FORMAT,
};
pub use objective::{LossParts, NllObjective};
pub use quadrature::{marginal_likelihood, posterior_alt, LambdaGrid, LogLikGrad, DEFAULT_GRID_SIZE};
pub use select::select_discoveries;
