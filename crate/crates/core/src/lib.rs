//! Covariate-adaptive false discovery rate control.
//!
//! A two-groups model whose per-test Beta prior on the alternative
//! probability comes from a feed-forward network on test-level covariates,
//! adjusted by a regression on auxiliary covariates. Benjamini-Hochberg and
//! Storey baselines and a seeded synthetic benchmark are included.
pub mod adjust;
pub mod baselines;
pub mod benchmark;
pub mod cli;
pub mod data;
pub mod densities;
pub mod discovery;
pub mod error;
pub mod net;
pub mod synthetic;
pub mod two_groups;

pub use data::{load_table, HypothesisTable, Schema};
pub use discovery::{fdp_power, DiscoverySet, Metrics};
pub use error::{Error, Result};
pub use two_groups::{train, FitConfig, FittedModel, Variant};
