//! Truth-bearing hypothesis tables for benchmarking.
//!
//! Scores driving the prior:
//! * `s(X) = Σ_{j<m} X_j / √m` with `m = min(k, 3)`;
//! * `t(Xa) = Σ_{j<r} Xa_j / √r` with `r = min(q, 2)`, and 0 when `q = 0`.
//!
//! The first `r` auxiliary columns are `ρ·s(X) + √(1−ρ²)·ε`; any further
//! auxiliary columns are pure noise.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::HypothesisTable;
use crate::error::{Error, Result};
use crate::net::sigmoid;

/// Preset names accepted by [`ScenarioConfig::preset`].
pub const PRESETS: [&str; 2] = ["A", "N"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub n: usize,
    pub k: usize,
    pub q: usize,
    pub covariate_signal: f64,
    pub aux_signal: f64,
    pub base_pi1: f64,
    pub alt_mean: f64,
    pub alt_sd: f64,
    /// Correlation between each informative auxiliary column and `s(X)`.
    pub aux_correlation: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n: 5000,
            k: 10,
            q: 2,
            covariate_signal: 1.0,
            aux_signal: 1.0,
            base_pi1: 0.1,
            alt_mean: 2.5,
            alt_sd: 1.0,
            aux_correlation: 0.8,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Scenario A (informative covariates).
    pub fn scenario_a(seed: u64) -> Self {
        ScenarioConfig {
            seed,
            ..Self::default()
        }
    }

    /// Scenario N: same shape as A, covariates carry no signal.
    pub fn scenario_n(seed: u64) -> Self {
        ScenarioConfig {
            covariate_signal: 0.0,
            aux_signal: 0.0,
            seed,
            ..Self::default()
        }
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self> {
        match name {
            "A" | "a" => Ok(Self::scenario_a(seed)),
            "N" | "n" => Ok(Self::scenario_n(seed)),
            other => Err(Error::Usage(format!(
                "unknown scenario {other:?}; presets are {}",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Validation(format!("scenario: {what}")));
        if self.n == 0 || self.k == 0 {
            return bad("n and k must be at least 1");
        }
        if !(self.base_pi1 > 0.0 && self.base_pi1 < 1.0) {
            return bad("base_pi1 must lie in (0,1)");
        }
        if !(self.alt_sd > 0.0) || !self.alt_sd.is_finite() || !self.alt_mean.is_finite() {
            return bad("alt_sd must be positive and alt_mean finite");
        }
        if !(self.covariate_signal >= 0.0 && self.aux_signal >= 0.0) {
            return bad("signal strengths must be nonnegative");
        }
        if !(self.covariate_signal.is_finite() && self.aux_signal.is_finite()) {
            return bad("signal strengths must be finite");
        }
        if !(0.0..=1.0).contains(&self.aux_correlation) {
            return bad("aux_correlation must lie in [0,1]");
        }
        Ok(())
    }
}

/// A generated table plus the per-row prior probabilities that produced it.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub table: HypothesisTable,
    pub lambda: Vec<f64>,
}

/// Draws a table; see the module docs for the score functions.
pub fn generate(cfg: &ScenarioConfig) -> Result<HypothesisTable> {
    generate_with_prior(cfg).map(|s| s.table)
}

pub fn generate_with_prior(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let ScenarioConfig { n, k, q, .. } = *cfg;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let alt = Normal::new(cfg.alt_mean, cfg.alt_sd).map_err(|e| Error::Validation(e.to_string()))?;
    let m = k.min(3);
    let r = q.min(2);
    let rho = cfg.aux_correlation;
    let noise = (1.0 - rho * rho).sqrt();
    let offset = (cfg.base_pi1 / (1.0 - cfg.base_pi1)).ln();

    let mut x = Array2::zeros((n, k));
    let mut xa = Array2::zeros((n, q));
    let mut z = Vec::with_capacity(n);
    let mut truth = Vec::with_capacity(n);
    let mut lambda = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..k {
            x[[i, j]] = StandardNormal.sample(&mut rng);
        }
        let s = (0..m).map(|j| x[[i, j]]).sum::<f64>() / (m as f64).sqrt();
        for j in 0..q {
            let eps: f64 = StandardNormal.sample(&mut rng);
            xa[[i, j]] = if j < r { rho * s + noise * eps } else { eps };
        }
        let t = if r == 0 {
            0.0
        } else {
            (0..r).map(|j| xa[[i, j]]).sum::<f64>() / (r as f64).sqrt()
        };
        let lam = sigmoid(offset + cfg.covariate_signal * s + cfg.aux_signal * t);
        let h = Bernoulli::new(lam)
            .map_err(|e| Error::Numeric(e.to_string()))?
            .sample(&mut rng);
        z.push(if h {
            alt.sample(&mut rng)
        } else {
            StandardNormal.sample(&mut rng)
        });
        truth.push(u8::from(h));
        lambda.push(lam);
    }
    let ids = (0..n).map(|i| i.to_string()).collect();
    let table = HypothesisTable::new(ids, z, x, xa, Some(truth))?;
    Ok(Scenario { table, lambda })
}
