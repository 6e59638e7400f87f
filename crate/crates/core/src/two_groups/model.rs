use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjust::{adjust, fit_bivariate_ols, AdjustMode, BetaParams, RegressionFit};
use crate::data::{standardize_covariates, HypothesisTable, Scaling};
use crate::densities::{estimate_alternative, AlternativeEstimate, GridDensity, NullSpec, PrConfig, DENSITY_FLOOR};
use crate::error::{Error, Result};
use crate::net::{forward_batch, init_network, Network, NetworkConfig, NetworkParams};

use super::objective::NllObjective;
use super::quadrature::{LambdaGrid, DEFAULT_GRID_SIZE};

/// Format tag of the saved model container.
pub const MODEL_FORMAT: &str = "fdrkit-model/1";

/// Which covariates feed the prior network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Test-level covariates only.
    #[value(name = "a", alias = "neurt_a")]
    NeurtA,
    /// Test-level and auxiliary covariates stacked.
    #[value(name = "b", alias = "neurt_b")]
    NeurtB,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::NeurtA => "neurt_a",
            Variant::NeurtB => "neurt_b",
        }
    }
}

/// Optimizer and quadrature settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Coefficient of the squared-weight penalty.
    pub weight_decay: f64,
    pub momentum: f64,
    pub val_fraction: f64,
    pub patience: usize,
    pub lambda_grid_size: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            lr: 1e-3,
            epochs: 100,
            batch_size: 128,
            weight_decay: 1e-4,
            momentum: 0.9,
            val_fraction: 0.2,
            patience: 10,
            lambda_grid_size: DEFAULT_GRID_SIZE,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Validation(format!("training config: {what}")));
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return bad("lr must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return bad("epochs, batch_size and patience must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0,1)");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("val_fraction must lie in (0,1)");
        }
        if self.lambda_grid_size == 0 {
            return bad("lambda_grid_size must be positive");
        }
        Ok(())
    }
}

/// Everything that determines a fit besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub training: TrainingConfig,
    pub hidden_sizes: Vec<usize>,
    pub output_floor: f64,
    pub pr: PrConfig,
    pub null: NullSpec,
    /// Standardize covariates before they reach the network.
    pub standardize: bool,
    /// Apply the auxiliary-covariate regression after training.
    pub stage2: bool,
    pub adjust_mode: AdjustMode,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            training: TrainingConfig::default(),
            hidden_sizes: vec![200, 200],
            output_floor: 1e-3,
            pr: PrConfig::default(),
            null: NullSpec::default(),
            standardize: true,
            stage2: true,
            adjust_mode: AdjustMode::Mean,
        }
    }
}

/// Seeds of every random stream, all derived from the training seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub alternative: u64,
    pub split: u64,
    pub init: u64,
    pub shuffle: u64,
    pub adjust: u64,
}

impl Seeds {
    pub fn derive(master: u64) -> Self {
        let mut state = master;
        let mut next = || splitmix64(&mut state);
        Seeds {
            master,
            alternative: next(),
            split: next(),
            init: next(),
            shuffle: next(),
            adjust: next(),
        }
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean data NLL over the training rows (epoch 0: before any update;
    /// later epochs: running mean over the epoch's mini-batches).
    pub train_nll: f64,
    pub val_nll: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_nll: f64,
    pub stopped_early: bool,
    pub n_train: usize,
    pub n_val: usize,
}

impl TrainingLog {
    pub fn initial(&self) -> &EpochLog {
        &self.epochs[0]
    }

    pub fn last(&self) -> &EpochLog {
        self.epochs.last().expect("log always holds the initial entry")
    }
}

/// A trained model: everything needed to score new tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub format: String,
    pub variant: Variant,
    pub config: FitConfig,
    pub seeds: Seeds,
    pub k: usize,
    pub q: usize,
    pub scaling: Scaling,
    pub null: NullSpec,
    pub f1: GridDensity,
    pub pi1: f64,
    pub regression: Option<RegressionFit>,
    pub training: TrainingLog,
    pub network: Network,
}

/// Network inputs for a (scaled) table.
fn features(table: &HypothesisTable, variant: Variant) -> Array2<f64> {
    match variant {
        Variant::NeurtA => table.x().to_owned(),
        Variant::NeurtB => table.stacked_covariates(),
    }
}

fn identity_scaling(table: &HypothesisTable) -> Scaling {
    Scaling {
        x_mean: vec![0.0; table.k()],
        x_scale: vec![1.0; table.k()],
        xa_mean: vec![0.0; table.q()],
        xa_scale: vec![1.0; table.q()],
    }
}

/// Fits the model end to end.
pub fn train(table: &HypothesisTable, cfg: &FitConfig, variant: Variant) -> Result<FittedModel> {
    let seeds = Seeds::derive(cfg.training.seed);
    let alt = estimate_alternative(table.z(), &cfg.null, &cfg.pr, seeds.alternative)?;
    train_with_alternative(table, cfg, variant, alt)
}

/// As [`train`], with the alternative density already estimated (it depends
/// only on z, so several variants fitted to one table can share it).
pub fn train_with_alternative(
    table: &HypothesisTable,
    cfg: &FitConfig,
    variant: Variant,
    alt: AlternativeEstimate,
) -> Result<FittedModel> {
    cfg.training.validate()?;
    cfg.null.validate()?;
    let tc = &cfg.training;
    let seeds = Seeds::derive(tc.seed);
    let n = table.n();
    if n < 2 {
        return Err(Error::InsufficientData("training needs at least 2 rows".into()));
    }

    let (scaled, scaling) = if cfg.standardize {
        standardize_covariates(table)?
    } else {
        (table.clone(), identity_scaling(table))
    };
    let x = features(&scaled, variant);
    let f0z: Vec<f64> = table.z().iter().map(|&z| cfg.null.pdf(z).max(DENSITY_FLOOR)).collect();
    let f1z: Vec<f64> = table.z().iter().map(|&z| alt.f1.eval(z)).collect();
    let grid = LambdaGrid::new(tc.lambda_grid_size)?;
    let objective = NllObjective {
        features: &x,
        f0z: &f0z,
        f1z: &f1z,
        ids: table.ids(),
        grid: &grid,
        weight_decay: tc.weight_decay,
    };

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seeds.split));
    let n_val = ((tc.val_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let val_idx = perm[..n_val].to_vec();
    let mut train_idx = perm[n_val..].to_vec();

    let mut net_cfg = NetworkConfig::new(x.ncols(), cfg.hidden_sizes.clone());
    net_cfg.output_floor = cfg.output_floor;
    net_cfg.init_seed = seeds.init;
    let params = init_network(&net_cfg, seeds.init)?;
    let mut net = Network::new(net_cfg, params)?;

    let initial_train = objective.loss(&net, &train_idx)?.nll;
    let initial_val = objective.loss(&net, &val_idx)?.nll;
    let mut log = vec![EpochLog {
        epoch: 0,
        train_nll: initial_train,
        val_nll: initial_val,
    }];
    let mut best = (0usize, initial_val, net.params.clone());
    let mut velocity = net.params.zeros_like();
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.shuffle);
    let mut stopped_early = false;

    for epoch in 1..=tc.epochs {
        train_idx.shuffle(&mut rng);
        let mut nll_sum = 0.0;
        for (batch_no, batch) in train_idx.chunks(tc.batch_size).enumerate() {
            let diverged = |message: String| Error::Training {
                epoch,
                batch: batch_no,
                message,
            };
            let (parts, grads) = objective
                .loss_and_grad(&net, batch)
                .map_err(|e| diverged(e.to_string()))?;
            if !parts.total().is_finite() {
                return Err(diverged(format!("loss is {}", parts.total())));
            }
            nll_sum += parts.nll * batch.len() as f64;
            sgd_momentum_step(&mut net.params, &mut velocity, &grads, tc.lr, tc.momentum);
            if !net.params.is_finite() {
                return Err(diverged("parameters became non-finite".into()));
            }
        }
        let val_nll = objective
            .loss(&net, &val_idx)
            .map_err(|e| Error::Training {
                epoch,
                batch: 0,
                message: e.to_string(),
            })?
            .nll;
        let train_nll = nll_sum / train_idx.len() as f64;
        log::debug!("epoch {epoch}: train nll {train_nll:.5}, validation nll {val_nll:.5}");
        log.push(EpochLog {
            epoch,
            train_nll,
            val_nll,
        });
        if val_nll < best.1 {
            best = (epoch, val_nll, net.params.clone());
        } else if epoch - best.0 >= tc.patience {
            stopped_early = epoch < tc.epochs;
            break;
        }
    }
    let (best_epoch, best_val_nll, best_params) = best;
    net.params = best_params;

    let pass = forward_batch(&net.params, &net.config, x.view())?;
    let a_raw = pass.a().to_vec();
    let b_raw = pass.b().to_vec();
    let regression = if cfg.stage2 && table.q() > 0 {
        Some(fit_bivariate_ols(scaled.xa(), &a_raw, &b_raw)?)
    } else {
        None
    };

    Ok(FittedModel {
        format: MODEL_FORMAT.to_owned(),
        variant,
        config: cfg.clone(),
        seeds,
        k: table.k(),
        q: table.q(),
        scaling,
        null: cfg.null,
        f1: alt.f1,
        pi1: alt.pi1,
        regression,
        training: TrainingLog {
            epochs: log,
            best_epoch,
            best_val_nll,
            stopped_early,
            n_train: train_idx.len(),
            n_val,
        },
        network: net,
    })
}

/// `v ← μ v + g`, `θ ← θ − lr v`.
fn sgd_momentum_step(params: &mut NetworkParams, velocity: &mut NetworkParams, grads: &NetworkParams, lr: f64, momentum: f64) {
    for ((p, v), g) in params.layers.iter_mut().zip(&mut velocity.layers).zip(&grads.layers) {
        ndarray::Zip::from(&mut p.weights)
            .and(&mut v.weights)
            .and(&g.weights)
            .for_each(|p, v, &g| {
                *v = momentum * *v + g;
                *p -= lr * *v;
            });
        ndarray::Zip::from(&mut p.bias)
            .and(&mut v.bias)
            .and(&g.bias)
            .for_each(|p, v, &g| {
                *v = momentum * *v + g;
                *p -= lr * *v;
            });
    }
}

impl FittedModel {
    fn check_table(&self, table: &HypothesisTable) -> Result<()> {
        if table.k() != self.k || table.q() != self.q {
            return Err(Error::Shape(format!(
                "model was fitted with k={}, q={} but table has k={}, q={}",
                self.k,
                self.q,
                table.k(),
                table.q()
            )));
        }
        Ok(())
    }

    /// Prior parameters of every row: network output, then the regression
    /// adjustment when one was fitted.
    pub fn beta_params(&self, table: &HypothesisTable) -> Result<BetaParams> {
        self.check_table(table)?;
        let scaled = self.scaling.apply(table)?;
        let x = features(&scaled, self.variant);
        let pass = forward_batch(&self.network.params, &self.network.config, x.view())?;
        let a_raw = pass.a().to_vec();
        let b_raw = pass.b().to_vec();
        match &self.regression {
            Some(fit) => adjust(fit, scaled.xa(), &a_raw, &b_raw, self.config.adjust_mode, self.seeds.adjust),
            None => Ok(BetaParams::unadjusted(a_raw, b_raw)),
        }
    }

    /// Posterior probability of the alternative for every row.
    pub fn posteriors(&self, table: &HypothesisTable) -> Result<Vec<f64>> {
        let params = self.beta_params(table)?;
        let grid = LambdaGrid::new(self.config.training.lambda_grid_size)?;
        let mut scratch = Vec::with_capacity(grid.len());
        table
            .z()
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                let f0z = self.null.pdf(z).max(DENSITY_FLOOR);
                let f1z = self.f1.eval(z);
                grid.posterior_with(params.a[i], params.b[i], f0z, f1z, &mut scratch)
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Tag {
            format: String,
        }
        let tag: Tag = serde_json::from_str(s)?;
        if tag.format != MODEL_FORMAT {
            return Err(Error::Format {
                found: tag.format,
                expected: MODEL_FORMAT.to_owned(),
            });
        }
        let model: FittedModel = serde_json::from_str(s)?;
        let expected_dim = match model.variant {
            Variant::NeurtA => model.k,
            Variant::NeurtB => model.k + model.q,
        };
        if model.network.config.input_dim != expected_dim {
            return Err(Error::Validation(format!(
                "{} model with k={}, q={} has network input_dim {}",
                model.variant.name(),
                model.k,
                model.q,
                model.network.config.input_dim
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Free-function form of [`FittedModel::posteriors`].
pub fn posteriors(model: &FittedModel, table: &HypothesisTable) -> Result<Vec<f64>> {
    model.posteriors(table)
}
