//! Second-stage adjustment of the network's Beta pseudo-parameters.
//!
//! `(ln a', ln b')` is regressed on the auxiliary covariates by least
//! squares with a shared design `[1, Xa]`. The residual covariance gives a
//! bivariate normal around each fitted mean, from which the final `(a, b)`
//! are produced either as the conditional mean or as one seeded draw.

use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adjusted Beta parameters are clipped into this range.
pub const PARAM_MIN: f64 = 1e-3;
pub const PARAM_MAX: f64 = 1e6;

/// Ridge added to the Gram diagonal when the design is rank deficient.
const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub mu_a: f64,
    pub mu_b: f64,
    pub delta_a: Vec<f64>,
    pub delta_b: Vec<f64>,
    pub sigma_aa: f64,
    pub sigma_ab: f64,
    pub sigma_bb: f64,
    /// Whether the ridge-stabilized solve was needed.
    pub ridged: bool,
}

impl RegressionFit {
    pub fn q(&self) -> usize {
        self.delta_a.len()
    }

    /// Fitted `(ln a, ln b)` for one auxiliary row.
    pub fn fitted_log_mean(&self, row: &[f64]) -> (f64, f64) {
        let la = self.mu_a + row.iter().zip(&self.delta_a).map(|(x, d)| x * d).sum::<f64>();
        let lb = self.mu_b + row.iter().zip(&self.delta_b).map(|(x, d)| x * d).sum::<f64>();
        (la, lb)
    }

    pub fn sigma(&self) -> [[f64; 2]; 2] {
        [
            [self.sigma_aa, self.sigma_ab],
            [self.sigma_ab, self.sigma_bb],
        ]
    }
}

/// Final and pre-adjustment Beta parameters, one entry per test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub a_raw: Vec<f64>,
    pub b_raw: Vec<f64>,
}

impl BetaParams {
    /// Parameters used without adjustment.
    pub fn unadjusted(a_raw: Vec<f64>, b_raw: Vec<f64>) -> Self {
        BetaParams {
            a: a_raw.clone(),
            b: b_raw.clone(),
            a_raw,
            b_raw,
        }
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AdjustMode {
    /// Exponentiated conditional mean.
    #[default]
    Mean,
    /// Exponentiated draw from the fitted bivariate normal.
    Sample,
}

/// Least-squares fit of `ln a_raw` and `ln b_raw` on `[1, Xa]`.
pub fn fit_bivariate_ols(
    xa: ArrayView2<'_, f64>,
    a_raw: &[f64],
    b_raw: &[f64],
) -> Result<RegressionFit> {
    let (n, q) = xa.dim();
    if a_raw.len() != n || b_raw.len() != n {
        return Err(Error::Shape(format!(
            "{n} auxiliary rows but {} / {} responses",
            a_raw.len(),
            b_raw.len()
        )));
    }
    if n < q + 2 {
        return Err(Error::InsufficientData(format!(
            "regression on q={q} auxiliary covariates needs at least {} rows, got {n}",
            q + 2
        )));
    }
    if let Some(v) = a_raw.iter().chain(b_raw).find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!("pseudo-parameters must be positive, got {v}")));
    }

    let p = q + 1;
    let design = Array2::from_shape_fn((n, p), |(i, j)| if j == 0 { 1.0 } else { xa[[i, j - 1]] });
    let ya: Array1<f64> = a_raw.iter().map(|v| v.ln()).collect();
    let yb: Array1<f64> = b_raw.iter().map(|v| v.ln()).collect();
    let gram = design.t().dot(&design);
    let rhs_a = design.t().dot(&ya);
    let rhs_b = design.t().dot(&yb);

    let (factor, ridged) = match cholesky(&gram) {
        Some(l) => (l, false),
        None => {
            let mut g = gram.clone();
            for j in 0..p {
                g[[j, j]] += RIDGE;
            }
            let l = cholesky(&g).ok_or_else(|| {
                Error::Numeric("ridge-stabilized Gram matrix is not positive definite".into())
            })?;
            (l, true)
        }
    };
    let beta_a = cholesky_solve(&factor, &rhs_a);
    let beta_b = cholesky_solve(&factor, &rhs_b);

    let ra = design.dot(&beta_a) - &ya;
    let rb = design.dot(&beta_b) - &yb;
    let (ma, mb) = (ra.sum() / n as f64, rb.sum() / n as f64);
    let denom = (n - 1) as f64;
    let cov = |u: &Array1<f64>, mu: f64, v: &Array1<f64>, mv: f64| {
        u.iter().zip(v).map(|(x, y)| (x - mu) * (y - mv)).sum::<f64>() / denom
    };

    Ok(RegressionFit {
        mu_a: beta_a[0],
        mu_b: beta_b[0],
        delta_a: beta_a.iter().skip(1).copied().collect(),
        delta_b: beta_b.iter().skip(1).copied().collect(),
        sigma_aa: cov(&ra, ma, &ra, ma),
        sigma_ab: cov(&ra, ma, &rb, mb),
        sigma_bb: cov(&rb, mb, &rb, mb),
        ridged,
    })
}

/// Lower Cholesky factor, or `None` when a pivot is not safely positive.
fn cholesky(m: &Array2<f64>) -> Option<Array2<f64>> {
    let p = m.nrows();
    let scale = (0..p).map(|j| m[[j, j]].abs()).fold(0.0, f64::max);
    let tol = scale * 1e-12;
    let mut l = Array2::zeros((p, p));
    for j in 0..p {
        let mut d = m[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > tol) {
            return None;
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in j + 1..p {
            let mut s = m[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / d;
        }
    }
    Some(l)
}

fn cholesky_solve(l: &Array2<f64>, rhs: &Array1<f64>) -> Array1<f64> {
    let p = l.nrows();
    let mut y = rhs.clone();
    for i in 0..p {
        for k in 0..i {
            y[i] -= l[[i, k]] * y[k];
        }
        y[i] /= l[[i, i]];
    }
    for i in (0..p).rev() {
        for k in i + 1..p {
            y[i] -= l[[k, i]] * y[k];
        }
        y[i] /= l[[i, i]];
    }
    y
}

/// Produces adjusted `(a, b)` for every auxiliary row. `a_raw`/`b_raw` are
/// carried through unchanged.
pub fn adjust(
    fit: &RegressionFit,
    xa: ArrayView2<'_, f64>,
    a_raw: &[f64],
    b_raw: &[f64],
    mode: AdjustMode,
    seed: u64,
) -> Result<BetaParams> {
    let (n, q) = xa.dim();
    if q != fit.q() {
        return Err(Error::Shape(format!(
            "auxiliary rows have {q} columns, fit expects {}",
            fit.q()
        )));
    }
    if a_raw.len() != n || b_raw.len() != n {
        return Err(Error::Shape(format!(
            "{n} auxiliary rows but {} / {} pseudo-parameters",
            a_raw.len(),
            b_raw.len()
        )));
    }

    // Semidefinite-safe 2×2 Cholesky of Sigma.
    let l11 = fit.sigma_aa.max(0.0).sqrt();
    let l21 = if l11 > 0.0 { fit.sigma_ab / l11 } else { 0.0 };
    let l22 = (fit.sigma_bb - l21 * l21).max(0.0).sqrt();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut row = vec![0.0; q];
    for i in 0..n {
        row.iter_mut().zip(xa.row(i)).for_each(|(d, s)| *d = *s);
        let (mut la, mut lb) = fit.fitted_log_mean(&row);
        if mode == AdjustMode::Sample {
            let e1: f64 = StandardNormal.sample(&mut rng);
            let e2: f64 = StandardNormal.sample(&mut rng);
            la += l11 * e1;
            lb += l21 * e1 + l22 * e2;
        }
        a.push(clip(la.exp()));
        b.push(clip(lb.exp()));
    }
    Ok(BetaParams {
        a,
        b,
        a_raw: a_raw.to_vec(),
        b_raw: b_raw.to_vec(),
    })
}

fn clip(v: f64) -> f64 {
    if v.is_nan() {
        PARAM_MIN
    } else {
        v.clamp(PARAM_MIN, PARAM_MAX)
    }
}
