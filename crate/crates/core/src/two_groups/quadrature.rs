//! Numerical integration over the Beta-distributed mixing proportion λ.
//!
//! The integrals over λ ∈ (0,1) are taken in `s = logit λ` rather than in λ
//! itself. In `s` the Beta density times the Jacobian is `σ(s)^a σ(−s)^b`,
//! which is smooth and decays exponentially in both directions, so the
//! midpoint rule converges quickly even when `a` or `b` is below 1 and the
//! λ-density is singular at an endpoint. Nodes are the midpoints of a
//! uniform grid in `u` with `s = sinh(u)`, which packs them densely near
//! `s = 0` (where large, balanced `a` and `b` concentrate the prior) and
//! sparsely in the tails. The grid covers `|s| ≤ L`; the mass beyond each
//! end is added as one atom with the closed-form tail weight `e^{−aL}/a`
//! (left) or `e^{−bL}/b` (right).
//!
//! Weights are normalized on the grid, so the Beta normalizing constant
//! cancels and every quadrature is a convex combination over the nodes.
//! Accuracy is best for `a, b ≲ 10^3`; very large, unbalanced shapes put
//! the whole prior between two nodes.

use crate::error::{Error, Result};
use crate::net::sigmoid;

/// Default number of interior cells.
pub const DEFAULT_GRID_SIZE: usize = 1000;

/// Half-width of the logit grid.
pub const LOGIT_HALF_WIDTH: f64 = 40.0;

/// Lower bound applied to `p(z)` before taking logs.
pub const LIKELIHOOD_FLOOR: f64 = 1e-300;

/// Nodes of the λ quadrature: index 0 and `len − 1` are the tail atoms.
#[derive(Debug, Clone)]
pub struct LambdaGrid {
    lambda: Vec<f64>,
    /// `1 − λ`, kept separately so it never rounds to zero near λ = 1.
    one_minus: Vec<f64>,
    log_lambda: Vec<f64>,
    log_one_minus: Vec<f64>,
    /// Log width in `s` of each interior cell.
    log_cell: Vec<f64>,
    half_width: f64,
}

/// Value and partial derivatives of `ln p(z)` with respect to `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikGrad {
    pub log_p: f64,
    pub d_a: f64,
    pub d_b: f64,
}

impl LambdaGrid {
    pub fn new(cells: usize) -> Result<Self> {
        if cells == 0 {
            return Err(Error::Domain("lambda grid needs at least one cell".into()));
        }
        let l = LOGIT_HALF_WIDTH;
        let u_max = l.asinh();
        let du = 2.0 * u_max / cells as f64;
        let u: Vec<f64> = (0..cells).map(|j| -u_max + (j as f64 + 0.5) * du).collect();
        let mut s: Vec<f64> = Vec::with_capacity(cells + 2);
        s.push(-l - 1.0);
        s.extend(u.iter().map(|u| u.sinh()));
        s.push(l + 1.0);
        let mut log_cell = Vec::with_capacity(cells + 2);
        log_cell.push(0.0);
        log_cell.extend(u.iter().map(|u| (u.cosh() * du).ln()));
        log_cell.push(0.0);
        let lambda = s.iter().map(|&v| sigmoid(v)).collect();
        let one_minus = s.iter().map(|&v| sigmoid(-v)).collect();
        let log_lambda = s.iter().map(|&v| log_sigmoid(v)).collect();
        let log_one_minus = s.iter().map(|&v| log_sigmoid(-v)).collect();
        Ok(LambdaGrid {
            lambda,
            one_minus,
            log_lambda,
            log_one_minus,
            log_cell,
            half_width: l,
        })
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &[f64] {
        &self.lambda
    }

    /// Unnormalized log-weight of every node for `Beta(a, b)`.
    fn log_weights(&self, a: f64, b: f64, out: &mut Vec<f64>) {
        let last = self.len() - 1;
        out.clear();
        out.extend(
            self.log_lambda
                .iter()
                .zip(&self.log_one_minus)
                .zip(&self.log_cell)
                .map(|((la, lb), lc)| a * la + b * lb + lc),
        );
        out[0] = -a * self.half_width - a.ln();
        out[last] = -b * self.half_width - b.ln();
    }

    /// Normalized weights of every node for `Beta(a, b)`, written into `out`.
    pub fn weights(&self, a: f64, b: f64, out: &mut Vec<f64>) -> Result<()> {
        check_ab(a, b)?;
        self.log_weights(a, b, out);
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for w in out.iter_mut() {
            *w = (*w - max).exp();
            total += *w;
        }
        out.iter_mut().for_each(|w| *w /= total);
        Ok(())
    }

    /// Grid mean of λ under `Beta(a, b)`.
    pub fn mean_lambda(&self, a: f64, b: f64) -> Result<f64> {
        let mut w = Vec::with_capacity(self.len());
        self.weights(a, b, &mut w)?;
        Ok(w.iter().zip(&self.lambda).map(|(w, l)| w * l).sum())
    }

    /// `∫ (λ f1 + (1 − λ) f0) Beta(λ; a, b) dλ`.
    pub fn marginal(&self, a: f64, b: f64, f0z: f64, f1z: f64) -> Result<f64> {
        let mut w = Vec::with_capacity(self.len());
        self.marginal_into(a, b, f0z, f1z, &mut w)
    }

    /// As [`marginal`](Self::marginal) with a caller-provided scratch buffer.
    pub fn marginal_into(&self, a: f64, b: f64, f0z: f64, f1z: f64, w: &mut Vec<f64>) -> Result<f64> {
        check_densities(f0z, f1z)?;
        self.weights(a, b, w)?;
        Ok(w
            .iter()
            .zip(self.lambda.iter().zip(&self.one_minus))
            .map(|(w, (l, m))| w * (l * f1z + m * f0z))
            .sum())
    }

    /// `∫ λ f1 Beta(λ; a, b) / (λ f1 + (1 − λ) f0) dλ`, clamped to [0, 1].
    pub fn posterior(&self, a: f64, b: f64, f0z: f64, f1z: f64) -> Result<f64> {
        let mut w = Vec::with_capacity(self.len());
        self.posterior_with(a, b, f0z, f1z, &mut w)
    }

    /// As [`posterior`](Self::posterior) with a caller-provided scratch buffer.
    pub fn posterior_with(&self, a: f64, b: f64, f0z: f64, f1z: f64, scratch: &mut Vec<f64>) -> Result<f64> {
        check_densities(f0z, f1z)?;
        if f0z == 0.0 && f1z == 0.0 {
            return Err(Error::Degenerate("f0(z) and f1(z) are both zero".into()));
        }
        self.weights(a, b, scratch)?;
        if f0z == 0.0 {
            return Ok(1.0);
        }
        if f1z == 0.0 {
            return Ok(0.0);
        }
        let post: f64 = scratch
            .iter()
            .zip(self.lambda.iter().zip(&self.one_minus))
            .map(|(w, (l, m))| {
                let alt = l * f1z;
                w * alt / (alt + m * f0z)
            })
            .sum();
        Ok(post.clamp(0.0, 1.0))
    }

    /// `ln max(p(z), floor)` and its exact derivatives through the grid.
    ///
    /// With normalized weights `w_j`, `p = f0 + (f1 − f0) μ` where `μ = Σ w_j λ_j`,
    /// and `∂μ/∂a = Σ w_j λ_j (∂ℓ_j/∂a − Σ_k w_k ∂ℓ_k/∂a)` for log-weights `ℓ_j`.
    pub fn log_marginal_grad(
        &self,
        a: f64,
        b: f64,
        f0z: f64,
        f1z: f64,
        scratch: &mut Vec<f64>,
    ) -> Result<LogLikGrad> {
        check_densities(f0z, f1z)?;
        self.weights(a, b, scratch)?;
        let last = self.len() - 1;
        let tail_a = -self.half_width - 1.0 / a;
        let tail_b = -self.half_width - 1.0 / b;
        let da = |j: usize| match j {
            0 => tail_a,
            j if j == last => 0.0,
            j => self.log_lambda[j],
        };
        let db = |j: usize| match j {
            0 => 0.0,
            j if j == last => tail_b,
            j => self.log_one_minus[j],
        };

        let mut mu = 0.0;
        let mut mean_da = 0.0;
        let mut mean_db = 0.0;
        for (j, w) in scratch.iter().enumerate() {
            mu += w * self.lambda[j];
            mean_da += w * da(j);
            mean_db += w * db(j);
        }
        let mut dmu_a = 0.0;
        let mut dmu_b = 0.0;
        for (j, w) in scratch.iter().enumerate() {
            let c = w * (self.lambda[j] - mu);
            dmu_a += c * (da(j) - mean_da);
            dmu_b += c * (db(j) - mean_db);
        }

        let mut mu_c = 0.0;
        for (j, w) in scratch.iter().enumerate() {
            mu_c += w * self.one_minus[j];
        }
        let p = mu * f1z + mu_c * f0z;
        if !(p > LIKELIHOOD_FLOOR) {
            return Ok(LogLikGrad {
                log_p: LIKELIHOOD_FLOOR.ln(),
                d_a: 0.0,
                d_b: 0.0,
            });
        }
        let slope = (f1z - f0z) / p;
        Ok(LogLikGrad {
            log_p: p.ln(),
            d_a: slope * dmu_a,
            d_b: slope * dmu_b,
        })
    }
}

fn check_ab(a: f64, b: f64) -> Result<()> {
    if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("Beta parameters must be positive, got a={a}, b={b}")))
    }
}

fn check_densities(f0z: f64, f1z: f64) -> Result<()> {
    if f0z >= 0.0 && f1z >= 0.0 && f0z.is_finite() && f1z.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "densities must be finite and nonnegative, got f0={f0z}, f1={f1z}"
        )))
    }
}

#[inline]
fn log_sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        -(-s).exp().ln_1p()
    } else {
        s - s.exp().ln_1p()
    }
}

/// Marginal likelihood `p(z)` of one test under `Beta(a, b)` on a grid of
/// `grid_size` cells.
pub fn marginal_likelihood(a: f64, b: f64, f0z: f64, f1z: f64, grid_size: usize) -> Result<f64> {
    LambdaGrid::new(grid_size)?.marginal(a, b, f0z, f1z)
}

/// Posterior probability that one test is an alternative.
pub fn posterior_alt(a: f64, b: f64, f0z: f64, f1z: f64, grid_size: usize) -> Result<f64> {
    LambdaGrid::new(grid_size)?.posterior(a, b, f0z, f1z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> LambdaGrid {
        LambdaGrid::new(DEFAULT_GRID_SIZE).unwrap()
    }

    #[test]
    fn uniform_prior_is_average() {
        let p = grid().marginal(1.0, 1.0, 0.4, 0.2).unwrap();
        assert!((p - 0.3).abs() < 1e-9, "{p}");
    }

    #[test]
    fn matches_closed_form_on_examples() {
        let g = grid();
        for &(a, b) in &[(0.5, 0.5), (0.5, 100.0), (100.0, 0.5), (2.0, 7.0), (100.0, 100.0)] {
            for &(f0, f1) in &[(1e-6, 1.0), (1.0, 1e-6), (0.3, 0.05)] {
                let exact = a / (a + b) * f1 + b / (a + b) * f0;
                let p = g.marginal(a, b, f0, f1).unwrap();
                assert!(((p - exact) / exact).abs() < 1e-3, "a={a} b={b}: {p} vs {exact}");
            }
        }
    }

    #[test]
    fn concentrated_prior_near_one() {
        let p = grid().marginal(1e4, 1.0, 0.3, 0.2).unwrap();
        assert!(((p - 0.2) / 0.2).abs() < 1e-3, "{p}");
    }

    #[test]
    fn tiny_shape_parameters_keep_their_mean() {
        let g = grid();
        let m = g.mean_lambda(1e-3, 1.0).unwrap();
        assert!((m - 1e-3 / 1.001).abs() < 1e-6, "{m}");
        let m = g.mean_lambda(1.0, 1e-3).unwrap();
        assert!((m - 1.0 / 1.001).abs() < 1e-6, "{m}");
    }

    #[test]
    fn posterior_special_cases() {
        let g = grid();
        for &(a, b) in &[(2.0, 2.0), (0.7, 3.0), (20.0, 1.5)] {
            let w = g.posterior(a, b, 0.25, 0.25).unwrap();
            assert!((w - a / (a + b)).abs() < 1e-6);
            assert_eq!(g.posterior(a, b, 0.0, 0.1).unwrap(), 1.0);
            assert_eq!(g.posterior(a, b, 0.1, 0.0).unwrap(), 0.0);
        }
        assert!(matches!(g.posterior(1.0, 1.0, 0.0, 0.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(marginal_likelihood(0.0, 1.0, 0.1, 0.1, 10), Err(Error::Domain(_))));
        assert!(matches!(marginal_likelihood(1.0, -1.0, 0.1, 0.1, 10), Err(Error::Domain(_))));
        assert!(matches!(posterior_alt(1.0, 1.0, -0.1, 0.1, 10), Err(Error::Domain(_))));
        assert!(LambdaGrid::new(0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = grid();
        let mut scratch = Vec::new();
        for &(a, b, f0, f1) in &[
            (0.7, 3.0, 0.3, 0.05),
            (5.0, 2.0, 0.01, 0.2),
            (0.002, 1.3, 0.2, 0.4),
            (40.0, 60.0, 0.4, 1e-4),
        ] {
            let r = g.log_marginal_grad(a, b, f0, f1, &mut scratch).unwrap();
            let lp = |a: f64, b: f64| g.marginal(a, b, f0, f1).unwrap().ln();
            assert!((r.log_p - lp(a, b)).abs() < 1e-13);
            let h = 1e-6 * a;
            let num_a = (lp(a + h, b) - lp(a - h, b)) / (2.0 * h);
            let h = 1e-6 * b;
            let num_b = (lp(a, b + h) - lp(a, b - h)) / (2.0 * h);
            assert!((r.d_a - num_a).abs() <= 1e-6 * num_a.abs().max(1e-6), "{r:?} {num_a}");
            assert!((r.d_b - num_b).abs() <= 1e-6 * num_b.abs().max(1e-6), "{r:?} {num_b}");
        }
    }
}
