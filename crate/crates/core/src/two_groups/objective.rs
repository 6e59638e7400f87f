use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::net::{backward_from, forward_batch, Network, NetworkParams};

use super::quadrature::{LambdaGrid, LIKELIHOOD_FLOOR};

/// Per-row inputs of the training objective.
///
/// `features` are the network inputs; `f0z`/`f1z` are the null and
/// alternative densities evaluated at each row's z.
pub struct NllObjective<'a> {
    pub features: &'a Array2<f64>,
    pub f0z: &'a [f64],
    pub f1z: &'a [f64],
    pub ids: &'a [String],
    pub grid: &'a LambdaGrid,
    pub weight_decay: f64,
}

/// Objective value split into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    /// Mean negative log marginal likelihood over the batch.
    pub nll: f64,
    /// `weight_decay × Σ W²`.
    pub penalty: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.nll + self.penalty
    }
}

impl NllObjective<'_> {
    fn check_batch(&self, batch: &[usize]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::InsufficientData("empty batch".into()));
        }
        let n = self.f0z.len();
        if self.f1z.len() != n || self.features.nrows() != n || self.ids.len() != n {
            return Err(Error::Shape("objective inputs disagree in length".into()));
        }
        if let Some(&i) = batch.iter().find(|&&i| i >= n) {
            return Err(Error::Shape(format!("batch index {i} out of range for {n} rows")));
        }
        Ok(())
    }

    fn finite(&self, value: f64, row: usize) -> Result<f64> {
        if value.is_finite() {
            Ok(value)
        } else {
            Err(Error::Numeric(format!(
                "non-finite log-likelihood for test {}",
                self.ids[row]
            )))
        }
    }

    /// Loss without gradient.
    pub fn loss(&self, net: &Network, batch: &[usize]) -> Result<LossParts> {
        self.check_batch(batch)?;
        let x = self.features.select(Axis(0), batch);
        let pass = forward_batch(&net.params, &net.config, x.view())?;
        let mut scratch = Vec::with_capacity(self.grid.len());
        let mut total = 0.0;
        for (r, &i) in batch.iter().enumerate() {
            let (a, b) = (pass.outputs[[r, 0]], pass.outputs[[r, 1]]);
            let p = self
                .grid
                .marginal_into(a, b, self.f0z[i], self.f1z[i], &mut scratch)?;
            total -= self.finite(p.max(LIKELIHOOD_FLOOR).ln(), i)?;
        }
        Ok(LossParts {
            nll: total / batch.len() as f64,
            penalty: self.weight_decay * net.params.weight_norm_sq(),
        })
    }

    /// Loss and its gradient with respect to every network parameter.
    pub fn loss_and_grad(&self, net: &Network, batch: &[usize]) -> Result<(LossParts, NetworkParams)> {
        self.check_batch(batch)?;
        let x = self.features.select(Axis(0), batch);
        let pass = forward_batch(&net.params, &net.config, x.view())?;
        let mut scratch = Vec::with_capacity(self.grid.len());
        let mut grad_a = Vec::with_capacity(batch.len());
        let mut grad_b = Vec::with_capacity(batch.len());
        let mut total = 0.0;
        for (r, &i) in batch.iter().enumerate() {
            let (a, b) = (pass.outputs[[r, 0]], pass.outputs[[r, 1]]);
            let g = self
                .grid
                .log_marginal_grad(a, b, self.f0z[i], self.f1z[i], &mut scratch)?;
            total -= self.finite(g.log_p, i)?;
            grad_a.push(-self.finite(g.d_a, i)?);
            grad_b.push(-self.finite(g.d_b, i)?);
        }
        let mut grads = backward_from(&net.params, &pass, &grad_a, &grad_b)?;
        if self.weight_decay != 0.0 {
            for (g, p) in grads.layers.iter_mut().zip(&net.params.layers) {
                g.weights.scaled_add(2.0 * self.weight_decay, &p.weights);
            }
        }
        let parts = LossParts {
            nll: total / batch.len() as f64,
            penalty: self.weight_decay * net.params.weight_norm_sq(),
        };
        Ok((parts, grads))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{init_network, NetworkConfig};

    fn net(input_dim: usize) -> Network {
        let cfg = NetworkConfig::new(input_dim, vec![4]);
        let params = init_network(&cfg, 1).unwrap();
        Network::new(cfg, params).unwrap()
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("t{i}")).collect()
    }

    #[test]
    fn equal_densities_fix_the_likelihood() {
        let grid = LambdaGrid::new(200).unwrap();
        let x = Array2::from_shape_vec((2, 1), vec![0.3, -1.0]).unwrap();
        let ids = ids(2);
        let one = [1.0, 1.0];
        let obj = NllObjective {
            features: &x,
            f0z: &one,
            f1z: &one,
            ids: &ids,
            grid: &grid,
            weight_decay: 0.0,
        };
        assert!(obj.loss(&net(1), &[0]).unwrap().nll.abs() < 1e-12);

        let dens = [(-1.0f64).exp(), (-3.0f64).exp()];
        let obj = NllObjective {
            f0z: &dens,
            f1z: &dens,
            ..obj
        };
        let parts = obj.loss(&net(1), &[0, 1]).unwrap();
        assert!((parts.nll - 2.0).abs() < 1e-12);
        assert_eq!(parts.penalty, 0.0);
    }

    #[test]
    fn penalty_uses_weights_only() {
        let grid = LambdaGrid::new(50).unwrap();
        let x = Array2::zeros((1, 2));
        let ids = ids(1);
        let obj = NllObjective {
            features: &x,
            f0z: &[0.3],
            f1z: &[0.1],
            ids: &ids,
            grid: &grid,
            weight_decay: 0.1,
        };
        let mut n = net(2);
        n.params = n.params.zeros_like();
        for layer in &mut n.params.layers {
            layer.bias.fill(0.7);
        }
        assert_eq!(obj.loss(&n, &[0]).unwrap().penalty, 0.0);
        let (parts, grads) = obj.loss_and_grad(&n, &[0]).unwrap();
        assert_eq!(parts.penalty, 0.0);
        assert!(grads.is_finite());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let grid = LambdaGrid::new(300).unwrap();
        let x = Array2::from_shape_vec((3, 2), vec![0.5, -0.2, 1.5, 0.3, -0.7, 0.9]).unwrap();
        let ids = ids(3);
        let obj = NllObjective {
            features: &x,
            f0z: &[0.39, 0.05, 0.2],
            f1z: &[0.02, 0.3, 0.21],
            ids: &ids,
            grid: &grid,
            weight_decay: 0.01,
        };
        let base = net(2);
        let theta = base.params.to_flat();
        let err = crate::net::grad_check(
            &theta,
            |t| {
                let mut n = base.clone();
                n.params.set_flat(t)?;
                let (parts, g) = obj.loss_and_grad(&n, &[0, 1, 2])?;
                Ok((parts.total(), g.to_flat()))
            },
            1e-6,
            0,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn batch_errors() {
        let grid = LambdaGrid::new(50).unwrap();
        let x = Array2::zeros((1, 1));
        let ids = ids(1);
        let obj = NllObjective {
            features: &x,
            f0z: &[0.3],
            f1z: &[0.1],
            ids: &ids,
            grid: &grid,
            weight_decay: 0.0,
        };
        assert!(matches!(obj.loss(&net(1), &[]), Err(Error::InsufficientData(_))));
        assert!(matches!(obj.loss(&net(1), &[3]), Err(Error::Shape(_))));
    }
}
