//! The auxiliary-covariate regression on planted coefficients, and both
//! adjustment modes.
use fdrkit::adjust::{adjust, fit_bivariate_ols, AdjustMode};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> fdrkit::Result<()> {
    let n = 200;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let xa = Array2::from_shape_fn((n, 2), |(i, j)| ((i * (j + 3)) as f64 * 0.1).cos());
    let a: Vec<f64> = (0..n)
        .map(|i| (0.5 + 1.5 * xa[[i, 0]] - 0.3 * xa[[i, 1]] + noise.sample(&mut rng)).exp())
        .collect();
    let b: Vec<f64> = (0..n)
        .map(|i| (1.0 - 0.7 * xa[[i, 0]] + noise.sample(&mut rng)).exp())
        .collect();

    let fit = fit_bivariate_ols(xa.view(), &a, &b)?;
    println!("ln a: intercept {:.3}, slopes {:.3?} (planted 0.5, [1.5, -0.3])", fit.mu_a, fit.delta_a);
    println!("ln b: intercept {:.3}, slopes {:.3?} (planted 1.0, [-0.7, 0])", fit.mu_b, fit.delta_b);
    println!("residual covariance {:.4?} (noise variance 0.01)", fit.sigma());

    let mean = adjust(&fit, xa.view(), &a, &b, AdjustMode::Mean, 0)?;
    let sample = adjust(&fit, xa.view(), &a, &b, AdjustMode::Sample, 9)?;
    for i in 0..3 {
        println!(
            "row {i}: raw ({:.3}, {:.3}) mean ({:.3}, {:.3}) sample ({:.3}, {:.3})",
            a[i], b[i], mean.a[i], mean.b[i], sample.a[i], sample.b[i]
        );
    }
    Ok(())
}
