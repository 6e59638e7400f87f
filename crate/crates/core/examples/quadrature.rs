//! The λ quadrature against closed forms: marginal likelihood and posterior.
use fdrkit::two_groups::{marginal_likelihood, posterior_alt, LambdaGrid};

fn main() -> fdrkit::Result<()> {
    let (f0, f1) = (0.4, 0.2);
    for (a, b) in [(1.0, 1.0), (0.5, 0.5), (2.0, 7.0), (100.0, 0.5), (1e4, 1.0), (1e-3, 1.0)] {
        let exact = a / (a + b) * f1 + b / (a + b) * f0;
        let got = marginal_likelihood(a, b, f0, f1, 1000)?;
        println!("a={a:<7} b={b:<5} p(z)={got:.10} closed form {exact:.10}");
    }
    let w = posterior_alt(2.0, 2.0, 0.2, 0.4, 1000)?;
    println!("posterior a=b=2, f1=2f0: {w:.8} (exact {:.8})", -16.0 + 24.0 * 2f64.ln());

    let grid = LambdaGrid::new(1000)?;
    for cells in [50, 200, 1000] {
        let g = LambdaGrid::new(cells)?;
        let err = (g.mean_lambda(300.0, 500.0)? - 300.0 / 800.0).abs();
        println!("{cells:>5} cells: |E[lambda] error| for Beta(300, 500) = {err:.2e}");
    }
    println!("{} nodes in the default grid", grid.len());
    Ok(())
}
