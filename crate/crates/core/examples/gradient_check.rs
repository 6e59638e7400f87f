//! Finite-difference check of the full training-loss gradient.
use fdrkit::net::{grad_check, init_network, Network, NetworkConfig};
use fdrkit::two_groups::{LambdaGrid, NllObjective};
use ndarray::Array2;

fn main() -> fdrkit::Result<()> {
    let x = Array2::from_shape_vec((4, 3), (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    let ids: Vec<String> = (0..4).map(|i| format!("t{i}")).collect();
    let grid = LambdaGrid::new(1000)?;
    let obj = NllObjective {
        features: &x,
        f0z: &[0.39, 0.3, 0.05, 0.01],
        f1z: &[0.05, 0.1, 0.3, 0.35],
        ids: &ids,
        grid: &grid,
        weight_decay: 1e-3,
    };
    let cfg = NetworkConfig::new(3, vec![6, 5]);
    let net = Network::new(cfg.clone(), init_network(&cfg, 42)?)?;
    println!("{} parameters", net.params.num_params());
    for h in [1e-4, 1e-5, 1e-6, 1e-7] {
        let err = grad_check(
            &net.params.to_flat(),
            |theta| {
                let mut n = net.clone();
                n.params.set_flat(theta)?;
                let (parts, g) = obj.loss_and_grad(&n, &[0, 1, 2, 3])?;
                Ok((parts.total(), g.to_flat()))
            },
            h,
            0,
        )?;
        println!("h={h:.0e}: max relative error {err:.2e}");
    }
    Ok(())
}
