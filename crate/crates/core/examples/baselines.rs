//! Benjamini-Hochberg and Storey-BH on a handful of p-values and on a
//! simulated table.
use fdrkit::baselines::{bh, storey_bh, storey_pi0, z_to_pvalue, Sidedness};
use fdrkit::fdp_power;
use fdrkit::synthetic::{generate, ScenarioConfig};

fn main() -> fdrkit::Result<()> {
    let p = [0.001, 0.008, 0.039, 0.041, 0.042, 0.06, 0.074, 0.205, 0.212, 0.216];
    println!("bh(0.05) rejects {:?}", bh(&p, 0.05)?.rejected);

    let table = generate(&ScenarioConfig::scenario_a(1))?;
    let truth = table.truth().unwrap();
    for sided in [Sidedness::TwoSided, Sidedness::Right] {
        let pvals: Vec<f64> = table.z().iter().map(|&z| z_to_pvalue(z, sided)).collect();
        let pi0 = storey_pi0(&pvals, 0.5)?;
        let b = fdp_power(&bh(&pvals, 0.1)?, truth)?;
        let s = fdp_power(&storey_bh(&pvals, 0.1, 0.5)?, truth)?;
        println!(
            "{sided:?}: pi0 {pi0:.3}; bh {} (fdp {:.3}), sbh {} (fdp {:.3})",
            b.discoveries, b.fdp, s.discoveries, s.fdp
        );
    }
    Ok(())
}
