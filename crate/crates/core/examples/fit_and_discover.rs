//! Simulates scenario A, fits both network variants and compares their
//! discoveries with Benjamini-Hochberg.
use std::time::Instant;

use fdrkit::baselines::{bh, z_to_pvalue, Sidedness};
use fdrkit::densities::estimate_alternative;
use fdrkit::discovery::fdp_power;
use fdrkit::synthetic::{generate, ScenarioConfig};
use fdrkit::two_groups::{select_discoveries, train_with_alternative, FitConfig, Seeds, Variant};

fn main() -> fdrkit::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let table = generate(&ScenarioConfig::scenario_a(seed))?;
    let truth = table.truth().expect("generator emits truth");
    let alpha = 0.1;

    let pvals: Vec<f64> = table.z().iter().map(|&z| z_to_pvalue(z, Sidedness::TwoSided)).collect();
    let m = fdp_power(&bh(&pvals, alpha)?, truth)?;
    println!("bh      m={:5} fdp={:.3} power={:.3}", m.discoveries, m.fdp, m.power);

    let mut cfg = FitConfig::default();
    cfg.training.seed = seed;
    let t0 = Instant::now();
    let alt = estimate_alternative(table.z(), &cfg.null, &cfg.pr, Seeds::derive(seed).alternative)?;
    println!("f1 mode {:.2}, pi1 {:.3} ({:.1}s)", alt.f1.argmax(), alt.pi1, t0.elapsed().as_secs_f64());

    for variant in [Variant::NeurtA, Variant::NeurtB] {
        let t0 = Instant::now();
        let model = train_with_alternative(&table, &cfg, variant, alt.clone())?;
        let w = model.posteriors(&table)?;
        let m = fdp_power(&select_discoveries(&w, alpha)?, truth)?;
        println!(
            "{} m={:5} fdp={:.3} power={:.3} best_epoch={} ({:.1}s)",
            variant.name(),
            m.discoveries,
            m.fdp,
            m.power,
            model.training.best_epoch,
            t0.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
