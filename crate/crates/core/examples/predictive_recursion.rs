//! Estimates the alternative density from z-values alone and writes it as
//! plot-ready CSV.
use fdrkit::densities::{estimate_alternative, NullSpec, PrConfig};
use fdrkit::synthetic::{generate, ScenarioConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let table = generate(&ScenarioConfig::scenario_a(3))?;
    let truth = table.truth().unwrap();
    let frac = truth.iter().filter(|&&h| h == 1).count() as f64 / truth.len() as f64;
    let est = estimate_alternative(table.z(), &NullSpec::default(), &PrConfig::default(), 3)?;
    println!("pi1 estimate {:.3} (true fraction {frac:.3})", est.pi1);
    println!("f1 mode {:.2} (generator mean 2.5)", est.f1.argmax());
    for z in [-2.0, 0.0, 1.0, 2.5, 4.0] {
        println!("  f1({z:>4}) = {:.4}", est.f1.eval(z));
    }
    est.f1.write_csv(std::fs::File::create("f1.csv")?)?;
    println!("wrote f1.csv");
    Ok(())
}
