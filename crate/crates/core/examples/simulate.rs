//! Draws a scenario table and writes it as CSV.
//!
//! `cargo run --example simulate -- [A|N] [seed] [out.csv]`
use fdrkit::data::write_table;
use fdrkit::synthetic::{generate_with_prior, ScenarioConfig};

fn main() -> fdrkit::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "A".into());
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let out = args.next().unwrap_or_else(|| format!("scenario_{name}_{seed}.csv"));

    let scenario = generate_with_prior(&ScenarioConfig::preset(&name, seed)?)?;
    let t = &scenario.table;
    let alts = t.truth().unwrap().iter().filter(|&&h| h == 1).count();
    let mean_prior = scenario.lambda.iter().sum::<f64>() / t.n() as f64;
    println!("n={} k={} q={}: {alts} alternatives, mean prior {mean_prior:.3}", t.n(), t.k(), t.q());
    write_table(t, &out)?;
    println!("wrote {out}");
    Ok(())
}
