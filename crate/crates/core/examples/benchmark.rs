//! A small benchmark over a few seeds, printed as a discoveries table.
//!
//! `cargo run --example benchmark -- [A|N] [seeds]`
use fdrkit::benchmark::{run_benchmark, BenchmarkConfig, Method};

fn main() -> fdrkit::Result<()> {
    let mut args = std::env::args().skip(1);
    let scenario = args.next().unwrap_or_else(|| "A".into());
    let seeds = args.next().and_then(|s| s.parse().ok()).unwrap_or(3u64);
    let cfg = BenchmarkConfig::new(&scenario, Method::ALL.to_vec(), (0..seeds).collect())?;
    let out = run_benchmark(&cfg, None, "example")?;
    print!("{}", out.format_table());
    for s in &out.summaries {
        println!("{}: discoveries sd {:.1}, {:.1}s per run", s.method, s.discoveries.sd, s.wall_seconds.mean);
    }
    Ok(())
}
