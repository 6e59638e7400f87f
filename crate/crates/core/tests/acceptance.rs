//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

use std::fs;
use std::process::{Command, ExitCode};
use std::time::Instant;

use fdrkit::adjust::fit_bivariate_ols;
use fdrkit::baselines::{bh, storey_bh, storey_pi0};
use fdrkit::benchmark::{run_benchmark, BenchmarkConfig, BenchmarkOutcome, Method};
use fdrkit::net::{grad_check, init_network, Network, NetworkConfig};
use fdrkit::two_groups::{marginal_likelihood, posterior_alt, select_discoveries, LambdaGrid, NllObjective};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn quadrature_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let a = rng.random_range(0.5..=100.0);
        let b = rng.random_range(0.5..=100.0);
        let f0 = rng.random_range(1e-6..=1.0);
        let f1 = rng.random_range(1e-6..=1.0);
        let exact = a / (a + b) * f1 + b / (a + b) * f0;
        let got = marginal_likelihood(a, b, f0, f1, 1000).unwrap();
        worst = worst.max(((got - exact) / exact).abs());
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-3 && secs < 10.0,
        format!("worst relative error {worst:.2e} over 10000 draws in {secs:.2}s"),
    )
}

fn posterior_oracle() -> Outcome {
    let expected = -16.0 + 24.0 * std::f64::consts::LN_2;
    let w = posterior_alt(2.0, 2.0, 0.2, 0.4, 1000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let a = 10f64.powf(rng.random_range(-2.0..=3.0));
        let b = 10f64.powf(rng.random_range(-2.0..=3.0));
        let f = rng.random_range(1e-6..=1.0);
        worst = worst.max((posterior_alt(a, b, f, f, 1000).unwrap() - a / (a + b)).abs());
    }
    outcome(
        (w - expected).abs() <= 1e-4 && worst <= 1e-6,
        format!(
            "w(2,2,f1=2f0) = {w:.6} vs {expected:.6}; equal-density worst |w - a/(a+b)| {worst:.1e} for a,b in [0.01,1000]"
        ),
    )
}

fn gradient_check() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let grid = LambdaGrid::new(1000).unwrap();
    let mut worst: f64 = 0.0;
    let configs = 25;
    for c in 0..configs {
        let input_dim = rng.random_range(1..=4);
        let depth = rng.random_range(1..=2);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=6)).collect();
        let rows = rng.random_range(2..=8);
        let x = Array2::from_shape_fn((rows, input_dim), |_| rng.random_range(-2.0..2.0));
        let f0z: Vec<f64> = (0..rows).map(|_| rng.random_range(1e-3..0.5)).collect();
        let f1z: Vec<f64> = (0..rows).map(|_| rng.random_range(1e-3..0.5)).collect();
        let ids: Vec<String> = (0..rows).map(|i| i.to_string()).collect();
        let obj = NllObjective {
            features: &x,
            f0z: &f0z,
            f1z: &f1z,
            ids: &ids,
            grid: &grid,
            weight_decay: rng.random_range(0.0..0.1),
        };
        let cfg = NetworkConfig::new(input_dim, hidden);
        let mut base = Network::new(cfg.clone(), init_network(&cfg, c).unwrap()).unwrap();
        // Zero-initialized biases can leave a pre-activation exactly on the
        // relu kink, so every parameter is moved to a generic point.
        let theta: Vec<f64> = base.params.to_flat().iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
        base.params.set_flat(&theta).unwrap();
        let batch: Vec<usize> = (0..rows).collect();
        let err = grad_check(
            &base.params.to_flat(),
            |theta| {
                let mut net = base.clone();
                net.params.set_flat(theta)?;
                let (parts, grads) = obj.loss_and_grad(&net, &batch)?;
                Ok((parts.total(), grads.to_flat()))
            },
            1e-5,
            c,
        )
        .unwrap();
        worst = worst.max(err);
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-4 && secs < 60.0,
        format!("worst relative error {worst:.2e} over {configs} configurations in {secs:.2}s"),
    )
}

fn brute_force_bh(p: &[f64], alpha: f64) -> Vec<usize> {
    let n = p.len();
    for k in (1..=n).rev() {
        let cut = k as f64 * alpha / n as f64;
        let set: Vec<usize> = (0..n).filter(|&i| p[i] <= cut).collect();
        if set.len() >= k {
            return set;
        }
    }
    Vec::new()
}

fn baseline_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    let mut storey_mismatches = 0;
    let mut storey_cases = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=50);
        let signal = rng.random_range(0.0..1.0);
        let p: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random_bool(signal) {
                    rng.random_range(0.0..0.01)
                } else {
                    rng.random_range(0.0..1.0)
                }
            })
            .collect();
        let alpha = rng.random_range(0.01..0.3);
        if bh(&p, alpha).unwrap().rejected != brute_force_bh(&p, alpha) {
            mismatches += 1;
        }
        // A copy shifted above lambda0 = 0.5 forces the Storey estimate to 1.
        let high: Vec<f64> = p.iter().map(|v| 0.5 + v / 2.0 + 1e-9).collect();
        if storey_pi0(&high, 0.5).unwrap() == 1.0 {
            storey_cases += 1;
            if storey_bh(&high, alpha, 0.5).unwrap().rejected != bh(&high, alpha).unwrap().rejected {
                storey_mismatches += 1;
            }
        }
    }
    outcome(
        mismatches == 0 && storey_mismatches == 0 && storey_cases == 1000,
        format!(
            "bh mismatches {mismatches}/1000; storey-vs-bh mismatches {storey_mismatches}/{storey_cases} with pi0 = 1"
        ),
    )
}

fn brute_force_select(w: &[f64], alpha: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&i, &j| w[j].partial_cmp(&w[i]).unwrap().then(i.cmp(&j)));
    let mut best = 0;
    for m in 1..=w.len() {
        let mass: f64 = order[..m].iter().map(|&i| 1.0 - w[i]).sum();
        if mass / m as f64 <= alpha {
            best = m;
        }
    }
    let mut set = order[..best].to_vec();
    set.sort_unstable();
    set
}

fn selection_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    let mut non_monotone = 0;
    for _ in 0..1000 {
        let n = rng.random_range(0..=100);
        let w: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..3) {
                0 => rng.random_range(0.0..=1.0),
                1 => rng.random_range(0.85..=1.0),
                _ => 0.9,
            })
            .collect();
        let alpha = rng.random_range(0.01..0.3);
        let ds = select_discoveries(&w, alpha).unwrap();
        if ds.rejected != brute_force_select(&w, alpha) {
            mismatches += 1;
        }
        let mut last = 0;
        for k in 1..20 {
            let m = select_discoveries(&w, k as f64 * 0.025).unwrap().len();
            if m < last {
                non_monotone += 1;
            }
            last = m;
        }
    }
    outcome(
        mismatches == 0 && non_monotone == 0,
        format!("set mismatches {mismatches}/1000; monotonicity violations {non_monotone}"),
    )
}

fn ols_recovery() -> Outcome {
    let n = 50;
    let x: Vec<f64> = (0..n).map(|i| -2.0 + 4.0 * i as f64 / (n - 1) as f64).collect();
    let xa = Array2::from_shape_vec((n, 1), x.clone()).unwrap();
    let a: Vec<f64> = x.iter().map(|v| (1.0 + 2.0 * v).exp()).collect();
    let b: Vec<f64> = x.iter().map(|v| (-1.0 + 0.5 * v).exp()).collect();
    let fit = fit_bivariate_ols(xa.view(), &a, &b).unwrap();
    let coef_err = [
        fit.mu_a - 1.0,
        fit.delta_a[0] - 2.0,
        fit.mu_b + 1.0,
        fit.delta_b[0] - 0.5,
    ]
    .iter()
    .fold(0.0f64, |m, e| m.max(e.abs()));
    let sigma = fit
        .sigma()
        .iter()
        .flatten()
        .fold(0.0f64, |m, s| m.max(s.abs()));
    outcome(
        coef_err <= 1e-8 && sigma <= 1e-10,
        format!("max coefficient error {coef_err:.1e}; max |Sigma| {sigma:.1e}"),
    )
}

fn threads() -> Option<usize> {
    std::env::var("FDRKIT_THREADS").ok().and_then(|s| s.parse().ok()).filter(|&t| t > 0)
}

fn scenario_runs(name: &str, methods: Vec<Method>) -> (BenchmarkOutcome, f64) {
    let cfg = BenchmarkConfig::new(name, methods, (0..20).collect()).unwrap();
    let t0 = Instant::now();
    let out = run_benchmark(&cfg, threads(), "acceptance").unwrap();
    (out, t0.elapsed().as_secs_f64())
}

fn mean_of(out: &BenchmarkOutcome, m: Method, f: impl Fn(&fdrkit::benchmark::MethodSummary) -> f64) -> f64 {
    f(out.summary(m).expect("method was run"))
}

fn fdr_control(out: &BenchmarkOutcome, secs: f64) -> Outcome {
    let a = mean_of(out, Method::NeurtA, |s| s.fdp.mean);
    let b = mean_of(out, Method::NeurtB, |s| s.fdp.mean);
    outcome(
        a <= 0.12 && b <= 0.12 && secs <= 600.0,
        format!("mean FDP neurt_a {a:.4}, neurt_b {b:.4} over 20 seeds; {secs:.0}s"),
    )
}

fn power_ordering(out: &BenchmarkOutcome) -> Outcome {
    let pb = mean_of(out, Method::NeurtB, |s| s.power.mean);
    let pbh = mean_of(out, Method::Bh, |s| s.power.mean);
    let db = mean_of(out, Method::NeurtB, |s| s.discoveries.mean);
    let da = mean_of(out, Method::NeurtA, |s| s.discoveries.mean);
    outcome(
        pb >= pbh + 0.05 && db >= da,
        format!("mean power neurt_b {pb:.4} vs bh {pbh:.4}; mean discoveries neurt_b {db:.1} vs neurt_a {da:.1}"),
    )
}

fn no_spurious_gain() -> Outcome {
    let (out, secs) = scenario_runs("N", Method::ALL.to_vec());
    let fdps: Vec<String> = out
        .summaries
        .iter()
        .map(|s| format!("{} {:.4}", s.method, s.fdp.mean))
        .collect();
    outcome(
        out.summaries.iter().all(|s| s.fdp.mean <= 0.12),
        format!("mean FDP {} over 20 seeds; {secs:.0}s", fdps.join(", ")),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_fdrkit"))
            .args(args)
            .env("RUST_LOG", "warn")
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    run(&["simulate", "--scenario", "A", "--seed", "7", "--out", &path("a.csv")]);
    for tag in ["1", "2"] {
        run(&["fit", "--in", &path("a.csv"), "--variant", "b", "--seed", "7", "--out", &path(&format!("m{tag}.json"))]);
        run(&[
            "discover", "--model", &path(&format!("m{tag}.json")), "--in", &path("a.csv"), "--alpha", "0.1",
            "--out", &path(&format!("d{tag}.csv")),
        ]);
    }
    let same = |a: &str, b: &str| fs::read(path(a)).unwrap() == fs::read(path(b)).unwrap();
    let models = same("m1.json", "m2.json");
    let discoveries = same("d1.csv", "d2.csv");
    outcome(
        models && discoveries,
        format!("model files identical: {models}; discovery CSVs identical: {discoveries}"),
    )
}

fn main() -> ExitCode {
    let mut all_pass = true;
    let mut report = |id: u32, name: &str, o: Outcome| {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{id:>2}] {name}: {}", o.detail);
        all_pass &= o.pass;
    };
    report(1, "quadrature oracle", quadrature_oracle());
    report(2, "posterior oracle", posterior_oracle());
    report(3, "gradient check", gradient_check());
    report(4, "baseline oracle", baseline_oracle());
    report(5, "selection oracle", selection_oracle());
    report(6, "OLS recovery", ols_recovery());
    let (a_runs, secs) = scenario_runs("A", vec![Method::Bh, Method::NeurtA, Method::NeurtB]);
    eprint!("{}", a_runs.format_table());
    report(7, "FDR control, scenario A", fdr_control(&a_runs, secs));
    report(8, "power ordering, scenario A", power_ordering(&a_runs));
    report(9, "no spurious gain, scenario N", no_spurious_gain());
    report(10, "determinism", determinism());
    if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
