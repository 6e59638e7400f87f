use fdrkit::densities::{estimate_alternative, normal_cdf, null_pdf, NullSpec, PrConfig};
use fdrkit::synthetic::{generate, generate_with_prior, ScenarioConfig};
use fdrkit::two_groups::{posterior_alt, select_discoveries, train, FitConfig, Variant};
use fdrkit::{fdp_power, Error};

#[test]
fn scenario_a_end_to_end_single_seed() {
    let table = generate(&ScenarioConfig::scenario_a(7)).unwrap();
    let mut cfg = FitConfig::default();
    cfg.training.seed = 7;
    let model = train(&table, &cfg, Variant::NeurtB).unwrap();
    let ds = select_discoveries(&model.posteriors(&table).unwrap(), 0.1).unwrap();
    let m = fdp_power(&ds, table.truth().unwrap()).unwrap();
    assert!(m.discoveries > 0);
    assert!(m.fdp <= 0.2, "fdp {}", m.fdp);
}

#[test]
fn posterior_favours_alternative_in_its_mode() {
    let z = 2.5;
    let f0 = null_pdf(z, 0.0, 1.0).unwrap();
    let f1 = null_pdf(z, 2.5, 1.0).unwrap();
    assert!(posterior_alt(8.0, 2.0, f0, f1, 1000).unwrap() > 0.5);
    let f = null_pdf(1.25, 0.0, 1.0).unwrap();
    assert!((posterior_alt(3.0, 3.0, f, f, 1000).unwrap() - 0.5).abs() < 1e-6);
}

#[test]
fn alternative_estimate_finds_the_signal() {
    let table = generate(&ScenarioConfig::scenario_a(2)).unwrap();
    let est = estimate_alternative(table.z(), &NullSpec::default(), &PrConfig::default(), 11).unwrap();
    assert!((est.f1.argmax() - 2.5).abs() < 0.6, "mode {}", est.f1.argmax());
    let truth = table.truth().unwrap();
    let frac = truth.iter().map(|&h| h as f64).sum::<f64>() / truth.len() as f64;
    assert!((est.pi1 - frac).abs() < 0.15, "pi1 {} vs {frac}", est.pi1);
    assert!((est.f1.integral() - 1.0).abs() < 1e-6);
}

#[test]
fn out_of_grid_statistics_are_rejected() {
    let mut z = vec![0.1; 20];
    z.push(25.0);
    let err = estimate_alternative(&z, &NullSpec::default(), &PrConfig::default(), 0).unwrap_err();
    assert!(matches!(err, Error::Domain(_)), "{err}");
}

fn ks_statistic(mut x: Vec<f64>) -> f64 {
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = normal_cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn null_statistics_are_standard_normal() {
    let mut rejections = 0;
    for seed in 0..10 {
        let t = generate(&ScenarioConfig::scenario_a(seed)).unwrap();
        let nulls: Vec<f64> = t
            .z()
            .iter()
            .zip(t.truth().unwrap())
            .filter(|(_, &h)| h == 0)
            .map(|(&z, _)| z)
            .collect();
        let critical = 1.628 / (nulls.len() as f64).sqrt();
        if ks_statistic(nulls) > critical {
            rejections += 1;
        }
    }
    // Level 0.01 over 10 seeds: two or more rejections has probability < 0.5%.
    assert!(rejections <= 1, "{rejections} KS rejections");
}

#[test]
fn truth_fraction_concentrates_on_prior_mean() {
    for seed in 0..10 {
        for cfg in [ScenarioConfig::scenario_a(seed), ScenarioConfig::scenario_n(seed)] {
            let s = generate_with_prior(&cfg).unwrap();
            let expected: f64 = s.lambda.iter().sum();
            let sd = s.lambda.iter().map(|l| l * (1.0 - l)).sum::<f64>().sqrt();
            let got = s.table.truth().unwrap().iter().map(|&h| h as f64).sum::<f64>();
            assert!((got - expected).abs() <= 4.0 * sd, "seed {seed}: {got} vs {expected}");
        }
    }
}
