//! Seeded synthetic benchmark: every (method, seed) cell, aggregated.

use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{bh, storey_bh, z_to_pvalue, Sidedness};
use crate::data::HypothesisTable;
use crate::densities::{estimate_alternative, AlternativeEstimate};
use crate::discovery::{fdp_power, DiscoverySet};
use crate::error::{Error, Result};
use crate::synthetic::{generate, ScenarioConfig};
use crate::two_groups::{select_discoveries, train_with_alternative, FitConfig, Seeds, Variant};

/// A rejection procedure compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Bh,
    Sbh,
    #[value(name = "neurt_a")]
    NeurtA,
    #[value(name = "neurt_b")]
    NeurtB,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Bh, Method::Sbh, Method::NeurtA, Method::NeurtB];

    pub fn name(self) -> &'static str {
        match self {
            Method::Bh => "bh",
            Method::Sbh => "sbh",
            Method::NeurtA => "neurt_a",
            Method::NeurtB => "neurt_b",
        }
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            Method::NeurtA => Some(Variant::NeurtA),
            Method::NeurtB => Some(Variant::NeurtB),
            Method::Bh | Method::Sbh => None,
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown method {s:?}; expected one of bh, sbh, neurt_a, neurt_b")))
    }
}

/// Outcome of one method on one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub alpha: f64,
    pub n: usize,
    pub discoveries: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fdp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub power: Option<f64>,
    pub wall_seconds: f64,
    pub config_hash: String,
    pub seed: u64,
}

impl RunReport {
    pub fn new(
        method: &str,
        ds: &DiscoverySet,
        truth: Option<&[u8]>,
        wall_seconds: f64,
        config_hash: &str,
        seed: u64,
    ) -> Result<Self> {
        let metrics = truth.map(|t| fdp_power(ds, t)).transpose()?;
        Ok(RunReport {
            method: method.to_owned(),
            alpha: ds.alpha,
            n: ds.n(),
            discoveries: ds.len(),
            fdp: metrics.map(|m| m.fdp),
            power: metrics.map(|m| m.power),
            wall_seconds,
            config_hash: config_hash.to_owned(),
            seed,
        })
    }
}

/// Everything a benchmark run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub scenario_name: String,
    /// Scenario template; each seed overrides its `seed`.
    pub scenario: ScenarioConfig,
    /// Fit template; each seed overrides `training.seed`.
    pub fit: FitConfig,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub alpha: f64,
    pub lambda0: f64,
    pub sidedness: Sidedness,
}

impl BenchmarkConfig {
    pub fn new(scenario_name: &str, methods: Vec<Method>, seeds: Vec<u64>) -> Result<Self> {
        Ok(BenchmarkConfig {
            scenario_name: scenario_name.to_owned(),
            scenario: ScenarioConfig::preset(scenario_name, 0)?,
            fit: FitConfig::default(),
            methods,
            seeds,
            alpha: 0.1,
            lambda0: 0.5,
            sidedness: Sidedness::TwoSided,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Usage("benchmark needs at least one method".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Usage("benchmark needs at least one seed".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Usage(format!("alpha must lie in (0,1), got {}", self.alpha)));
        }
        self.scenario.validate()?;
        self.fit.training.validate()
    }
}

/// Counts of z-values per bin split by truth and rejection status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub method: String,
    pub lo: f64,
    pub width: f64,
    /// `[null kept, null rejected, alternative kept, alternative rejected]` per bin.
    pub counts: Vec<[u64; 4]>,
}

impl Histogram {
    pub const LO: f64 = -8.0;
    pub const WIDTH: f64 = 0.25;
    pub const BINS: usize = 64;

    fn new(method: &str) -> Self {
        Histogram {
            method: method.to_owned(),
            lo: Self::LO,
            width: Self::WIDTH,
            counts: vec![[0; 4]; Self::BINS],
        }
    }

    /// Values outside the range land in the edge bins.
    fn add(&mut self, z: &[f64], truth: &[u8], rejected: &[bool]) {
        for ((&z, &h), &r) in z.iter().zip(truth).zip(rejected) {
            let bin = ((z - self.lo) / self.width).floor().clamp(0.0, (Self::BINS - 1) as f64) as usize;
            self.counts[bin][2 * usize::from(h) + usize::from(r)] += 1;
        }
    }

    fn merge(&mut self, other: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bin_lo", "bin_hi", "null_kept", "null_rejected", "alt_kept", "alt_rejected"])?;
        for (i, c) in self.counts.iter().enumerate() {
            let lo = self.lo + i as f64 * self.width;
            let mut row = vec![format!("{lo}"), format!("{}", lo + self.width)];
            row.extend(c.iter().map(u64::to_string));
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Mean and sample sd (0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
}

impl Moments {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Moments { mean, sd }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub runs: usize,
    pub discoveries: Moments,
    pub fdp: Moments,
    pub power: Moments,
    pub wall_seconds: Moments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutcome {
    pub scenario: String,
    pub alpha: f64,
    pub config_hash: String,
    pub summaries: Vec<MethodSummary>,
    /// Sorted by (method, seed).
    pub runs: Vec<RunReport>,
    #[serde(skip)]
    pub histograms: Vec<Histogram>,
}

impl BenchmarkOutcome {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method.name())
    }

    /// One line per run, sorted by (method, seed).
    pub fn write_runs_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "seed", "alpha", "n", "discoveries", "fdp", "power", "wall_seconds"])?;
        for r in &self.runs {
            let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
            w.write_record([
                r.method.clone(),
                r.seed.to_string(),
                r.alpha.to_string(),
                r.n.to_string(),
                r.discoveries.to_string(),
                opt(r.fdp),
                opt(r.power),
                format!("{:.3}", r.wall_seconds),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Discoveries per method at the benchmark's level, relative to BH when
    /// BH was run.
    pub fn format_table(&self) -> String {
        let bh = self
            .summaries
            .iter()
            .find(|s| s.method == Method::Bh.name())
            .map(|s| s.discoveries.mean);
        let runs = self.summaries.first().map_or(0, |s| s.runs);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# of discoveries at FDR = {} (scenario {}, {} seed{})",
            self.alpha,
            self.scenario,
            runs,
            if runs == 1 { "" } else { "s" }
        );
        let _ = writeln!(
            out,
            "{:<10} {:>12} {:>9} {:>8} {:>8}",
            "method", "discoveries", "vs bh", "fdp", "power"
        );
        for s in &self.summaries {
            let rel = match bh {
                Some(b) if b > 0.0 => format!("{:+.1}%", 100.0 * (s.discoveries.mean / b - 1.0)),
                _ => "-".to_owned(),
            };
            let _ = writeln!(
                out,
                "{:<10} {:>12.1} {:>9} {:>8.3} {:>8.3}",
                s.method, s.discoveries.mean, rel, s.fdp.mean, s.power.mean
            );
        }
        out
    }
}

struct SeedResult {
    reports: Vec<(Method, RunReport)>,
    histograms: Vec<(Method, Histogram)>,
}

fn run_seed(cfg: &BenchmarkConfig, seed: u64, config_hash: &str) -> Result<SeedResult> {
    let scenario = ScenarioConfig {
        seed,
        ..cfg.scenario.clone()
    };
    let table = generate(&scenario)?;
    let truth = table.truth().expect("generator emits truth");
    let mut fit = cfg.fit.clone();
    fit.training.seed = seed;

    let mut alternative: Option<AlternativeEstimate> = None;
    let mut out = SeedResult {
        reports: Vec::new(),
        histograms: Vec::new(),
    };
    for &method in &cfg.methods {
        let t0 = Instant::now();
        let ds = match method.variant() {
            None => baseline(&table, method, cfg)?,
            Some(variant) => {
                let alt = match &alternative {
                    Some(a) => a.clone(),
                    None => {
                        let a = estimate_alternative(table.z(), &fit.null, &fit.pr, Seeds::derive(seed).alternative)?;
                        alternative = Some(a.clone());
                        a
                    }
                };
                let model = train_with_alternative(&table, &fit, variant, alt)?;
                select_discoveries(&model.posteriors(&table)?, cfg.alpha)?
            }
        };
        let seconds = t0.elapsed().as_secs_f64();
        log::info!("seed {seed} {}: {} discoveries ({seconds:.1}s)", method.name(), ds.len());
        let mut hist = Histogram::new(method.name());
        hist.add(table.z(), truth, &ds.flags());
        out.histograms.push((method, hist));
        out.reports
            .push((method, RunReport::new(method.name(), &ds, Some(truth), seconds, config_hash, seed)?));
    }
    Ok(out)
}

fn baseline(table: &HypothesisTable, method: Method, cfg: &BenchmarkConfig) -> Result<DiscoverySet> {
    let pvals: Vec<f64> = table.z().iter().map(|&z| z_to_pvalue(z, cfg.sidedness)).collect();
    match method {
        Method::Sbh => storey_bh(&pvals, cfg.alpha, cfg.lambda0),
        _ => bh(&pvals, cfg.alpha),
    }
}

/// Runs every (method, seed) cell. Seeds run in parallel on at most
/// `threads` workers (rayon's default when `None`); the result does not
/// depend on the thread count apart from timings.
pub fn run_benchmark(cfg: &BenchmarkConfig, threads: Option<usize>, config_hash: &str) -> Result<BenchmarkOutcome> {
    cfg.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| Error::Validation(e.to_string()))?;
    let per_seed: Vec<SeedResult> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| run_seed(cfg, seed, config_hash))
            .collect::<Result<_>>()
    })?;

    let mut runs: Vec<(Method, RunReport)> = Vec::new();
    let mut histograms: Vec<Histogram> = Vec::new();
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();
    for seed_result in per_seed {
        runs.extend(seed_result.reports);
        for (method, h) in seed_result.histograms {
            match histograms.iter_mut().find(|x| x.method == method.name()) {
                Some(acc) => acc.merge(&h),
                None => histograms.push(h),
            }
        }
    }
    runs.sort_by(|(ma, ra), (mb, rb)| ma.cmp(mb).then(ra.seed.cmp(&rb.seed)));
    histograms.sort_by_key(|h| methods.iter().position(|m| m.name() == h.method));

    let summaries = methods
        .iter()
        .map(|&m| {
            let rs: Vec<&RunReport> = runs.iter().filter(|(x, _)| *x == m).map(|(_, r)| r).collect();
            let col = |f: &dyn Fn(&RunReport) -> f64| Moments::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            MethodSummary {
                method: m.name().to_owned(),
                runs: rs.len(),
                discoveries: col(&|r| r.discoveries as f64),
                fdp: col(&|r| r.fdp.unwrap_or(0.0)),
                power: col(&|r| r.power.unwrap_or(0.0)),
                wall_seconds: col(&|r| r.wall_seconds),
            }
        })
        .collect();

    Ok(BenchmarkOutcome {
        scenario: cfg.scenario_name.clone(),
        alpha: cfg.alpha,
        config_hash: config_hash.to_owned(),
        summaries,
        runs: runs.into_iter().map(|(_, r)| r).collect(),
        histograms,
    })
}
