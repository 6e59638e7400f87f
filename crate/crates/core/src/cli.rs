//! Command-line surface: `simulate`, `fit`, `discover`, `benchmark`, `report`.
//!
//! Effective settings are resolved as flags over the `--config` JSON file
//! over built-in defaults. Each command prints a JSON summary on stdout and
//! logs progress on stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::adjust::AdjustMode;
use crate::baselines::{bh, storey_bh, z_to_pvalue, Sidedness};
use crate::benchmark::{run_benchmark, BenchmarkConfig, BenchmarkOutcome, Method, RunReport};
use crate::data::{load_table, write_table, Schema};
use crate::error::{Error, Result};
use crate::synthetic::{generate, ScenarioConfig};
use crate::two_groups::{select_discoveries, train, FitConfig, FittedModel, Variant};

/// Environment variable capping benchmark worker threads.
pub const THREADS_ENV: &str = "FDRKIT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "fdrkit", version, about = "Covariate-adaptive false discovery rate control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic table with known truth.
    Simulate(SimulateArgs),
    /// Train a prior network and save the fitted model.
    Fit(FitArgs),
    /// Reject hypotheses with a fitted model or a baseline.
    Discover(DiscoverArgs),
    /// Run methods over seeded synthetic tables and aggregate.
    Benchmark(BenchmarkArgs),
    /// Print a discoveries table from benchmark output.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Shared {
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON file with `scenario`, `fit`, `schema`, `alpha`, `lambda0`,
    /// `sidedness`, `methods` and `seeds` entries (all optional).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[arg(long, default_value = "A")]
    pub scenario: String,
    /// Number of rows (overrides the preset).
    #[arg(long)]
    pub n: Option<usize>,
}

/// Training overrides shared by `fit` and `benchmark`.
#[derive(Debug, Clone, Default, Args)]
pub struct FitFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub lambda_grid_size: Option<usize>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub adjust_mode: Option<AdjustMode>,
    /// Skip the auxiliary-covariate regression.
    #[arg(long)]
    pub no_stage2: bool,
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "b")]
    pub variant: Variant,
    #[command(flatten)]
    pub fit: FitFlags,
    /// Also write the per-epoch training log as CSV.
    #[arg(long)]
    pub log_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DiscoverMethod {
    Neurt,
    Bh,
    Sbh,
}

#[derive(Debug, Clone, Args)]
pub struct DiscoverArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Fitted model; required for `--method neurt`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "neurt")]
    pub method: DiscoverMethod,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub sidedness: Option<Sidedness>,
    /// Storey's tuning threshold.
    #[arg(long)]
    pub lambda0: Option<f64>,
    /// Also write the run report JSON here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    #[command(flatten)]
    pub shared: Shared,
    #[arg(long, default_value = "A")]
    pub scenario: String,
    /// Comma separated: bh, sbh, neurt_a, neurt_b.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Comma separated seeds or inclusive ranges, e.g. `0..19` or `1,4,7`.
    #[arg(long)]
    pub seeds: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub sidedness: Option<Sidedness>,
    #[command(flatten)]
    pub fit: FitFlags,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub shared: Shared,
    /// `aggregate.json` or the benchmark directory holding it.
    #[arg(long = "in")]
    pub input: PathBuf,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scenario: Option<Value>,
    pub fit: Option<Value>,
    pub schema: Option<Schema>,
    pub alpha: Option<f64>,
    pub lambda0: Option<f64>,
    pub sidedness: Option<Sidedness>,
    pub methods: Option<Vec<Method>>,
    pub seeds: Option<Vec<u64>>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let s = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Ok(serde_json::from_str(&s)?)
            }
        }
    }
}

/// Overlays `overlay` onto `base` key by key, recursing into objects.
fn merge_json(base: &mut Value, overlay: &Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

fn layered<T: Serialize + serde::de::DeserializeOwned>(base: T, overlay: Option<&Value>) -> Result<T> {
    match overlay {
        None => Ok(base),
        Some(o) => {
            let mut v = serde_json::to_value(base)?;
            merge_json(&mut v, o);
            Ok(serde_json::from_value(v)?)
        }
    }
}

/// Hex SHA-256 of the value's JSON serialization.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn check_alpha(alpha: f64) -> Result<f64> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(alpha)
    } else {
        Err(Error::Usage(format!("alpha must lie in (0,1), got {alpha}")))
    }
}

fn require_out(shared: &Shared) -> Result<&Path> {
    shared
        .out
        .as_deref()
        .ok_or_else(|| Error::Usage("--out is required".into()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

/// Parses `0..19,25,30..31` into seeds (ranges inclusive).
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::Usage(format!("cannot parse seed list {s:?}"));
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((lo, hi)) => {
                let lo: u64 = lo.trim().parse().map_err(|_| bad())?;
                let hi: u64 = hi.trim_start_matches('=').trim().parse().map_err(|_| bad())?;
                if hi < lo {
                    return Err(bad());
                }
                seeds.extend(lo..=hi);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(seeds)
}

fn apply_fit_flags(cfg: &mut FitConfig, flags: &FitFlags) {
    let t = &mut cfg.training;
    if let Some(v) = flags.epochs {
        t.epochs = v;
    }
    if let Some(v) = flags.lr {
        t.lr = v;
    }
    if let Some(v) = flags.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = flags.weight_decay {
        t.weight_decay = v;
    }
    if let Some(v) = flags.momentum {
        t.momentum = v;
    }
    if let Some(v) = flags.patience {
        t.patience = v;
    }
    if let Some(v) = flags.val_fraction {
        t.val_fraction = v;
    }
    if let Some(v) = flags.lambda_grid_size {
        t.lambda_grid_size = v;
    }
    if let Some(v) = &flags.hidden {
        cfg.hidden_sizes = v.clone();
    }
    if let Some(v) = flags.adjust_mode {
        cfg.adjust_mode = v;
    }
    if flags.no_stage2 {
        cfg.stage2 = false;
    }
    if flags.no_standardize {
        cfg.standardize = false;
    }
}

fn resolve_scenario(name: &str, file: &FileConfig, seed: Option<u64>, n: Option<usize>) -> Result<ScenarioConfig> {
    let mut cfg = layered(ScenarioConfig::preset(name, 0)?, file.scenario.as_ref())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = n {
        cfg.n = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_fit(file: &FileConfig, flags: &FitFlags, seed: Option<u64>) -> Result<FitConfig> {
    let mut cfg = layered(FitConfig::default(), file.fit.as_ref())?;
    apply_fit_flags(&mut cfg, flags);
    if let Some(s) = seed {
        cfg.training.seed = s;
    }
    cfg.training.validate()?;
    Ok(cfg)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<Value> {
    let out = require_out(&args.shared)?;
    let file = FileConfig::load(args.shared.config.as_deref())?;
    let cfg = resolve_scenario(&args.scenario, &file, args.shared.seed, args.n)?;
    let hash = config_hash(&cfg)?;
    let table = generate(&cfg)?;
    write_table(&table, out)?;
    log::info!("wrote {} rows to {}", table.n(), out.display());
    Ok(json!({
        "command": "simulate",
        "scenario": args.scenario,
        "out": out,
        "n": table.n(),
        "seed": cfg.seed,
        "config": cfg,
        "config_hash": hash,
    }))
}

pub fn cmd_fit(args: &FitArgs) -> Result<Value> {
    let out = require_out(&args.shared)?;
    let file = FileConfig::load(args.shared.config.as_deref())?;
    let cfg = resolve_fit(&file, &args.fit, args.shared.seed)?;
    let table = load_table(&args.input, &file.schema.unwrap_or_default())?;
    if table.q() == 0 {
        log::warn!("table has no auxiliary covariates; the regression stage is skipped");
    }
    let hash = config_hash(&cfg)?;
    let t0 = Instant::now();
    let model = train(&table, &cfg, args.variant)?;
    let seconds = t0.elapsed().as_secs_f64();
    model.save(out)?;
    if let Some(path) = &args.log_out {
        let mut w = csv::Writer::from_writer(create(path)?);
        for e in &model.training.epochs {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    let log = &model.training;
    log::info!(
        "best epoch {} of {}, validation NLL {:.5} -> {:.5}",
        log.best_epoch,
        log.last().epoch,
        log.initial().val_nll,
        log.best_val_nll
    );
    Ok(json!({
        "command": "fit",
        "variant": model.variant.name(),
        "out": out,
        "n": table.n(),
        "k": table.k(),
        "q": table.q(),
        "pi1": model.pi1,
        "best_epoch": log.best_epoch,
        "epochs_run": log.last().epoch,
        "initial_val_nll": log.initial().val_nll,
        "best_val_nll": log.best_val_nll,
        "stage2": model.regression.is_some(),
        "wall_seconds": seconds,
        "config_hash": hash,
        "seed": cfg.training.seed,
    }))
}

#[derive(Serialize)]
struct DiscoverConfig {
    method: DiscoverMethod,
    alpha: f64,
    sidedness: Sidedness,
    lambda0: f64,
    model_sha256: Option<String>,
}

pub fn cmd_discover(args: &DiscoverArgs) -> Result<RunReport> {
    let file = FileConfig::load(args.shared.config.as_deref())?;
    let alpha = check_alpha(args.alpha.or(file.alpha).unwrap_or(0.1))?;
    let sidedness = args.sidedness.or(file.sidedness).unwrap_or_default();
    let lambda0 = args.lambda0.or(file.lambda0).unwrap_or(0.5);
    let table = load_table(&args.input, &file.schema.unwrap_or_default())?;

    let t0 = Instant::now();
    let (name, ds, model_sha, seed) = match args.method {
        DiscoverMethod::Neurt => {
            let path = args
                .model
                .as_deref()
                .ok_or_else(|| Error::Usage("--model is required for --method neurt".into()))?;
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            let text = String::from_utf8(bytes.clone())
                .map_err(|_| Error::Validation(format!("{} is not UTF-8", path.display())))?;
            let model = FittedModel::from_json(&text)?;
            let ds = select_discoveries(&model.posteriors(&table)?, alpha)?;
            let sha = hex::encode(Sha256::digest(&bytes));
            (model.variant.name(), ds, Some(sha), model.seeds.master)
        }
        DiscoverMethod::Bh | DiscoverMethod::Sbh => {
            let pvals: Vec<f64> = table.z().iter().map(|&z| z_to_pvalue(z, sidedness)).collect();
            if args.method == DiscoverMethod::Bh {
                ("bh", bh(&pvals, alpha)?, None, args.shared.seed.unwrap_or(0))
            } else {
                ("sbh", storey_bh(&pvals, alpha, lambda0)?, None, args.shared.seed.unwrap_or(0))
            }
        }
    };
    let seconds = t0.elapsed().as_secs_f64();
    let hash = config_hash(&DiscoverConfig {
        method: args.method,
        alpha,
        sidedness,
        lambda0,
        model_sha256: model_sha,
    })?;
    if let Some(out) = &args.shared.out {
        ds.write_csv(table.ids(), create(out)?)?;
    }
    let report = RunReport::new(name, &ds, table.truth(), seconds, &hash, seed)?;
    if let Some(path) = &args.report {
        write_json(path, &report)?;
    }
    log::info!("{name}: {} of {} rejected at alpha {alpha}", ds.len(), ds.n());
    Ok(report)
}

fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) if s.trim().is_empty() => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(t) => Ok(Some(t)),
            Err(_) => Err(Error::Usage(format!("{THREADS_ENV} must be a nonnegative integer, got {s:?}"))),
        },
    }
}

pub fn resolve_benchmark(args: &BenchmarkArgs) -> Result<BenchmarkConfig> {
    let file = FileConfig::load(args.shared.config.as_deref())?;
    let methods = match &args.methods {
        Some(list) => list
            .iter()
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Method>>>()?,
        None => file.methods.clone().unwrap_or_else(|| Method::ALL.to_vec()),
    };
    let seeds = match &args.seeds {
        Some(s) => parse_seeds(s)?,
        None => file.seeds.clone().unwrap_or_else(|| (0..20).collect()),
    };
    let mut cfg = BenchmarkConfig::new(&args.scenario, methods, seeds)?;
    cfg.scenario = resolve_scenario(&args.scenario, &file, None, args.n)?;
    cfg.fit = resolve_fit(&file, &args.fit, None)?;
    cfg.alpha = check_alpha(args.alpha.or(file.alpha).unwrap_or(0.1))?;
    cfg.lambda0 = file.lambda0.unwrap_or(0.5);
    cfg.sidedness = args.sidedness.or(file.sidedness).unwrap_or_default();
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_benchmark(args: &BenchmarkArgs) -> Result<BenchmarkOutcome> {
    let out = require_out(&args.shared)?;
    let cfg = resolve_benchmark(args)?;
    let threads = threads_from_env()?;
    let hash = config_hash(&cfg)?;
    let outcome = run_benchmark(&cfg, threads, &hash)?;

    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json(&out.join("aggregate.json"), &outcome)?;
    write_json(&out.join("config.json"), &cfg)?;
    outcome.write_runs_csv(create(&out.join("runs.csv"))?)?;
    for h in &outcome.histograms {
        h.write_csv(create(&out.join(format!("hist_{}.csv", h.method)))?)?;
    }
    eprint!("{}", outcome.format_table());
    Ok(outcome)
}

pub fn cmd_report(args: &ReportArgs) -> Result<String> {
    let path = if args.input.is_dir() {
        args.input.join("aggregate.json")
    } else {
        args.input.clone()
    };
    let s = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let outcome: BenchmarkOutcome = serde_json::from_str(&s)?;
    let table = outcome.format_table();
    if let Some(out) = &args.shared.out {
        fs::write(out, &table).map_err(|e| Error::io(out, e))?;
    }
    Ok(table)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => print_json(&cmd_simulate(&a)?),
        Command::Fit(a) => print_json(&cmd_fit(&a)?),
        Command::Discover(a) => print_json(&cmd_discover(&a)?),
        Command::Benchmark(a) => {
            let outcome = cmd_benchmark(&a)?;
            print_json(&json!({
                "command": "benchmark",
                "scenario": outcome.scenario,
                "alpha": outcome.alpha,
                "config_hash": outcome.config_hash,
                "summaries": outcome.summaries,
            }))
        }
        Command::Report(a) => {
            print!("{}", cmd_report(&a)?);
            Ok(())
        }
    }
}

/// Entry point of the binary. Usage errors exit with 2, other failures with 1.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(parse_seeds("5, 1,2..=3").unwrap(), vec![5, 1, 2, 3]);
        assert!(parse_seeds("").unwrap().is_empty());
        assert!(matches!(parse_seeds("x"), Err(Error::Usage(_))));
        assert!(parse_seeds("3..1").is_err());
    }

    #[test]
    fn json_merge_is_deep() {
        let cfg = layered(FitConfig::default(), Some(&json!({"training": {"epochs": 7}}))).unwrap();
        assert_eq!(cfg.training.epochs, 7);
        assert_eq!(cfg.training.batch_size, 128);
        assert_eq!(cfg.hidden_sizes, vec![200, 200]);
    }

    #[test]
    fn flags_override_config_file() {
        let file = FileConfig {
            fit: Some(json!({"training": {"epochs": 7, "lr": 0.5}})),
            ..FileConfig::default()
        };
        let flags = FitFlags {
            epochs: Some(3),
            ..FitFlags::default()
        };
        let cfg = resolve_fit(&file, &flags, Some(11)).unwrap();
        assert_eq!((cfg.training.epochs, cfg.training.lr, cfg.training.seed), (3, 0.5, 11));
    }

    #[test]
    fn hash_tracks_content() {
        let a = config_hash(&FitConfig::default()).unwrap();
        let mut other = FitConfig::default();
        other.training.lr = 0.01;
        assert_eq!(a.len(), 64);
        assert_eq!(a, config_hash(&FitConfig::default()).unwrap());
        assert_ne!(a, config_hash(&other).unwrap());
    }

    #[test]
    fn cli_parses() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
        let cli = Cli::try_parse_from(["fdrkit", "fit", "--in", "t.csv", "--variant", "neurt_a", "--out", "m.json"]).unwrap();
        match cli.command {
            Command::Fit(a) => assert_eq!(a.variant, Variant::NeurtA),
            _ => panic!("wrong subcommand"),
        }
    }
}
