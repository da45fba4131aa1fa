//! Command-line front end: `run`, `synth`, `validate`, `report`.
//!
//! Exit codes: 0 success, 1 configuration error (bad flags, unreadable or
//! incompatible inputs, detected before any training), 2 runtime failure or
//! a dataset with error-level findings.
//!
//! `CONBATCH_WORKERS` caps the worker thread count.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Deserialize;

use crate::acquisition::ScorerConfig;
use crate::cost::CostVariant;
use crate::data::{gen_synthetic, validate_dir, write_dataset, Severity, SynthSpec};
use crate::error::{Error, Result};
use crate::report::{run_report, ReportFormat, ReportSpec};
use crate::runner::{
    run_on, write_series, CostConfig, DataSource, MetricChoice, ModelParams, RunConfig,
    DEFAULT_BATCH_SIZE, DEFAULT_FORWARD_PASSES, DEFAULT_ITERATIONS,
};
use crate::strategies::{Budget, StrategyConfig, StrategyKind};

pub const WORKERS_ENV: &str = "CONBATCH_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "conbatch",
    version,
    about = "Budget-constrained batch Bayesian active learning"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Run active-learning experiments, one result file per seed.
    Run(RunArgs),
    /// Generate a synthetic dataset directory.
    Synth(SynthArgs),
    /// Check a dataset directory and print a summary.
    Validate(ValidateArgs),
    /// Aggregate result files into curves and a target table.
    Report(ReportArgs),
}

/// Every field is optional so that values can come from `--config` as well;
/// flags override the file.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunArgs {
    /// JSON file with any of these options (snake_case keys).
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, conflicts_with = "synth")]
    pub dataset: Option<PathBuf>,
    /// Synthetic spec JSON (SynthSpec fields plus an optional `seed`).
    #[arg(long)]
    pub synth: Option<PathBuf>,
    #[arg(long, value_parser = ["random", "greedy", "threshold", "batchbald"])]
    pub strategy: Option<String>,
    #[arg(long, value_parser = ["none", "distance", "distance-return", "area"])]
    pub cost: Option<String>,
    /// Per-batch budget: a number or `inf`.
    #[arg(long)]
    pub budget: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = ["haversine", "planar"])]
    pub metric: Option<String>,
    /// `area_id,cost` CSV overriding population-based area costs.
    #[arg(long)]
    pub area_costs: Option<PathBuf>,
    #[arg(long)]
    pub forward_passes: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub hidden_layers: Option<usize>,
    #[arg(long)]
    pub minibatch: Option<usize>,
    #[arg(long)]
    pub exact_cap: Option<usize>,
    #[arg(long)]
    pub n_sim: Option<usize>,
    #[arg(long)]
    pub eval_stride: Option<usize>,
    /// Record per-iteration wall time (makes result files non-reproducible).
    #[arg(long)]
    pub timing: Option<bool>,
}

macro_rules! overlay {
    ($base:ident, $top:ident; $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl RunArgs {
    /// File values overlaid with flag values.
    pub fn merged(&self) -> Result<RunArgs> {
        let mut base = match &self.config {
            Some(p) => {
                let raw = fs::read(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_slice::<RunArgs>(&raw)
                    .map_err(|e| Error::InvalidConfig(format!("{}: {e}", p.display())))?
            }
            None => RunArgs::default(),
        };
        let top = self;
        overlay!(base, top; dataset, synth, strategy, cost, budget, batch_size, iterations, seeds, out, metric,
            area_costs, forward_passes, epochs, lr, weight_decay, dropout, width, hidden_layers, minibatch,
            exact_cap, n_sim, eval_stride, timing);
        if top.dataset.is_some() {
            base.synth = None;
        }
        if top.synth.is_some() {
            base.dataset = None;
        }
        Ok(base)
    }

    /// Resolves merged options into a run config.
    pub fn to_config(&self) -> Result<RunConfig> {
        let data = match (&self.dataset, &self.synth) {
            (Some(d), None) => DataSource::Dir { path: d.clone() },
            (None, Some(s)) => {
                let (spec, seed) = read_synth_file(s)?;
                DataSource::Synth { spec, seed }
            }
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "--dataset and --synth are mutually exclusive".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidConfig(
                    "one of --dataset or --synth is required".into(),
                ))
            }
        };
        let mut cfg = RunConfig::new(data);
        let kind: StrategyKind = self.strategy.as_deref().unwrap_or("greedy").parse()?;
        let variant: CostVariant = self.cost.as_deref().unwrap_or("none").parse()?;
        let budget: Budget = self.budget.as_deref().unwrap_or("inf").parse()?;
        cfg.strategy = StrategyConfig {
            kind,
            n_max: self.batch_size.unwrap_or(DEFAULT_BATCH_SIZE),
            budget,
        };
        cfg.cost = CostConfig {
            variant,
            metric: match self.metric.as_deref() {
                None | Some("haversine") => MetricChoice::Haversine,
                Some("planar") => MetricChoice::Planar,
                Some(other) => {
                    return Err(Error::InvalidConfig(format!("unknown metric {other:?}")))
                }
            },
            area_costs_file: self.area_costs.clone(),
        };
        if self.area_costs.is_some() && variant != CostVariant::AreaCost {
            return Err(Error::InvalidConfig(
                "--area-costs only applies to --cost area".into(),
            ));
        }
        cfg.iterations = self.iterations.unwrap_or(DEFAULT_ITERATIONS);
        cfg.seeds = self.seeds.clone().unwrap_or_else(|| vec![0]);
        cfg.forward_passes = self.forward_passes.unwrap_or(DEFAULT_FORWARD_PASSES);
        let d = ModelParams::default();
        cfg.model = ModelParams {
            hidden_layers: self.hidden_layers.unwrap_or(d.hidden_layers),
            width: self.width.unwrap_or(d.width),
            dropout_rate: self.dropout.unwrap_or(d.dropout_rate),
            lr: self.lr.unwrap_or(d.lr),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            epochs: self.epochs.unwrap_or(d.epochs),
            minibatch: self.minibatch.unwrap_or(d.minibatch),
        };
        let s = ScorerConfig::default();
        cfg.scorer = ScorerConfig {
            exact_config_cap: self.exact_cap.unwrap_or(s.exact_config_cap),
            n_sim: self.n_sim.unwrap_or(s.n_sim),
        };
        cfg.eval_stride = self.eval_stride.unwrap_or(1);
        cfg.record_timing = self.timing.unwrap_or(false);
        cfg.output = self.out.clone();
        if cfg.output.is_none() {
            return Err(Error::InvalidConfig("--out is required".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Deserialize)]
struct SynthFile {
    #[serde(flatten)]
    spec: SynthSpec,
    #[serde(default)]
    seed: u64,
}

/// Reads a synthetic spec file: SynthSpec fields plus an optional `seed`.
pub fn read_synth_file(path: &Path) -> Result<(SynthSpec, u64)> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let f: SynthFile = serde_json::from_slice(&raw)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    f.spec.validate()?;
    Ok((f.spec, f.seed))
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Overrides the seed in the spec file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.9")]
    pub targets: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub window: usize,
    #[arg(long, value_parser = ["csv", "svg"], default_value = "csv")]
    pub format: String,
    #[arg(long)]
    pub out: PathBuf,
}

fn exit_for(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_)
        | Error::Cost(_)
        | Error::MissingFile(_)
        | Error::DimensionMismatch(_)
        | Error::InvalidDataset(_)
        | Error::Report(_) => EXIT_CONFIG,
        Error::Io { .. } | Error::Json { .. } | Error::Csv { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

pub fn cmd_run(args: &RunArgs) -> i32 {
    let cfg = match args.merged().and_then(|a| a.to_config()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let (dataset, split) = match cfg.data.load() {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: cannot load dataset: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = cfg
        .cost
        .resolve(&dataset)
        .and_then(|_| cfg.model.for_dataset(&dataset).validate())
    {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    let out_dir = cfg.output.clone().expect("validated");
    let results: Vec<(u64, Result<PathBuf>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let res = run_on(&dataset, split.clone(), &cfg, seed).and_then(|series| {
                let path = out_dir.join(cfg.result_file_name(seed));
                write_series(&series, &path)?;
                match &series.aborted {
                    Some(why) => Err(Error::InvalidDataset(format!(
                        "run aborted ({why}); partial series in {}",
                        path.display()
                    ))),
                    None => Ok(path),
                }
            });
            (seed, res)
        })
        .collect();
    let mut code = EXIT_OK;
    for (seed, r) in results {
        match r {
            Ok(p) => println!("seed {seed}: wrote {}", p.display()),
            Err(e) => {
                eprintln!("seed {seed}: {e}");
                code = EXIT_RUNTIME;
            }
        }
    }
    code
}

pub fn cmd_synth(args: &SynthArgs) -> i32 {
    let res = read_synth_file(&args.spec).and_then(|(spec, seed)| {
        let (ds, split) = gen_synthetic(&spec, args.seed.unwrap_or(seed))?;
        write_dataset(&ds, &split, &args.out)?;
        Ok((ds.len(), split))
    });
    match res {
        Ok((n, split)) => {
            println!(
                "wrote {n} samples to {} (train {}, test {}, pool {})",
                args.out.display(),
                split.train_idx.len(),
                split.test_idx.len(),
                split.pool_idx.len()
            );
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}

pub fn cmd_validate(args: &ValidateArgs) -> i32 {
    let report = validate_dir(&args.dir);
    if let Some(s) = &report.summary {
        println!("{s}");
    }
    for f in &report.findings {
        println!("{f}");
    }
    match report.worst() {
        Some(Severity::Error) => EXIT_RUNTIME,
        _ => {
            if report.findings.is_empty() {
                println!("ok");
            }
            EXIT_OK
        }
    }
}

pub fn cmd_report(args: &ReportArgs) -> i32 {
    let spec = ReportSpec {
        inputs: args.inputs.clone(),
        targets: args.targets.clone(),
        window: args.window,
        format: if args.format == "svg" {
            ReportFormat::Svg
        } else {
            ReportFormat::Csv
        },
    };
    match run_report(&spec, &args.out) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_for(&e)
        }
    }
}

fn init_workers() {
    if let Some(n) = std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        // fails only if a pool already exists, which is fine
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

/// Parses `args` and runs the chosen subcommand, returning the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    init_workers();
    match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Report(a) => cmd_report(a),
    }
}
