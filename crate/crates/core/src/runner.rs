//! The active-learning loop: retrain from scratch, sample the posterior over
//! the pool and test set, select a batch under a fresh per-batch budget,
//! acquire it, and record metrics.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::acquisition::{batch_mutual_information, ScorerConfig};
use crate::cost::{build_area_costs, load_area_costs, CostModel, CostVariant, Metric};
use crate::data::{gen_synthetic, load_dataset, Dataset, SplitState, SynthSpec};
use crate::error::{Error, Result};
use crate::neural::{self, init_network, ModelConfig, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
use crate::posterior::{evaluate_accuracy, sample_posterior};
use crate::seeds::{derive_seed, sub_seed, Purpose};
use crate::strategies::{
    select_batch, Budget, SelectionInputs, StepRecord, StrategyConfig, StrategyKind,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Dir { path: PathBuf },
    Synth { spec: SynthSpec, seed: u64 },
}

impl DataSource {
    pub fn load(&self) -> Result<(Dataset, SplitState)> {
        match self {
            DataSource::Dir { path } => load_dataset(path),
            DataSource::Synth { spec, seed } => gen_synthetic(spec, *seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricChoice {
    #[default]
    Haversine,
    /// Equirectangular projection around the dataset's mean latitude.
    Planar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub variant: CostVariant,
    #[serde(default)]
    pub metric: MetricChoice,
    /// `area_id,cost` override; otherwise costs follow area populations.
    #[serde(default)]
    pub area_costs_file: Option<PathBuf>,
}

impl CostConfig {
    pub fn none() -> Self {
        Self {
            variant: CostVariant::None,
            metric: MetricChoice::Haversine,
            area_costs_file: None,
        }
    }

    /// Unit the budget is expressed in.
    pub fn unit(&self) -> &'static str {
        match self.variant {
            CostVariant::None => "none",
            CostVariant::Distance | CostVariant::DistanceReturn => "meters",
            CostVariant::AreaCost => "cost units",
        }
    }

    pub fn resolve(&self, dataset: &Dataset) -> Result<CostModel> {
        let metric = match self.metric {
            MetricChoice::Haversine => Metric::Haversine,
            MetricChoice::Planar => {
                let n = dataset.len().max(1) as f64;
                Metric::Planar {
                    ref_lat_deg: dataset.geoloc.iter().map(|g| g.lat).sum::<f64>() / n,
                }
            }
        };
        let model = match self.variant {
            CostVariant::None => CostModel::none(),
            CostVariant::Distance => CostModel::distance(metric),
            CostVariant::DistanceReturn => CostModel::distance_return(metric),
            CostVariant::AreaCost => {
                if !dataset.has_area_ids() {
                    return Err(Error::InvalidConfig(
                        "cost model 'area' needs area ids on every sample".into(),
                    ));
                }
                let costs = match &self.area_costs_file {
                    Some(p) => load_area_costs(p)?,
                    None => build_area_costs(dataset)?,
                };
                CostModel::area(costs)?
            }
        };
        model.check_dataset(dataset, &(0..dataset.len()).collect::<Vec<_>>())?;
        Ok(model)
    }
}

/// Classifier hyperparameters; input and output sizes come from the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub hidden_layers: usize,
    pub width: usize,
    pub dropout_rate: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub minibatch: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        let t = ModelConfig::defaults(1, 2);
        Self {
            hidden_layers: t.hidden_layers,
            width: t.width,
            dropout_rate: t.dropout_rate,
            lr: t.lr,
            weight_decay: t.weight_decay,
            epochs: t.epochs,
            minibatch: t.minibatch,
        }
    }
}

impl ModelParams {
    pub fn for_dataset(&self, dataset: &Dataset) -> ModelConfig {
        ModelConfig {
            input_dim: dataset.dim,
            hidden_layers: self.hidden_layers,
            width: self.width,
            dropout_rate: self.dropout_rate,
            lr: self.lr,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            minibatch: self.minibatch,
            class_count: dataset.class_count,
        }
    }
}

pub const DEFAULT_ITERATIONS: usize = 800;
pub const DEFAULT_FORWARD_PASSES: usize = 100;
pub const DEFAULT_BATCH_SIZE: usize = 5;

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataSource,
    pub strategy: StrategyConfig,
    pub cost: CostConfig,
    pub iterations: usize,
    pub model: ModelParams,
    pub forward_passes: usize,
    pub seeds: Vec<u64>,
    pub scorer: ScorerConfig,
    /// Evaluate test accuracy every `eval_stride` iterations (and on the last).
    #[serde(default = "default_stride")]
    pub eval_stride: usize,
    /// Record wall-clock time per iteration. Off by default so result files
    /// are byte-reproducible.
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(data: DataSource) -> Self {
        Self {
            data,
            strategy: StrategyConfig {
                kind: StrategyKind::Greedy,
                n_max: DEFAULT_BATCH_SIZE,
                budget: Budget::INFINITE,
            },
            cost: CostConfig::none(),
            iterations: DEFAULT_ITERATIONS,
            model: ModelParams::default(),
            forward_passes: DEFAULT_FORWARD_PASSES,
            seeds: vec![0],
            scorer: ScorerConfig::default(),
            eval_stride: 1,
            record_timing: false,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        if self.forward_passes == 0 {
            return Err(Error::InvalidConfig(
                "forward passes must be at least 1".into(),
            ));
        }
        if self.eval_stride == 0 {
            return Err(Error::InvalidConfig(
                "eval stride must be at least 1".into(),
            ));
        }
        if self.scorer.n_sim == 0 || self.scorer.exact_config_cap == 0 {
            return Err(Error::InvalidConfig(
                "n_sim and exact_config_cap must be positive".into(),
            ));
        }
        self.strategy.validate()
    }

    /// `{strategy}_{cost}_{budget}_seed{seed}.json`, with a `_b{n}` suffix
    /// before the seed for non-default batch sizes.
    pub fn result_file_name(&self, seed: u64) -> String {
        let batch = if self.strategy.n_max == DEFAULT_BATCH_SIZE {
            String::new()
        } else {
            format!("_b{}", self.strategy.n_max)
        };
        format!(
            "{}_{}_{}{}_seed{}.json",
            self.strategy.kind, self.cost.variant, self.strategy.budget, batch, seed
        )
    }
}

/// Values fixed by the engine rather than the config, echoed for completeness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedEcho {
    pub model: ModelConfig,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub cost_unit: String,
    pub initial_train: usize,
    pub initial_pool: usize,
    pub test_size: usize,
    pub evaluation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Accuracy of the model trained at the start of this iteration; `None`
    /// on iterations skipped by the evaluation stride.
    pub test_accuracy: Option<f64>,
    pub batch_indices: Vec<usize>,
    pub batch_marginal_costs: Vec<f64>,
    pub batch_total_cost: f64,
    pub batch_mutual_information: Option<f64>,
    pub batch_size: usize,
    pub cumulative_samples: usize,
    pub cumulative_cost: f64,
    pub train_size: usize,
    pub wall_ms: u64,
    pub early_return: bool,
    pub skipped_steps: usize,
    pub steps: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSeries {
    pub config: RunConfig,
    pub seed: u64,
    pub resolved: ResolvedEcho,
    pub records: Vec<IterationRecord>,
    /// The pool ran out before the configured iteration count.
    pub truncated: bool,
    /// Set when training diverged; the records stop at the failing iteration.
    pub aborted: Option<String>,
}

impl RunSeries {
    pub fn accuracies(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.test_accuracy).collect()
    }
}

pub fn run_experiment(config: &RunConfig, seed: u64) -> Result<RunSeries> {
    config.validate()?;
    let (dataset, split) = config.data.load()?;
    run_on(&dataset, split, config, seed)
}

/// Runs the loop on an already loaded dataset.
pub fn run_on(
    dataset: &Dataset,
    mut split: SplitState,
    config: &RunConfig,
    seed: u64,
) -> Result<RunSeries> {
    config.validate()?;
    let cost = config.cost.resolve(dataset)?;
    let model_cfg = config.model.for_dataset(dataset);
    model_cfg.validate()?;
    if split.train_idx.is_empty() {
        return Err(Error::InvalidConfig("initial training set is empty".into()));
    }

    let resolved = ResolvedEcho {
        model: model_cfg.clone(),
        adam_beta1: ADAM_BETA1,
        adam_beta2: ADAM_BETA2,
        adam_epsilon: ADAM_EPSILON,
        cost_unit: config.cost.unit().to_owned(),
        initial_train: split.train_idx.len(),
        initial_pool: split.pool_idx.len(),
        test_size: split.test_idx.len(),
        evaluation: format!(
            "MC-dropout predictive mean over {} passes",
            config.forward_passes
        ),
    };
    let mut series = RunSeries {
        config: config.clone(),
        seed,
        resolved,
        records: Vec::new(),
        truncated: false,
        aborted: None,
    };
    let test_labels: Vec<usize> = split.test_idx.iter().map(|&i| dataset.labels[i]).collect();
    let (mut cum_samples, mut cum_cost) = (0usize, 0.0f64);

    for it in 1..=config.iterations {
        if split.pool_idx.is_empty() {
            series.truncated = true;
            break;
        }
        let started = Instant::now();
        let iter = it as u64;
        let net = init_network(&model_cfg, derive_seed(seed, iter, Purpose::Init));
        let net = match neural::train(
            &net,
            dataset,
            &split.train_idx,
            &model_cfg,
            derive_seed(seed, iter, Purpose::Train),
        ) {
            Ok(n) => n,
            Err(e @ Error::Divergence { .. }) => {
                series.aborted = Some(format!("iteration {it}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };

        let posterior_seed = derive_seed(seed, iter, Purpose::Posterior);
        let evaluate = (it - 1) % config.eval_stride == 0 || it == config.iterations;
        let test_accuracy = if evaluate {
            let test_cube = sample_posterior(
                &net,
                dataset,
                &split.test_idx,
                config.forward_passes,
                posterior_seed,
            )?;
            Some(evaluate_accuracy(&test_cube, &test_labels)?)
        } else {
            None
        };
        let cube = sample_posterior(
            &net,
            dataset,
            &split.pool_idx,
            config.forward_passes,
            posterior_seed,
        )?;

        let select_seed = derive_seed(seed, iter, Purpose::Select);
        let inputs = SelectionInputs {
            cube: &cube,
            dataset,
            cost: &cost,
            scorer: config.scorer,
        };
        let outcome = select_batch(&config.strategy, &inputs, &split.pool_idx, select_seed)?;
        let mutual_information = match outcome.mutual_information {
            Some(mi) => Some(mi),
            None if outcome.selected.is_empty() => None,
            None => {
                let rows: Vec<usize> = outcome
                    .selected
                    .iter()
                    .map(|&i| cube.row_of(i).expect("pool row"))
                    .collect();
                Some(batch_mutual_information(
                    &cube,
                    &rows,
                    &config.scorer,
                    sub_seed(select_seed, u64::MAX),
                )?)
            }
        };

        split = split.apply_acquisition(&outcome.selected)?;
        let total = outcome.total_cost();
        cum_samples += outcome.selected.len();
        cum_cost += total;
        series.records.push(IterationRecord {
            iteration: it,
            test_accuracy,
            batch_size: outcome.selected.len(),
            batch_total_cost: total,
            batch_mutual_information: mutual_information,
            cumulative_samples: cum_samples,
            cumulative_cost: cum_cost,
            train_size: split.train_idx.len(),
            wall_ms: if config.record_timing {
                started.elapsed().as_millis() as u64
            } else {
                0
            },
            early_return: outcome.early_return(),
            skipped_steps: outcome.skipped_steps(),
            batch_indices: outcome.selected,
            batch_marginal_costs: outcome.step_costs,
            steps: outcome.steps,
        });
    }
    Ok(series)
}

/// First iteration whose recorded test accuracy reaches `target`.
pub fn iterations_to_target(series: &RunSeries, target: f64) -> Option<usize> {
    crossing(series, target).map(|r| r.iteration)
}

/// Cumulative (samples, cost) at the first iteration reaching `target`.
pub fn samples_and_cost_to_target(series: &RunSeries, target: f64) -> Option<(usize, f64)> {
    crossing(series, target).map(|r| (r.cumulative_samples, r.cumulative_cost))
}

fn crossing(series: &RunSeries, target: f64) -> Option<&IterationRecord> {
    series
        .records
        .iter()
        .find(|r| r.test_accuracy.is_some_and(|a| a >= target))
}

/// Serializes `series` to `path` via a temporary file and a rename.
pub fn write_series(series: &RunSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let json = serde_json::to_vec_pretty(series).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, json).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_series(path: impl AsRef<Path>) -> Result<RunSeries> {
    let path = path.as_ref();
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&raw).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}
