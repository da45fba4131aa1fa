//! Batch selection under a per-batch budget.
//!
//! * Dynamic thresholding: at step `i` only candidates whose marginal cost is
//!   at most `remaining / (n_max − (i − 1))` compete. When no candidate passes
//!   the threshold but some still fit the remaining budget, the step is
//!   skipped and the threshold is spread over one fewer remaining step.
//! * Greedy: every candidate that fits the remaining budget competes.
//! * Random: uniform draw among the candidates that fit the remaining budget.
//! * Unconstrained BatchBALD: greedy with no costs and an infinite budget.
//!
//! All scored strategies stop early once nothing fits the remaining budget.
//! Argmax ties go to the lowest dataset index.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::acquisition::{score_candidates, JointState, ScorerConfig};
use crate::cost::{CostModel, TourContext};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::posterior::PredictiveCube;
use crate::seeds;

/// A cost amount that may be infinite. Serialized as a JSON number, or the
/// string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Budget(pub f64);

impl Budget {
    pub const INFINITE: Budget = Budget(f64::INFINITY);

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for Budget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "Inf" | "INF" => Ok(Budget::INFINITE),
            v => v
                .parse::<f64>()
                .map(Budget)
                .map_err(|_| Error::InvalidConfig(format!("invalid budget {s:?}"))),
        }
    }
}

impl Serialize for Budget {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Budget {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Budget(v)),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Threshold,
    Greedy,
    Random,
    #[serde(rename = "batchbald")]
    BatchBaldUnconstrained,
}

impl StrategyKind {
    pub fn cli_name(self) -> &'static str {
        match self {
            StrategyKind::Threshold => "threshold",
            StrategyKind::Greedy => "greedy",
            StrategyKind::Random => "random",
            StrategyKind::BatchBaldUnconstrained => "batchbald",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(StrategyKind::Threshold),
            "greedy" => Ok(StrategyKind::Greedy),
            "random" => Ok(StrategyKind::Random),
            "batchbald" => Ok(StrategyKind::BatchBaldUnconstrained),
            other => Err(Error::InvalidConfig(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub n_max: usize,
    pub budget: Budget,
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_max == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.budget.0.is_nan() || self.budget.0 <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "budget {} must be positive",
                self.budget
            )));
        }
        Ok(())
    }
}

/// What happened at one batch step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub candidate_count: usize,
    pub feasible_count: usize,
    pub chosen: Option<usize>,
    pub score: Option<f64>,
    pub marginal_cost: Option<f64>,
    pub threshold: Option<Budget>,
    pub skipped: bool,
    pub early_return: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOutcome {
    pub selected: Vec<usize>,
    pub step_costs: Vec<f64>,
    pub initial_budget: Budget,
    pub remaining_budget: Budget,
    /// Score of the last accepted step, i.e. the batch mutual information.
    /// `None` for random selection.
    pub mutual_information: Option<f64>,
    pub steps: Vec<StepRecord>,
}

impl BatchOutcome {
    pub fn total_cost(&self) -> f64 {
        self.step_costs.iter().sum()
    }

    pub fn early_return(&self) -> bool {
        self.steps.iter().any(|s| s.early_return)
    }

    pub fn skipped_steps(&self) -> usize {
        self.steps.iter().filter(|s| s.skipped).count()
    }
}

/// Inputs shared by the scored strategies.
#[derive(Debug, Clone, Copy)]
pub struct SelectionInputs<'a> {
    pub cube: &'a PredictiveCube,
    pub dataset: &'a Dataset,
    pub cost: &'a CostModel,
    pub scorer: ScorerConfig,
}

fn sorted_pool(pool: &[usize]) -> Vec<usize> {
    let mut v = pool.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

fn check_args(budget: Budget, n_max: usize) -> Result<()> {
    StrategyConfig {
        kind: StrategyKind::Greedy,
        n_max,
        budget,
    }
    .validate()
}

fn select_scored(
    inputs: &SelectionInputs<'_>,
    pool: &[usize],
    budget: Budget,
    n_max: usize,
    seed: u64,
    thresholding: bool,
) -> Result<BatchOutcome> {
    check_args(budget, n_max)?;
    let SelectionInputs {
        cube,
        dataset,
        cost,
        scorer,
    } = *inputs;
    let mut remaining = sorted_pool(pool);
    let rows: Vec<usize> = remaining
        .iter()
        .map(|&i| {
            cube.row_of(i)
                .ok_or_else(|| Error::InvalidConfig(format!("pool sample {i} is not in the cube")))
        })
        .collect::<Result<_>>()?;
    let mut row_of: std::collections::HashMap<usize, usize> =
        remaining.iter().copied().zip(rows).collect();

    let mut state = JointState::empty(cube.draws());
    let mut tour = TourContext::new();
    let mut left = budget.0;
    let mut threshold = left / n_max as f64;
    let mut out = BatchOutcome {
        selected: Vec::new(),
        step_costs: Vec::new(),
        initial_budget: budget,
        remaining_budget: budget,
        mutual_information: None,
        steps: Vec::new(),
    };

    for step in 1..=n_max {
        let costs = cost.marginal_costs(&tour, &remaining, dataset)?;
        let feasible_count = costs.iter().filter(|&&c| c <= left).count();
        let mut record = StepRecord {
            step,
            candidate_count: remaining.len(),
            feasible_count,
            chosen: None,
            score: None,
            marginal_cost: None,
            threshold: thresholding.then_some(Budget(threshold)),
            skipped: false,
            early_return: false,
        };
        if feasible_count == 0 {
            record.early_return = true;
            out.steps.push(record);
            break;
        }
        let limit = if thresholding { threshold } else { left };
        let eligible: Vec<(usize, f64)> = remaining
            .iter()
            .copied()
            .zip(costs)
            .filter(|&(_, c)| c <= limit)
            .collect();
        if eligible.is_empty() {
            record.skipped = true;
            out.steps.push(record);
            if step < n_max {
                threshold = left / (n_max - step) as f64;
            }
            continue;
        }

        let cand_rows: Vec<usize> = eligible.iter().map(|(i, _)| row_of[i]).collect();
        let scores = score_candidates(
            &state,
            cube,
            &cand_rows,
            &scorer,
            seeds::sub_seed(seed, step as u64),
        )?;
        let mut best = 0;
        for (j, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] || (scores[best].is_nan() && !s.is_nan()) {
                best = j;
            }
        }
        let (chosen, c) = eligible[best];
        left -= c;
        state = state.push(cube, cand_rows[best], scorer.exact_config_cap);
        tour.advance(chosen);
        remaining.retain(|&i| i != chosen);
        row_of.remove(&chosen);
        out.selected.push(chosen);
        out.step_costs.push(c);
        out.mutual_information = Some(scores[best]);
        record.chosen = Some(chosen);
        record.score = Some(scores[best]);
        record.marginal_cost = Some(c);
        out.steps.push(record);
        if thresholding && step < n_max {
            threshold = left / (n_max - step) as f64;
        }
    }
    out.remaining_budget = Budget(left);
    Ok(out)
}

/// Dynamic-thresholding selection.
pub fn select_batch_threshold(
    inputs: &SelectionInputs<'_>,
    pool: &[usize],
    budget: Budget,
    n_max: usize,
    seed: u64,
) -> Result<BatchOutcome> {
    select_scored(inputs, pool, budget, n_max, seed, true)
}

/// Budget-limited greedy selection.
pub fn select_batch_greedy(
    inputs: &SelectionInputs<'_>,
    pool: &[usize],
    budget: Budget,
    n_max: usize,
    seed: u64,
) -> Result<BatchOutcome> {
    select_scored(inputs, pool, budget, n_max, seed, false)
}

/// Greedy BatchBALD with no cost model and no budget.
pub fn select_batch_unconstrained(
    cube: &PredictiveCube,
    dataset: &Dataset,
    pool: &[usize],
    n_max: usize,
    scorer: ScorerConfig,
    seed: u64,
) -> Result<BatchOutcome> {
    let none = CostModel::none();
    let inputs = SelectionInputs {
        cube,
        dataset,
        cost: &none,
        scorer,
    };
    select_scored(&inputs, pool, Budget::INFINITE, n_max, seed, false)
}

/// Uniform draws among budget-feasible candidates.
pub fn select_batch_random(
    dataset: &Dataset,
    pool: &[usize],
    cost: &CostModel,
    budget: Budget,
    n_max: usize,
    seed: u64,
) -> Result<BatchOutcome> {
    check_args(budget, n_max)?;
    let mut rng = seeds::rng(seed);
    let mut remaining = sorted_pool(pool);
    let mut tour = TourContext::new();
    let mut left = budget.0;
    let mut out = BatchOutcome {
        selected: Vec::new(),
        step_costs: Vec::new(),
        initial_budget: budget,
        remaining_budget: budget,
        mutual_information: None,
        steps: Vec::new(),
    };
    for step in 1..=n_max {
        let costs = cost.marginal_costs(&tour, &remaining, dataset)?;
        let feasible: Vec<(usize, f64)> = remaining
            .iter()
            .copied()
            .zip(costs)
            .filter(|&(_, c)| c <= left)
            .collect();
        let mut record = StepRecord {
            step,
            candidate_count: remaining.len(),
            feasible_count: feasible.len(),
            chosen: None,
            score: None,
            marginal_cost: None,
            threshold: None,
            skipped: false,
            early_return: false,
        };
        if feasible.is_empty() {
            record.early_return = true;
            out.steps.push(record);
            break;
        }
        let (chosen, c) = feasible[rng.random_range(0..feasible.len())];
        left -= c;
        tour.advance(chosen);
        remaining.retain(|&i| i != chosen);
        out.selected.push(chosen);
        out.step_costs.push(c);
        record.chosen = Some(chosen);
        record.marginal_cost = Some(c);
        out.steps.push(record);
    }
    out.remaining_budget = Budget(left);
    Ok(out)
}

/// Dispatches on `config.kind`.
pub fn select_batch(
    config: &StrategyConfig,
    inputs: &SelectionInputs<'_>,
    pool: &[usize],
    seed: u64,
) -> Result<BatchOutcome> {
    config.validate()?;
    match config.kind {
        StrategyKind::Threshold => {
            select_batch_threshold(inputs, pool, config.budget, config.n_max, seed)
        }
        StrategyKind::Greedy => {
            select_batch_greedy(inputs, pool, config.budget, config.n_max, seed)
        }
        StrategyKind::Random => select_batch_random(
            inputs.dataset,
            pool,
            inputs.cost,
            config.budget,
            config.n_max,
            seed,
        ),
        StrategyKind::BatchBaldUnconstrained => select_batch_unconstrained(
            inputs.cube,
            inputs.dataset,
            pool,
            config.n_max,
            inputs.scorer,
            seed,
        ),
    }
}
