//! Entropies and BatchBALD batch mutual information.
//!
//! The joint predictive distribution of a partial batch is carried as a
//! `C × T` matrix `P` with `P[conf, t] = p(ŷ_conf | ω_t)`. In exact mode the
//! rows enumerate all `K^i` label configurations of the `i` selected points;
//! in sampled mode they are `n_sim` configurations drawn from the predictive
//! joint, and the joint entropy is estimated by importance weighting.
//!
//! Candidate scoring for a step reduces to one matrix product per chunk of
//! candidates: `Q = P · B / T`, where `B[t, (j, c)] = p(y_j = c | ω_t)`.
//! Entropies are in nats.

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::PredictiveCube;
use crate::seeds;

pub const DEFAULT_EXACT_CONFIG_CAP: usize = 10_000;
pub const DEFAULT_N_SIM: usize = 8_000;

// Upper bound on entries of one Q chunk.
const CHUNK_ENTRIES: usize = 1 << 21;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorerConfig {
    pub exact_config_cap: usize,
    pub n_sim: usize,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            exact_config_cap: DEFAULT_EXACT_CONFIG_CAP,
            n_sim: DEFAULT_N_SIM,
        }
    }
}

#[inline]
fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

/// Shannon entropy with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    if let Some(&neg) = p.iter().find(|&&v| v < 0.0) {
        return Err(Error::NegativeProbability(neg));
    }
    Ok(entropy_unchecked(p))
}

fn entropy_unchecked(p: &[f64]) -> f64 {
    -p.iter().map(|&v| plogp(v)).sum::<f64>()
}

/// `(1/T) Σ_t H(p[m, t, ·])`: the posterior-averaged (aleatoric) entropy.
pub fn conditional_entropy_term(cube: &PredictiveCube, m: usize) -> f64 {
    let t = cube.draws();
    (0..t)
        .map(|s| entropy_unchecked(cube.slice(m, s)))
        .sum::<f64>()
        / t as f64
}

/// Single-point BALD score: `H(mean) − mean of H`.
pub fn bald(cube: &PredictiveCube, m: usize) -> f64 {
    let (t, k) = (cube.draws(), cube.classes());
    let mut mean = vec![0.0; k];
    for s in 0..t {
        for (acc, &p) in mean.iter_mut().zip(cube.slice(m, s)) {
            *acc += p;
        }
    }
    mean.iter_mut().for_each(|v| *v /= t as f64);
    entropy_unchecked(&mean) - conditional_entropy_term(cube, m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointMode {
    Exact,
    Sampled,
}

/// Joint predictive state of an ordered partial batch (cube rows).
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    mode: JointMode,
    /// Row-major `configs × draws`; empty in sampled mode until configurations
    /// are drawn for a step.
    p: Vec<f64>,
    configs: usize,
    draws: usize,
    cond_entropy_acc: f64,
    selected: Vec<usize>,
}

impl JointState {
    /// Empty batch: a single configuration with probability one under every draw.
    pub fn empty(draws: usize) -> Self {
        Self {
            mode: JointMode::Exact,
            p: vec![1.0; draws],
            configs: 1,
            draws,
            cond_entropy_acc: 0.0,
            selected: Vec::new(),
        }
    }

    pub fn mode(&self) -> JointMode {
        self.mode
    }

    pub fn configs(&self) -> usize {
        self.configs
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn cond_entropy_acc(&self) -> f64 {
        self.cond_entropy_acc
    }

    pub fn p_matrix(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.configs, self.draws), &self.p).expect("P shape")
    }

    /// Appends cube row `m`, enumerating the product configurations.
    pub fn extend_exact(&self, cube: &PredictiveCube, m: usize, cap: usize) -> Result<JointState> {
        if self.mode != JointMode::Exact {
            return Err(Error::InvalidConfig(
                "extend_exact on a sampled joint state".into(),
            ));
        }
        let k = cube.classes();
        let t = self.draws;
        let new_configs = self.configs.saturating_mul(k);
        if new_configs > cap {
            return Err(Error::ConfigCapExceeded {
                configs: new_configs,
                cap,
            });
        }
        let mut p = vec![0.0; new_configs * t];
        for conf in 0..self.configs {
            for s in 0..t {
                let base = self.p[conf * t + s];
                let probs = cube.slice(m, s);
                for c in 0..k {
                    p[(conf * k + c) * t + s] = base * probs[c];
                }
            }
        }
        let mut selected = self.selected.clone();
        selected.push(m);
        Ok(JointState {
            mode: JointMode::Exact,
            p,
            configs: new_configs,
            draws: t,
            cond_entropy_acc: self.cond_entropy_acc + conditional_entropy_term(cube, m),
            selected,
        })
    }

    /// Appends `m`; stays exact while the configuration count fits under
    /// `cap`, otherwise drops the enumeration and switches to sampled mode.
    pub fn push(&self, cube: &PredictiveCube, m: usize, cap: usize) -> JointState {
        if self.mode == JointMode::Exact && self.configs.saturating_mul(cube.classes()) <= cap {
            return self.extend_exact(cube, m, cap).expect("cap checked");
        }
        let mut selected = self.selected.clone();
        selected.push(m);
        JointState {
            mode: JointMode::Sampled,
            p: Vec::new(),
            configs: 0,
            draws: self.draws,
            cond_entropy_acc: self.cond_entropy_acc + conditional_entropy_term(cube, m),
            selected,
        }
    }

    /// Exact joint entropy `−Σ q ln q` with `q(conf) = mean_t P[conf, t]`.
    pub fn joint_entropy_exact(&self) -> Result<f64> {
        if self.mode != JointMode::Exact {
            return Err(Error::InvalidConfig(
                "joint_entropy_exact on a sampled joint state".into(),
            ));
        }
        let t = self.draws as f64;
        Ok(-self
            .p
            .chunks_exact(self.draws)
            .map(|row| plogp(row.iter().sum::<f64>() / t))
            .sum::<f64>())
    }

    /// Batch mutual information of the selected points (exact mode only).
    pub fn mutual_information_exact(&self) -> Result<f64> {
        Ok(self.joint_entropy_exact()? - self.cond_entropy_acc)
    }

    /// Draws `n_sim` configurations of the selected points: pick a draw `t`
    /// uniformly, then each label from `p[j, t, ·]`. With nothing selected the
    /// state is a single configuration of probability one.
    pub fn sample_configurations(
        cube: &PredictiveCube,
        selected: &[usize],
        n_sim: usize,
        seed: u64,
    ) -> Result<JointState> {
        let t = cube.draws();
        let cond: f64 = selected
            .iter()
            .map(|&j| conditional_entropy_term(cube, j))
            .sum();
        if selected.is_empty() {
            let mut state = JointState::empty(t);
            state.mode = JointMode::Sampled;
            return Ok(state);
        }
        if n_sim == 0 {
            return Err(Error::InvalidConfig("n_sim must be positive".into()));
        }
        let mut rng = seeds::rng(seed);
        let mut labels = vec![0usize; selected.len()];
        let mut p = vec![0.0; n_sim * t];
        for s in 0..n_sim {
            let draw = rng.random_range(0..t);
            for (y, &j) in labels.iter_mut().zip(selected) {
                *y = sample_categorical(cube.slice(j, draw), rng.random::<f64>());
            }
            let row = &mut p[s * t..(s + 1) * t];
            for (tt, out) in row.iter_mut().enumerate() {
                *out = labels
                    .iter()
                    .zip(selected)
                    .map(|(&y, &j)| cube.prob(j, tt, y))
                    .product();
            }
        }
        Ok(JointState {
            mode: JointMode::Sampled,
            p,
            configs: n_sim,
            draws: t,
            cond_entropy_acc: cond,
            selected: selected.to_vec(),
        })
    }

    /// Importance-weighted estimate of the joint entropy of the drawn
    /// configurations extended by candidate row `m`:
    /// `−(1/S) Σ_s Σ_c (q_sc / p̂_s) ln q_sc`.
    pub fn joint_entropy_sampled(&self, cube: &PredictiveCube, m: usize) -> Result<f64> {
        if self.configs == 0 {
            return Err(Error::InvalidConfig("no configurations drawn".into()));
        }
        let weights = self.importance_weights()?;
        Ok(joint_entropies(&self.p_matrix(), &weights, cube, &[m])[0])
    }

    fn importance_weights(&self) -> Result<Vec<f64>> {
        match self.mode {
            JointMode::Exact => Ok(vec![1.0; self.configs]),
            JointMode::Sampled => {
                let s = self.configs as f64;
                let t = self.draws as f64;
                self.p
                    .chunks_exact(self.draws)
                    .enumerate()
                    .map(|(i, row)| {
                        let p_hat = row.iter().sum::<f64>() / t;
                        if p_hat > 0.0 {
                            Ok(1.0 / (s * p_hat))
                        } else {
                            Err(Error::ImpossibleConfiguration(i))
                        }
                    })
                    .collect()
            }
        }
    }
}

fn sample_categorical(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (c, &v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return c;
        }
    }
    // rounding left u above the cumulative sum: take the last class with mass
    p.iter().rposition(|&v| v > 0.0).unwrap_or(p.len() - 1)
}

/// `−Σ_conf w_conf Σ_c q ln q` for every candidate, with `q = P · B / T`.
fn joint_entropies(
    p: &ArrayView2<f64>,
    weights: &[f64],
    cube: &PredictiveCube,
    candidates: &[usize],
) -> Vec<f64> {
    let (configs, t) = p.dim();
    let k = cube.classes();
    let per_chunk = (CHUNK_ENTRIES / (configs * k).max(1)).clamp(1, 256);
    let inv_t = 1.0 / t as f64;
    candidates
        .par_chunks(per_chunk)
        .flat_map_iter(|chunk| {
            let mut b = Array2::<f64>::zeros((t, chunk.len() * k));
            for (j, &m) in chunk.iter().enumerate() {
                for s in 0..t {
                    for (c, &v) in cube.slice(m, s).iter().enumerate() {
                        b[[s, j * k + c]] = v;
                    }
                }
            }
            let q = p.dot(&b);
            let mut h = vec![0.0; chunk.len()];
            for (row, &w) in q.rows().into_iter().zip(weights) {
                let row = row.to_slice().expect("contiguous");
                for (j, hj) in h.iter_mut().enumerate() {
                    let s: f64 = row[j * k..(j + 1) * k]
                        .iter()
                        .map(|&v| plogp(v * inv_t))
                        .sum();
                    *hj -= w * s;
                }
            }
            h
        })
        .collect()
}

/// Scores of the candidate rows, each `I(y_sel, y_x; ω)` for the current
/// selection extended by `x`.
///
/// The exact path is used while `K^(i+1)` fits under the cap; otherwise one
/// set of `n_sim` configurations is drawn from `seed` and shared by every
/// candidate.
pub fn score_candidates(
    state: &JointState,
    cube: &PredictiveCube,
    candidates: &[usize],
    scorer: &ScorerConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let k = cube.classes();
    let exact = state.mode == JointMode::Exact
        && state.configs.saturating_mul(k) <= scorer.exact_config_cap;
    let sampled;
    let source = if exact {
        state
    } else {
        sampled = JointState::sample_configurations(cube, &state.selected, scorer.n_sim, seed)?;
        &sampled
    };
    let weights = source.importance_weights()?;
    let joint = joint_entropies(&source.p_matrix(), &weights, cube, candidates);
    Ok(joint
        .into_iter()
        .zip(candidates)
        .map(|(h, &m)| h - (source.cond_entropy_acc + conditional_entropy_term(cube, m)))
        .collect())
}

/// Batch mutual information of an ordered set of cube rows, exact when the
/// joint fits under the cap and sampled otherwise.
pub fn batch_mutual_information(
    cube: &PredictiveCube,
    rows: &[usize],
    scorer: &ScorerConfig,
    seed: u64,
) -> Result<f64> {
    let Some((&last, head)) = rows.split_last() else {
        return Ok(0.0);
    };
    let mut state = JointState::empty(cube.draws());
    for &m in head {
        state = state.push(cube, m, scorer.exact_config_cap);
    }
    Ok(score_candidates(&state, cube, &[last], scorer, seed)?[0])
}
