//! MC-dropout posterior: T stochastic forward passes, each with one mask set
//! shared by every scored sample, collected into an `M × T × K` probability
//! cube.

use std::collections::HashMap;

use ndarray::{Array2, Axis};
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::neural::{gather_rows, DropoutMasks, Network};
use crate::seeds;

// Row chunk for parallel evaluation. Fixed so results do not depend on the
// worker count.
const ROW_CHUNK: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveCube {
    /// Row-major `[m][t][k]`.
    probs: Vec<f64>,
    samples: usize,
    draws: usize,
    classes: usize,
    /// Dataset index of each cube row.
    index_map: Vec<usize>,
    position: HashMap<usize, usize>,
}

impl PredictiveCube {
    pub fn new(
        probs: Vec<f64>,
        draws: usize,
        classes: usize,
        index_map: Vec<usize>,
    ) -> Result<Self> {
        let samples = index_map.len();
        if probs.len() != samples * draws * classes {
            return Err(Error::Shape {
                expected: samples * draws * classes,
                got: probs.len(),
            });
        }
        if draws == 0 || classes == 0 {
            return Err(Error::InvalidConfig(
                "cube needs at least one draw and one class".into(),
            ));
        }
        let mut position = HashMap::with_capacity(samples);
        for (row, &idx) in index_map.iter().enumerate() {
            if position.insert(idx, row).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "sample {idx} appears twice in the cube"
                )));
            }
        }
        Ok(Self {
            probs,
            samples,
            draws,
            classes,
            index_map,
            position,
        })
    }

    /// Builds a cube and checks every `[m, t, ·]` slice is a distribution.
    pub fn from_probs(
        probs: Vec<f64>,
        draws: usize,
        classes: usize,
        index_map: Vec<usize>,
    ) -> Result<Self> {
        let cube = Self::new(probs, draws, classes, index_map)?;
        for s in cube.probs.chunks_exact(classes) {
            if let Some(&neg) = s.iter().find(|&&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::NegativeProbability(neg));
            }
            let sum: f64 = s.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidConfig(format!(
                    "probability slice sums to {sum}"
                )));
            }
        }
        Ok(cube)
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn index_map(&self) -> &[usize] {
        &self.index_map
    }

    /// Cube row holding dataset index `idx`.
    pub fn row_of(&self, idx: usize) -> Option<usize> {
        self.position.get(&idx).copied()
    }

    /// `T × K` block of one row.
    pub fn row(&self, m: usize) -> &[f64] {
        let w = self.draws * self.classes;
        &self.probs[m * w..(m + 1) * w]
    }

    pub fn slice(&self, m: usize, t: usize) -> &[f64] {
        let start = (m * self.draws + t) * self.classes;
        &self.probs[start..start + self.classes]
    }

    pub fn prob(&self, m: usize, t: usize, c: usize) -> f64 {
        self.probs[(m * self.draws + t) * self.classes + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Sub-cube over the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> PredictiveCube {
        let probs = rows
            .iter()
            .flat_map(|&m| self.row(m).iter().copied())
            .collect();
        let index_map = rows.iter().map(|&m| self.index_map[m]).collect();
        Self::new(probs, self.draws, self.classes, index_map).expect("rows are distinct")
    }
}

/// Max-shifted softmax, in place.
pub fn softmax_inplace(logits: &mut [f64]) {
    let max = logits.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
    let mut sum = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in logits.iter_mut() {
        *v /= sum;
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Draws `draws` mask sets sequentially from `seed`.
pub fn draw_mask_sets(net: &Network, draws: usize, seed: u64) -> Vec<DropoutMasks> {
    let mut rng = seeds::rng(seed);
    (0..draws).map(|_| net.draw_masks(&mut rng)).collect()
}

/// Runs `draws` stochastic passes over `indices`; draw `t` uses the same masks
/// for every sample.
pub fn sample_posterior(
    net: &Network,
    dataset: &Dataset,
    indices: &[usize],
    draws: usize,
    seed: u64,
) -> Result<PredictiveCube> {
    if draws == 0 {
        return Err(Error::InvalidConfig(
            "at least one forward pass is required".into(),
        ));
    }
    let masks = draw_mask_sets(net, draws, seed);
    sample_posterior_with_masks(net, dataset, indices, &masks)
}

/// Same as [`sample_posterior`] with explicitly supplied mask sets.
pub fn sample_posterior_with_masks(
    net: &Network,
    dataset: &Dataset,
    indices: &[usize],
    masks: &[DropoutMasks],
) -> Result<PredictiveCube> {
    let draws = masks.len();
    let k = net.output_dim();
    let blocks: Vec<Result<Vec<f64>>> = indices
        .par_chunks(ROW_CHUNK)
        .map(|chunk| {
            let x = gather_rows(dataset, chunk);
            let mut out = vec![0.0; chunk.len() * draws * k];
            for (t, m) in masks.iter().enumerate() {
                let logits: Array2<f64> = net.forward_batch(x.view(), Some(m))?;
                for (r, row) in logits.axis_iter(Axis(0)).enumerate() {
                    let dst = &mut out[(r * draws + t) * k..(r * draws + t + 1) * k];
                    dst.copy_from_slice(row.as_slice().expect("contiguous row"));
                    softmax_inplace(dst);
                }
            }
            Ok(out)
        })
        .collect();
    let mut probs = Vec::with_capacity(indices.len() * draws * k);
    for b in blocks {
        probs.extend(b?);
    }
    PredictiveCube::new(probs, draws, k, indices.to_vec())
}

/// Mean over draws, `M × K`.
pub fn predictive_mean(cube: &PredictiveCube) -> Array2<f64> {
    let (m, t, k) = (cube.samples(), cube.draws(), cube.classes());
    let mut out = Array2::zeros((m, k));
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        for s in 0..t {
            for (o, &p) in row.iter_mut().zip(cube.slice(i, s)) {
                *o += p;
            }
        }
        row.mapv_inplace(|v| v / t as f64);
    }
    out
}

/// Fraction of rows whose predictive-mean argmax equals `labels[row]`.
pub fn evaluate_accuracy(cube: &PredictiveCube, labels: &[usize]) -> Result<f64> {
    if labels.len() != cube.samples() {
        return Err(Error::Shape {
            expected: cube.samples(),
            got: labels.len(),
        });
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let mean = predictive_mean(cube);
    let correct = mean
        .axis_iter(Axis(0))
        .zip(labels)
        .filter(|(row, &l)| argmax(row.as_slice().expect("contiguous row")) == l)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}
