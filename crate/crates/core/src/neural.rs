//! Dense ReLU classifier with inverted dropout after every hidden layer,
//! trained with cross-entropy plus an L2 penalty on the weights and Adam.
//!
//! The network is rebuilt from scratch every active-learning iteration, so
//! everything here is a pure function of (config, data, seed).

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::seeds;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub width: usize,
    pub dropout_rate: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub class_count: usize,
}

impl ModelConfig {
    /// Two hidden layers of 256 units, dropout 0.1, Adam at 1e-4 with weight
    /// decay 1e-4, 200 epochs of minibatches of 32.
    pub fn defaults(input_dim: usize, class_count: usize) -> Self {
        Self {
            input_dim,
            hidden_layers: 2,
            width: 256,
            dropout_rate: 0.1,
            lr: 1e-4,
            weight_decay: 1e-4,
            epochs: 200,
            minibatch: 32,
            class_count,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_shape()?;
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        Ok(())
    }

    // Everything except the epoch count; `train` accepts zero epochs as a no-op.
    fn validate_shape(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout_rate {} not in [0, 1)",
                self.dropout_rate
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be positive",
                self.lr
            )));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::InvalidConfig(
                "weight_decay must be non-negative".into(),
            ));
        }
        if self.input_dim == 0 || self.width == 0 || self.class_count == 0 || self.minibatch == 0 {
            return Err(Error::InvalidConfig(
                "network dimensions and minibatch must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim];
        sizes.extend(std::iter::repeat_n(self.width, self.hidden_layers));
        sizes.push(self.class_count);
        sizes
    }
}

/// Affine layer; `weights` is `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    /// Hidden layers followed by the output layer.
    pub layers: Vec<Layer>,
    pub dropout_rate: f64,
}

/// Per-hidden-layer dropout masks for a single posterior draw. Entries are
/// either 0 or `1/(1-p)`.
pub type DropoutMasks = Vec<Array1<f64>>;

pub fn init_network(config: &ModelConfig, seed: u64) -> Network {
    let mut rng = seeds::rng(seed);
    let sizes = config.layer_sizes();
    let layers = sizes
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights =
                Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-bound..bound));
            Layer {
                weights,
                bias: Array1::zeros(fan_out),
            }
        })
        .collect();
    Network {
        layers,
        dropout_rate: config.dropout_rate,
    }
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v.max(0.0));
}

impl Network {
    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.weights.ncols()).unwrap_or(0)
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.weights.ncols())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Draws one set of inverted-dropout masks, one vector per hidden layer.
    pub fn draw_masks(&self, rng: &mut seeds::Rng) -> DropoutMasks {
        let p = self.dropout_rate;
        let keep = 1.0 / (1.0 - p);
        self.hidden_widths()
            .into_iter()
            .map(|w| {
                if p == 0.0 {
                    Array1::from_elem(w, 1.0)
                } else {
                    Array1::from_shape_simple_fn(w, || {
                        if rng.random::<f64>() < p {
                            0.0
                        } else {
                            keep
                        }
                    })
                }
            })
            .collect()
    }

    fn check_masks(&self, masks: &[Array1<f64>]) -> Result<()> {
        let widths = self.hidden_widths();
        if masks.len() != widths.len() {
            return Err(Error::Shape {
                expected: widths.len(),
                got: masks.len(),
            });
        }
        for (m, w) in masks.iter().zip(widths) {
            if m.len() != w {
                return Err(Error::Shape {
                    expected: w,
                    got: m.len(),
                });
            }
        }
        Ok(())
    }

    /// Logits for a single input. Without masks the pass is deterministic.
    pub fn forward(&self, x: &[f64], masks: Option<&[Array1<f64>]>) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.forward_batch(xs, masks)?.into_raw_vec_and_offset().0)
    }

    /// Logits for a batch of inputs (rows), with one mask set shared by all rows.
    pub fn forward_batch(
        &self,
        x: ArrayView2<f64>,
        masks: Option<&[Array1<f64>]>,
    ) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        if let Some(m) = masks {
            self.check_masks(m)?;
        }
        let n_hidden = self.layers.len() - 1;
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            if i < n_hidden {
                relu_inplace(&mut z);
                if let Some(m) = masks {
                    z *= &m[i];
                }
            }
            h = z;
        }
        Ok(h)
    }

    /// Mean cross-entropy of the batch plus `weight_decay/2 · ‖W‖²` over the
    /// weight matrices (biases are not penalised), and its gradient.
    ///
    /// `masks`, when present, holds one `batch × width` mask per hidden layer.
    pub fn loss_and_grad(
        &self,
        x: ArrayView2<f64>,
        y: &[usize],
        masks: Option<&[Array2<f64>]>,
        weight_decay: f64,
    ) -> Result<(f64, Vec<Layer>)> {
        let b = x.nrows();
        if y.len() != b {
            return Err(Error::Shape {
                expected: b,
                got: y.len(),
            });
        }
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let n_hidden = self.layers.len() - 1;
        // inputs to each layer, and pre-activations of hidden layers
        let mut inputs: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        let mut pre: Vec<Array2<f64>> = Vec::with_capacity(n_hidden);
        let mut h = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            inputs.push(h);
            if i < n_hidden {
                let mut a = z.mapv(|v| v.max(0.0));
                if let Some(m) = masks {
                    a *= &m[i];
                }
                pre.push(z);
                h = a;
            } else {
                h = z;
            }
        }

        // softmax cross-entropy
        let k = self.output_dim();
        let mut delta = h;
        let mut loss = 0.0;
        for (mut row, &label) in delta.axis_iter_mut(Axis(0)).zip(y) {
            if label >= k {
                return Err(Error::Shape {
                    expected: k,
                    got: label,
                });
            }
            let max = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[label];
            row.mapv_inplace(|v| (v - lse).exp());
            row[label] -= 1.0;
        }
        let inv_b = 1.0 / b as f64;
        loss *= inv_b;
        delta *= inv_b;
        loss += 0.5
            * weight_decay
            * self
                .layers
                .iter()
                .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>())
                .sum::<f64>();

        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let mut gw = inputs[i].t().dot(&delta);
            if weight_decay != 0.0 {
                gw.scaled_add(weight_decay, &layer.weights);
            }
            let gb = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut back = delta.dot(&layer.weights.t());
                if let Some(m) = masks {
                    back *= &m[i - 1];
                }
                Zip::from(&mut back).and(&pre[i - 1]).for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
            grads.push(Layer {
                weights: gw,
                bias: gb,
            });
        }
        grads.reverse();
        Ok((loss, grads))
    }
}

/// Adam moment accumulators, one pair of tensors per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Layer>,
    pub v: Vec<Layer>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        let zeros: Vec<Layer> = net
            .layers
            .iter()
            .map(|l| Layer::zeros(l.weights.nrows(), l.weights.ncols()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
        }
    }
}

/// Bias-corrected Adam update on one flat tensor, at step `t` (1-based).
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    let c1 = 1.0 - beta1.powi(t as i32);
    let c2 = 1.0 - beta2.powi(t as i32);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// One Adam step over every parameter of `net`.
pub fn adam_step(net: &mut Network, grads: &[Layer], state: &mut AdamState, lr: f64) {
    state.t += 1;
    let (t, b1, b2, eps) = (state.t, state.beta1, state.beta2, state.epsilon);
    for ((layer, g), (m, v)) in net
        .layers
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        adam_update(
            layer.weights.as_slice_mut().expect("contiguous"),
            g.weights.as_slice().expect("contiguous"),
            m.weights.as_slice_mut().expect("contiguous"),
            v.weights.as_slice_mut().expect("contiguous"),
            t,
            lr,
            b1,
            b2,
            eps,
        );
        adam_update(
            layer.bias.as_slice_mut().expect("contiguous"),
            g.bias.as_slice().expect("contiguous"),
            m.bias.as_slice_mut().expect("contiguous"),
            v.bias.as_slice_mut().expect("contiguous"),
            t,
            lr,
            b1,
            b2,
            eps,
        );
    }
}

/// Gathers dataset rows into an `f64` matrix.
pub fn gather_rows(dataset: &Dataset, idx: &[usize]) -> Array2<f64> {
    let mut x = Array2::zeros((idx.len(), dataset.dim));
    for (mut row, &i) in x.axis_iter_mut(Axis(0)).zip(idx) {
        for (dst, &src) in row.iter_mut().zip(dataset.row(i)) {
            *dst = src as f64;
        }
    }
    x
}

/// Trains `net` on `train_idx` for `config.epochs` epochs of shuffled
/// minibatches (the last partial batch is kept), with fresh dropout masks per
/// sample per step.
pub fn train(
    net: &Network,
    dataset: &Dataset,
    train_idx: &[usize],
    config: &ModelConfig,
    seed: u64,
) -> Result<Network> {
    config.validate_shape()?;
    if train_idx.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    if dataset.dim != net.input_dim() {
        return Err(Error::Shape {
            expected: net.input_dim(),
            got: dataset.dim,
        });
    }
    let mut net = net.clone();
    net.dropout_rate = config.dropout_rate;
    if config.epochs == 0 {
        return Ok(net);
    }
    let mut rng = seeds::rng(seed);
    let x_all = gather_rows(dataset, train_idx);
    let y_all: Vec<usize> = train_idx.iter().map(|&i| dataset.labels[i]).collect();
    let mut state = AdamState::new(&net);
    let widths = net.hidden_widths();
    let p = config.dropout_rate;
    let keep = 1.0 / (1.0 - p);
    let mut order: Vec<usize> = (0..train_idx.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.minibatch) {
            let xb = x_all.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&j| y_all[j]).collect();
            let masks: Option<Vec<Array2<f64>>> = (p > 0.0).then(|| {
                widths
                    .iter()
                    .map(|&w| {
                        Array2::from_shape_simple_fn((chunk.len(), w), || {
                            if rng.random::<f64>() < p {
                                0.0
                            } else {
                                keep
                            }
                        })
                    })
                    .collect()
            });
            let (loss, grads) =
                net.loss_and_grad(xb.view(), &yb, masks.as_deref(), config.weight_decay)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            adam_step(&mut net, &grads, &mut state, config.lr);
        }
    }
    Ok(net)
}

/// Fraction of `idx` whose deterministic-pass argmax equals the label.
pub fn deterministic_accuracy(net: &Network, dataset: &Dataset, idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Ok(0.0);
    }
    let logits = net.forward_batch(gather_rows(dataset, idx).view(), None)?;
    let correct = logits
        .axis_iter(Axis(0))
        .zip(idx)
        .filter(|(row, &i)| {
            crate::posterior::argmax(row.as_slice().expect("row")) == dataset.labels[i]
        })
        .count();
    Ok(correct as f64 / idx.len() as f64)
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    /// (fan_in, fan_out) per layer; the blob holds weights then bias for each.
    layers: Vec<(usize, usize)>,
    dropout_rate: f64,
}

/// Writes parameters as a flat little-endian `f32` blob at `path` with a JSON
/// shape header at `path.json`.
pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = CheckpointHeader {
        layers: net.layers.iter().map(|l| l.weights.dim()).collect(),
        dropout_rate: net.dropout_rate,
    };
    let header_path = path.with_extension("json");
    let json = serde_json::to_vec_pretty(&header).map_err(|e| Error::Json {
        path: header_path.clone(),
        source: e,
    })?;
    fs::write(&header_path, json).map_err(|e| Error::io(&header_path, e))?;
    let blob: Vec<u8> = net
        .layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    fs::write(path, blob).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let header_path = path.with_extension("json");
    let raw = fs::read(&header_path).map_err(|e| Error::io(&header_path, e))?;
    let header: CheckpointHeader = serde_json::from_slice(&raw).map_err(|e| Error::Json {
        path: header_path,
        source: e,
    })?;
    let blob = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected: usize = header.layers.iter().map(|&(i, o)| i * o + o).sum();
    if blob.len() != expected * 4 {
        return Err(Error::Shape {
            expected: expected * 4,
            got: blob.len(),
        });
    }
    let mut values = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    let layers = header
        .layers
        .iter()
        .map(|&(i, o)| {
            let weights = Array2::from_shape_simple_fn((i, o), || values.next().expect("sized"));
            let bias = Array1::from_shape_simple_fn(o, || values.next().expect("sized"));
            Layer { weights, bias }
        })
        .collect();
    Ok(Network {
        layers,
        dropout_rate: header.dropout_rate,
    })
}
