#![allow(dead_code)]

use std::collections::BTreeMap;

use conbatch::cost::{haversine, CostModel};
use conbatch::data::{Dataset, GeoPoint, SplitState};
use conbatch::neural::{init_network, Layer, ModelConfig, Network};
use conbatch::posterior::PredictiveCube;
use conbatch::seeds::{self, Rng};
use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

/// Random cube with `m` rows; every slice is a normalized vector of
/// exponential draws, with an occasional exact zero.
pub fn random_cube(rng: &mut Rng, m: usize, t: usize, k: usize) -> PredictiveCube {
    let mut probs = Vec::with_capacity(m * t * k);
    for _ in 0..m * t {
        let mut v: Vec<f64> = (0..k)
            .map(|_| {
                if rng.random::<f64>() < 0.05 {
                    0.0
                } else {
                    -rng.random::<f64>().max(1e-12).ln()
                }
            })
            .collect();
        if v.iter().all(|&x| x == 0.0) {
            v[0] = 1.0;
        }
        let s: f64 = v.iter().sum();
        probs.extend(v.iter().map(|x| x / s));
    }
    PredictiveCube::from_probs(probs, t, k, (0..m).collect()).unwrap()
}

pub fn seeded_cube(seed: u64, m: usize, t: usize, k: usize) -> PredictiveCube {
    random_cube(&mut seeds::rng(seed), m, t, k)
}

fn h(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Joint entropy of the labels of `rows`, enumerating all `K^n` outcomes.
pub fn brute_joint_entropy(cube: &PredictiveCube, rows: &[usize]) -> f64 {
    let (t, k) = (cube.draws(), cube.classes());
    let n = rows.len();
    let total = k.pow(n as u32);
    let mut out = 0.0;
    let mut labels = vec![0usize; n];
    for code in 0..total {
        let mut c = code;
        for y in labels.iter_mut() {
            *y = c % k;
            c /= k;
        }
        let mut q = 0.0;
        for s in 0..t {
            let mut prod = 1.0;
            for (&j, &y) in rows.iter().zip(&labels) {
                prod *= cube.prob(j, s, y);
            }
            q += prod;
        }
        q /= t as f64;
        if q > 0.0 {
            out -= q * q.ln();
        }
    }
    out
}

/// Sum over rows of the draw-averaged entropy.
pub fn brute_conditional(cube: &PredictiveCube, rows: &[usize]) -> f64 {
    rows.iter()
        .map(|&j| (0..cube.draws()).map(|s| h(cube.slice(j, s))).sum::<f64>() / cube.draws() as f64)
        .sum()
}

pub fn brute_mi(cube: &PredictiveCube, rows: &[usize]) -> f64 {
    brute_joint_entropy(cube, rows) - brute_conditional(cube, rows)
}

/// Dataset of `points` with zero embeddings, labels cycling over `k`.
pub fn geo_dataset(points: &[(f64, f64)], area_id: Option<&[u32]>, k: usize) -> Dataset {
    let n = points.len();
    Dataset {
        dim: 1,
        embeddings: vec![0.0; n],
        labels: (0..n).map(|i| i % k).collect(),
        geoloc: points.iter().map(|&(a, b)| GeoPoint::new(a, b)).collect(),
        area_id: match area_id {
            Some(a) => a.iter().map(|&x| Some(x)).collect(),
            None => vec![None; n],
        },
        class_count: k,
        class_names: (0..k).map(|c| format!("c{c}")).collect(),
        ids: (0..n).map(|i| format!("s{i}")).collect(),
    }
}

/// `n` points uniform in a small box around Rotterdam.
pub fn random_points(rng: &mut Rng, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|_| {
            (
                51.90 + 0.05 * rng.random::<f64>(),
                4.40 + 0.10 * rng.random::<f64>(),
            )
        })
        .collect()
}

pub fn area_map(pairs: &[(u32, f64)]) -> BTreeMap<u32, f64> {
    pairs.iter().copied().collect()
}

/// Second, independent great-circle formula (atan2 form of the haversine).
pub fn great_circle_oracle(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (p1, p2) = (a.0.to_radians(), b.0.to_radians());
    let dl = (b.1 - a.1).to_radians();
    let y = ((p2.cos() * dl.sin()).powi(2)
        + (p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos()).powi(2))
    .sqrt();
    let x = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
    6_371_000.0 * y.atan2(x)
}

pub fn split_all_pool(n: usize) -> SplitState {
    SplitState::new(vec![], vec![], (0..n).collect(), n).unwrap()
}

/// Four candidates, K = 2, T = 4, disagreement decreasing from A to D.
pub fn fixture_cube() -> PredictiveCube {
    let rows = [
        [[0.95, 0.05], [0.05, 0.95], [0.9, 0.1], [0.2, 0.8]],
        [[0.8, 0.2], [0.8, 0.2], [0.1, 0.9], [0.3, 0.7]],
        [[0.6, 0.4], [0.3, 0.7], [0.5, 0.5], [0.7, 0.3]],
        [[0.55, 0.45], [0.5, 0.5], [0.45, 0.55], [0.5, 0.5]],
    ];
    let probs: Vec<f64> = rows
        .iter()
        .flat_map(|r| r.iter().flatten().copied())
        .collect();
    PredictiveCube::from_probs(probs, 4, 2, vec![0, 1, 2, 3]).unwrap()
}

/// Costs A 12, B 30, C 25, D 8 through one area per candidate.
pub fn fixture_dataset() -> (Dataset, CostModel) {
    let ds = geo_dataset(&[(51.9, 4.4); 4], Some(&[0, 1, 2, 3]), 2);
    let model = CostModel::area(area_map(&[(0, 12.0), (1, 30.0), (2, 25.0), (3, 8.0)])).unwrap();
    (ds, model)
}

/// Tour length rebuilt from the geolocations of the selected points.
pub fn reconstructed_tour(ds: &Dataset, order: &[usize], closed: bool) -> f64 {
    let d = |a: usize, b: usize| haversine(ds.geoloc[a], ds.geoloc[b]);
    let mut total: f64 = order.windows(2).map(|w| d(w[0], w[1])).sum();
    if closed && order.len() > 1 {
        total += d(*order.last().unwrap(), order[0]);
    }
    total
}

pub fn flat_params(net: &Network) -> Vec<f64> {
    net.layers
        .iter()
        .flat_map(|l| {
            l.weights
                .iter()
                .chain(l.bias.iter())
                .copied()
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn set_param(net: &mut Network, mut idx: usize, value: f64) {
    for l in &mut net.layers {
        let nw = l.weights.len();
        if idx < nw {
            l.weights.as_slice_mut().unwrap()[idx] = value;
            return;
        }
        idx -= nw;
        let nb = l.bias.len();
        if idx < nb {
            l.bias[idx] = value;
            return;
        }
        idx -= nb;
    }
    panic!("parameter index out of range");
}

pub fn flat_grads(grads: &[Layer]) -> Vec<f64> {
    grads
        .iter()
        .flat_map(|l| {
            l.weights
                .iter()
                .chain(l.bias.iter())
                .copied()
                .collect::<Vec<_>>()
        })
        .collect()
}

// smallest |pre-activation| over every hidden unit and input row
pub fn kink_margin(net: &Network, x: &Array2<f64>) -> f64 {
    let mut h = x.clone();
    let mut margin = f64::INFINITY;
    for l in &net.layers[..net.layers.len() - 1] {
        let z = h.dot(&l.weights) + &l.bias;
        margin = margin.min(z.iter().fold(f64::INFINITY, |a, &v| a.min(v.abs())));
        h = z.mapv(|v| v.max(0.0));
    }
    margin
}

/// Max relative error between backprop and central differences on a random
/// 3-3-2 net, retrying instances whose ReLU inputs sit within 1e-2 of a kink.
pub fn gradient_check(seed: u64) -> f64 {
    let mut rng = seeds::rng(seed);
    loop {
        let mut net = init_network(&tiny_config(3, 1, 3, 2), rng.random());
        for l in &mut net.layers {
            l.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let x = Array2::from_shape_simple_fn((4, 3), || StandardNormal.sample(&mut rng));
        let y: Vec<usize> = (0..4).map(|_| rng.random_range(0..2)).collect();
        if kink_margin(&net, &x) < 1e-2 {
            continue;
        }
        let wd = 1e-3;
        let (_, grads) = net.loss_and_grad(x.view(), &y, None, wd).unwrap();
        let analytic = flat_grads(&grads);
        let base = flat_params(&net);
        let h = 1e-3;
        let mut worst: f64 = 0.0;
        for (i, &a) in analytic.iter().enumerate() {
            let mut plus = net.clone();
            set_param(&mut plus, i, base[i] + h);
            let mut minus = net.clone();
            set_param(&mut minus, i, base[i] - h);
            let lp = plus.loss_and_grad(x.view(), &y, None, wd).unwrap().0;
            let lm = minus.loss_and_grad(x.view(), &y, None, wd).unwrap().0;
            let numeric = (lp - lm) / (2.0 * h);
            let denom = a.abs().max(numeric.abs());
            if denom > 1e-10 {
                worst = worst.max((a - numeric).abs() / denom);
            }
        }
        return worst;
    }
}

pub fn tiny_config(input: usize, hidden: usize, width: usize, k: usize) -> ModelConfig {
    ModelConfig {
        input_dim: input,
        hidden_layers: hidden,
        width,
        dropout_rate: 0.0,
        lr: 1e-3,
        weight_decay: 1e-3,
        epochs: 1,
        minibatch: 32,
        class_count: k,
    }
}
