//! Reference implementations written independently of the library kernels.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serene_core::{Activation, Dataset, DenseLayer, Network, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn act(a: Activation, p: f64) -> f64 {
    match a {
        Activation::Relu => p.max(0.0),
        Activation::Sigmoid => 1.0 / (1.0 + (-p).exp()),
        Activation::Identity => p,
    }
}

/// Plain triple-loop forward pass of one sample, with an optional additive
/// offset on the potential of neuron `(layer, neuron)`.
pub fn forward_one(net: &Network, x: &[f64], offset: Option<(usize, usize, f64)>) -> Vec<f64> {
    let mut h = x.to_vec();
    for (n, layer) in net.layers().iter().enumerate() {
        let (out, inp) = (layer.out_dim(), layer.in_dim());
        let w = layer.weights.data();
        let mut next = vec![0.0; out];
        for i in 0..out {
            let mut p = layer.bias.data()[i];
            for j in 0..inp {
                p += w[i * inp + j] * h[j];
            }
            if let Some((ln, li, d)) = offset {
                if ln == n && li == i {
                    p += d;
                }
            }
            next[i] = act(layer.activation, p);
        }
        h = next;
    }
    h
}

/// Mean softmax cross-entropy computed directly from the definition.
pub fn loss(net: &Network, data: &Dataset) -> f64 {
    let dim = data.dim();
    let mut total = 0.0;
    for (b, &label) in data.labels.iter().enumerate() {
        let y = forward_one(net, &data.features.data()[b * dim..(b + 1) * dim], None);
        let m = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = y.iter().map(|v| (v - m).exp()).sum();
        total += -(y[label] - m - z.ln());
    }
    total / data.len() as f64
}

pub fn accuracy(net: &Network, data: &Dataset) -> f64 {
    let dim = data.dim();
    let mut right = 0;
    for (b, &label) in data.labels.iter().enumerate() {
        let y = forward_one(net, &data.features.data()[b * dim..(b + 1) * dim], None);
        let mut best = 0;
        for k in 1..y.len() {
            if y[k] > y[best] {
                best = k;
            }
        }
        if best == label {
            right += 1;
        }
    }
    right as f64 / data.len() as f64
}

/// Central-difference estimate of `(1/C) Σ_k |∂y_k/∂p|` for every neuron,
/// averaged over the rows of `x`.
pub fn fd_sensitivity(net: &Network, x: &Tensor, eps: f64) -> Vec<Vec<f64>> {
    let dim = x.cols();
    let classes = net.output_dim();
    net.layers()
        .iter()
        .enumerate()
        .map(|(n, layer)| {
            (0..layer.out_dim())
                .map(|i| {
                    let mut acc = 0.0;
                    for b in 0..x.rows() {
                        let row = &x.data()[b * dim..(b + 1) * dim];
                        let up = forward_one(net, row, Some((n, i, eps)));
                        let down = forward_one(net, row, Some((n, i, -eps)));
                        acc += up.iter().zip(&down).map(|(u, d)| ((u - d) / (2.0 * eps)).abs()).sum::<f64>()
                            / classes as f64;
                    }
                    acc / x.rows() as f64
                })
                .collect()
        })
        .collect()
}

pub fn pick_activation(r: &mut impl Rng) -> Activation {
    [Activation::Relu, Activation::Sigmoid, Activation::Identity][r.random_range(0..3)]
}

/// Random dense net with `layers` layers of width ≤ `max_width`, mixed hidden
/// activations and an identity output.
pub fn random_net(r: &mut impl Rng, layers: usize, max_width: usize, scale: f64) -> Network {
    let mut dims = vec![r.random_range(1..=max_width)];
    for _ in 0..layers {
        dims.push(r.random_range(1..=max_width));
    }
    let built = dims
        .windows(2)
        .enumerate()
        .map(|(n, w)| {
            let weights = Tensor::from_vec(&[w[1], w[0]], (0..w[0] * w[1]).map(|_| r.random_range(-scale..scale)).collect()).unwrap();
            let bias = Tensor::from_vec(&[w[1]], (0..w[1]).map(|_| r.random_range(-0.5..0.5)).collect()).unwrap();
            let a = if n + 1 == layers { Activation::Identity } else { pick_activation(r) };
            DenseLayer::new(weights, bias, a).unwrap()
        })
        .collect();
    Network::new(dims[0], built).unwrap()
}

pub fn random_inputs(r: &mut impl Rng, rows: usize, dim: usize) -> Tensor {
    Tensor::from_vec(&[rows, dim], (0..rows * dim).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn random_labels(r: &mut impl Rng, rows: usize, classes: usize) -> Vec<usize> {
    (0..rows).map(|_| r.random_range(0..classes)).collect()
}
