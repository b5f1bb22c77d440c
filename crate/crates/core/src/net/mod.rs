//! Dense feed-forward networks.
//!
//! Layer `n` computes potentials `p = y_{n-1} · Wᵀ + b` and outputs
//! `y_n = g(p)`. A forward pass over a batch records every layer's input,
//! potential and output in a [`ForwardTrace`], which the reverse pass and the
//! sensitivity estimators consume.

mod activation;
mod backward;
mod loss;

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

pub use activation::Activation;
pub use backward::GradientSet;
pub use loss::{
    argmax, cross_entropy_loss, cross_entropy_with_grad, evaluate, performance, Evaluation,
};

use crate::error::{Error, Result};
use crate::seed::{self, Stream};
use crate::tensor::{matmul_nt, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `[out_dim, in_dim]`
    pub weights: Tensor,
    /// `[out_dim]`
    pub bias: Tensor,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::Input(format!(
                "layer weights must be a matrix, got shape {:?}",
                weights.shape()
            )));
        }
        let (out_dim, in_dim) = (weights.rows(), weights.cols());
        if out_dim == 0 || in_dim == 0 {
            return Err(Error::Input("layer extents must be positive".into()));
        }
        if bias.shape() != [out_dim] {
            return Err(Error::Input(format!(
                "bias shape {:?} does not match {out_dim} neurons",
                bias.shape()
            )));
        }
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }

    /// Uniform in `[-1/sqrt(in_dim), 1/sqrt(in_dim)]` for weights and biases.
    pub fn init_uniform<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if out_dim == 0 || in_dim == 0 {
            return Err(Error::Input("layer extents must be positive".into()));
        }
        let bound = 1.0 / (in_dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound)
            .map_err(|e| Error::Input(format!("init range: {e}")))?;
        let weights: Vec<f64> = (0..in_dim * out_dim).map(|_| dist.sample(rng)).collect();
        let bias: Vec<f64> = (0..out_dim).map(|_| dist.sample(rng)).collect();
        DenseLayer::new(
            Tensor::from_vec(&[out_dim, in_dim], weights)?,
            Tensor::from_vec(&[out_dim], bias)?,
            activation,
        )
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Potentials and outputs for a `[batch, in_dim]` input.
    fn forward(&self, input: &Tensor) -> (Tensor, Tensor) {
        let mut potentials = matmul_nt(input, &self.weights);
        let bias = self.bias.data();
        for row in potentials.data_mut().chunks_exact_mut(bias.len()) {
            for (p, b) in row.iter_mut().zip(bias) {
                *p += b;
            }
        }
        let act = self.activation;
        let outputs = potentials.map(|p| act.apply(p));
        (potentials, outputs)
    }
}

/// An acyclic sequence of dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    input_dim: usize,
    layers: Vec<DenseLayer>,
    /// Seed the weights were drawn from, when they were.
    seed: Option<u64>,
}

/// Additive perturbation injected into one neuron's potential during a forward
/// pass, applied to every sample of the batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialOffset {
    pub layer: usize,
    pub neuron: usize,
    pub delta: f64,
}

/// Cached per-layer quantities of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `[batch, in_dim]` per layer.
    pub inputs: Vec<Tensor>,
    /// `[batch, out_dim]` per layer.
    pub potentials: Vec<Tensor>,
    /// `[batch, out_dim]` per layer.
    pub outputs: Vec<Tensor>,
}

impl ForwardTrace {
    pub fn network_outputs(&self) -> &Tensor {
        self.outputs.last().expect("trace of an empty network")
    }

    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, Tensor::rows)
    }
}

impl Network {
    pub fn new(input_dim: usize, layers: Vec<DenseLayer>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Input("input dimension must be positive".into()));
        }
        if layers.is_empty() {
            return Err(Error::Input("a network needs at least one layer".into()));
        }
        let mut expected = input_dim;
        for (n, layer) in layers.iter().enumerate() {
            if layer.in_dim() != expected {
                return Err(Error::Dimension {
                    layer: n,
                    expected,
                    found: layer.in_dim(),
                });
            }
            expected = layer.out_dim();
        }
        Ok(Network {
            input_dim,
            layers,
            seed: None,
        })
    }

    /// Freshly initialised network. `dims` lists every extent from the input
    /// to the output; `activations` has one entry per layer.
    pub fn seeded(dims: &[usize], activations: &[Activation], seed: u64) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::Input(format!(
                "{} extents need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                activations.len()
            )));
        }
        let mut rng = seed::rng(seed, Stream::Init, 0);
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &act)| DenseLayer::init_uniform(w[0], w[1], act, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let mut net = Network::new(dims[0], layers)?;
        net.seed = Some(seed);
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::out_dim)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Mutable access to layer parameters. Extents cannot change through it.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn set_seed(&mut self, seed: Option<u64>) {
        self.seed = seed;
    }

    /// Extents from input to output, e.g. `[784, 300, 100, 10]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.layers.iter().map(DenseLayer::out_dim))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(DenseLayer::num_params).sum()
    }

    pub fn num_nonzero_weights(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.data().iter().filter(|w| **w != 0.0).count())
            .sum()
    }

    fn check_batch(&self, batch: &Tensor) -> Result<()> {
        if batch.shape().len() != 2 {
            return Err(Error::Input(format!(
                "batch must be a matrix, got shape {:?}",
                batch.shape()
            )));
        }
        if batch.cols() != self.input_dim {
            return Err(Error::Dimension {
                layer: 0,
                expected: self.input_dim,
                found: batch.cols(),
            });
        }
        if batch.rows() == 0 {
            return Err(Error::Input("empty batch".into()));
        }
        Ok(())
    }

    pub fn forward(&self, batch: &Tensor) -> Result<(Tensor, ForwardTrace)> {
        self.forward_with_offset(batch, None)
    }

    /// Forward pass that optionally adds `offset.delta` to one neuron's
    /// potential before its activation is applied.
    pub fn forward_with_offset(
        &self,
        batch: &Tensor,
        offset: Option<PotentialOffset>,
    ) -> Result<(Tensor, ForwardTrace)> {
        self.check_batch(batch)?;
        if let Some(o) = offset {
            let ok = self
                .layers
                .get(o.layer)
                .is_some_and(|l| o.neuron < l.out_dim());
            if !ok {
                return Err(Error::Input(format!(
                    "offset target layer {} neuron {} does not exist",
                    o.layer, o.neuron
                )));
            }
        }
        let n_layers = self.layers.len();
        let mut inputs = Vec::with_capacity(n_layers);
        let mut potentials = Vec::with_capacity(n_layers);
        let mut outputs = Vec::with_capacity(n_layers);
        let mut current = batch.clone();
        for (n, layer) in self.layers.iter().enumerate() {
            let (mut p, mut y) = layer.forward(&current);
            if let Some(o) = offset.filter(|o| o.layer == n) {
                let act = layer.activation;
                for b in 0..p.rows() {
                    let v = p.at(b, o.neuron) + o.delta;
                    p.set(b, o.neuron, v);
                    y.set(b, o.neuron, act.apply(v));
                }
            }
            inputs.push(current);
            current = y.clone();
            potentials.push(p);
            outputs.push(y);
        }
        Ok((
            current,
            ForwardTrace {
                inputs,
                potentials,
                outputs,
            },
        ))
    }

    /// Network outputs without keeping a trace.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        self.check_batch(batch)?;
        let mut current = self.layers[0].forward(batch).1;
        for layer in &self.layers[1..] {
            current = layer.forward(&current).1;
        }
        Ok(current)
    }
}
