//! Sensitivity-regularized SGD with parameter pinning.
//!
//! For every unpinned weight `w_{n,i,j}` of neuron `i` in layer `n`:
//!
//! ```text
//! w ← w − η·∂L/∂w − λ·w·max(0, 1 − S_{n,i})
//! ```
//!
//! where `S` is the neuron's sensitivity under the configured estimator,
//! measured on the same mini-batch before the step. Biases only follow the
//! loss gradient. Pinned parameters are held at exactly zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{cross_entropy_with_grad, ForwardTrace, GradientSet, Network};
use crate::sensitivity::{self, Estimator};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Learning rate η.
    pub eta: f64,
    /// Sensitivity penalty strength λ.
    pub lambda: f64,
    /// Plateau waiting epochs.
    pub pwe: usize,
    /// Thresholding worsening tolerance (relative validation-loss increase).
    pub twt: f64,
    /// Validation accuracy the pruning loop must keep.
    pub target_accuracy: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub estimator: Estimator,
    /// Coefficient of the plain `w` decay used by the baseline rule.
    pub weight_decay: f64,
    /// Heavy-ball momentum on the loss gradient; 0 disables it.
    pub momentum: f64,
    pub validation_fraction: f64,
    /// Stagnation guard on the outer pruning loop.
    pub max_outer_iters: usize,
    /// Cap on training epochs across the whole pruning run.
    pub epoch_budget: Option<usize>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            eta: 0.1,
            lambda: 1e-5,
            pwe: 20,
            twt: 0.3,
            target_accuracy: 0.98,
            batch_size: 100,
            seed: 0,
            estimator: Estimator::Lower,
            weight_decay: 0.0,
            momentum: 0.0,
            validation_fraction: crate::data::DEFAULT_VALIDATION_FRACTION,
            max_outer_iters: 100,
            epoch_budget: None,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Input(what.to_string()));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad("eta must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if !(self.twt >= 0.0) {
            return bad("twt must be non-negative");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !self.target_accuracy.is_finite() || self.target_accuracy < 0.0 {
            return bad("target accuracy must be a non-negative fraction");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        Ok(())
    }
}

/// Which update the training loop applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateRule {
    /// `λ·w·S̄` penalty with the configured estimator.
    Sensitivity,
    /// The same penalty written as `λ·[w − sign(w)·(1/C)Σ_k|∂y_k/∂p·w|]·Θ(1−S)`
    /// with exact sensitivities.
    Rewritten,
    /// `weight_decay·w` on every weight, i.e. every neuron treated as fully
    /// insensitive.
    L2,
}

/// Pruned-and-frozen parameters. `true` means pinned at zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PinMask {
    pub weights: Vec<Vec<bool>>,
    pub biases: Vec<Vec<bool>>,
}

impl PinMask {
    pub fn empty(net: &Network) -> Self {
        PinMask {
            weights: net.layers().iter().map(|l| vec![false; l.weights.len()]).collect(),
            biases: net.layers().iter().map(|l| vec![false; l.bias.len()]).collect(),
        }
    }

    pub fn full(net: &Network) -> Self {
        PinMask {
            weights: net.layers().iter().map(|l| vec![true; l.weights.len()]).collect(),
            biases: net.layers().iter().map(|l| vec![true; l.bias.len()]).collect(),
        }
    }

    pub fn pinned_weights(&self) -> usize {
        self.weights.iter().flatten().filter(|p| **p).count()
    }

    pub fn pinned_total(&self) -> usize {
        self.pinned_weights() + self.biases.iter().flatten().filter(|p| **p).count()
    }

    /// Checks extents against `net` and that every pinned value is zero.
    pub fn check(&self, net: &Network) -> Result<()> {
        if self.weights.len() != net.layers().len() || self.biases.len() != net.layers().len() {
            return Err(Error::Consistency(format!(
                "mask covers {} layers, network has {}",
                self.weights.len(),
                net.layers().len()
            )));
        }
        for (n, layer) in net.layers().iter().enumerate() {
            if self.weights[n].len() != layer.weights.len() || self.biases[n].len() != layer.bias.len() {
                return Err(Error::Consistency(format!("mask extents differ at layer {n}")));
            }
            let stray = |vals: &[f64], pins: &[bool]| vals.iter().zip(pins).any(|(v, p)| *p && *v != 0.0);
            if stray(layer.weights.data(), &self.weights[n]) || stray(layer.bias.data(), &self.biases[n]) {
                return Err(Error::Consistency(format!("pinned parameter is non-zero at layer {n}")));
            }
        }
        Ok(())
    }

    /// Writes zeros into every pinned slot of `net`.
    pub fn apply(&self, net: &mut Network) {
        for (n, layer) in net.layers_mut().iter_mut().enumerate() {
            for (w, p) in layer.weights.data_mut().iter_mut().zip(&self.weights[n]) {
                if *p {
                    *w = 0.0;
                }
            }
            for (b, p) in layer.bias.data_mut().iter_mut().zip(&self.biases[n]) {
                if *p {
                    *b = 0.0;
                }
            }
        }
    }
}

/// Stateful SGD driver: counts steps for diagnostics and keeps momentum.
#[derive(Debug, Clone)]
pub struct Sgd {
    hp: Hyperparams,
    rule: UpdateRule,
    step: u64,
    velocity: Option<GradientSet>,
}

impl Sgd {
    pub fn new(hp: Hyperparams, rule: UpdateRule) -> Result<Self> {
        hp.validate()?;
        if rule == UpdateRule::Rewritten && hp.estimator != Estimator::Exact {
            return Err(Error::Input("the rewritten update needs the exact estimator".into()));
        }
        Ok(Sgd {
            hp,
            rule,
            step: 0,
            velocity: None,
        })
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn rule(&self) -> UpdateRule {
        self.rule
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update on a mini-batch; returns the batch loss before the step.
    pub fn step(&mut self, net: &mut Network, batch: &Tensor, labels: &[usize], mask: &PinMask) -> Result<f64> {
        mask.check(net)?;
        let step = self.step;
        self.step += 1;

        let (out, trace) = net.forward(batch)?;
        let (loss, out_grad) = cross_entropy_with_grad(&out, labels)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: "loss",
                layer: net.layers().len() - 1,
                step,
            });
        }
        let (grads, _) = net.backward(&trace, &out_grad)?;
        if let Some(layer) = grads.first_nonfinite() {
            return Err(Error::NonFinite {
                what: "gradient",
                layer,
                step,
            });
        }
        let penalty = self.penalty(net, &trace)?;

        let descent = if self.hp.momentum > 0.0 {
            let mu = self.hp.momentum;
            let v = self.velocity.get_or_insert_with(|| GradientSet {
                weights: grads.weights.iter().map(|g| Tensor::zeros(g.shape())).collect(),
                biases: grads.biases.iter().map(|g| Tensor::zeros(g.shape())).collect(),
            });
            for (vs, gs) in v.weights.iter_mut().zip(&grads.weights).chain(v.biases.iter_mut().zip(&grads.biases)) {
                for (vv, g) in vs.data_mut().iter_mut().zip(gs.data()) {
                    *vv = mu * *vv + g;
                }
            }
            v.clone()
        } else {
            grads
        };

        let eta = self.hp.eta;
        for (n, layer) in net.layers_mut().iter_mut().enumerate() {
            let pins = &mask.weights[n];
            let w = layer.weights.data_mut();
            let g = descent.weights[n].data();
            let pen = penalty.as_ref().map(|p| p[n].data());
            for idx in 0..w.len() {
                if pins[idx] {
                    w[idx] = 0.0;
                    continue;
                }
                let reg = pen.map_or(0.0, |p| p[idx]);
                w[idx] = w[idx] - eta * g[idx] - reg;
            }
            let bias_pins = &mask.biases[n];
            let gb = descent.biases[n].data();
            for (i, b) in layer.bias.data_mut().iter_mut().enumerate() {
                *b = if bias_pins[i] { 0.0 } else { *b - eta * gb[i] };
            }
            if !layer.weights.is_finite() || !layer.bias.is_finite() {
                return Err(Error::NonFinite {
                    what: "parameter",
                    layer: n,
                    step,
                });
            }
        }
        if let Some(v) = self.velocity.as_mut() {
            // a pinned slot must not carry momentum back into the weight
            for (n, vs) in v.weights.iter_mut().enumerate() {
                for (vv, p) in vs.data_mut().iter_mut().zip(&mask.weights[n]) {
                    if *p {
                        *vv = 0.0;
                    }
                }
            }
        }
        Ok(loss)
    }

    /// Regularization term subtracted from each weight, per layer, or `None`
    /// when the rule contributes nothing.
    fn penalty(&self, net: &Network, trace: &ForwardTrace) -> Result<Option<Vec<Tensor>>> {
        match self.rule {
            UpdateRule::L2 => {
                if self.hp.weight_decay == 0.0 {
                    return Ok(None);
                }
                let wd = self.hp.weight_decay;
                Ok(Some(net.layers().iter().map(|l| l.weights.map(|w| wd * w)).collect()))
            }
            UpdateRule::Sensitivity => {
                if self.hp.lambda == 0.0 {
                    return Ok(None);
                }
                let lambda = self.hp.lambda;
                let insens = sensitivity::insensitivity(&sensitivity::from_trace(net, trace, self.hp.estimator)?);
                Ok(Some(
                    net.layers()
                        .iter()
                        .zip(&insens.values)
                        .map(|(layer, sbar)| {
                            let mut p = layer.weights.clone();
                            let cols = layer.in_dim();
                            for (i, row) in p.data_mut().chunks_exact_mut(cols).enumerate() {
                                row.iter_mut().for_each(|w| *w *= lambda * sbar[i]);
                            }
                            p
                        })
                        .collect(),
                ))
            }
            UpdateRule::Rewritten => {
                if self.hp.lambda == 0.0 {
                    return Ok(None);
                }
                Ok(Some(rewritten_penalty(net, trace, self.hp.lambda)?))
            }
        }
    }
}

/// `λ·Ṡ` per weight, built from the per-path terms `|∂y_k/∂p_{n,i} · w_{n,i,j}|`
/// rather than from the neuron sensitivity.
fn rewritten_penalty(net: &Network, trace: &ForwardTrace, lambda: f64) -> Result<Vec<Tensor>> {
    let batch = trace.batch_size();
    let classes = net.output_dim();
    let mut per_output = Vec::with_capacity(classes);
    for k in 0..classes {
        let mut seed = Tensor::zeros(&[batch, classes]);
        for b in 0..batch {
            seed.set(b, k, 1.0);
        }
        per_output.push(net.potential_grads(trace, &seed)?);
    }
    let scale = 1.0 / (classes * batch) as f64;
    let gate_map = sensitivity::from_trace(net, trace, Estimator::Exact)?;

    let mut out = Vec::with_capacity(net.layers().len());
    for (n, layer) in net.layers().iter().enumerate() {
        let (rows, cols) = (layer.out_dim(), layer.in_dim());
        let mut p = Tensor::zeros(&[rows, cols]);
        for i in 0..rows {
            // Θ(1 − S) with Θ(0) = 0
            if 1.0 - gate_map.values[n][i] <= 0.0 {
                continue;
            }
            for j in 0..cols {
                let w = layer.weights.at(i, j);
                let mut path = 0.0;
                for grads in &per_output {
                    for b in 0..batch {
                        path += (grads[n].at(b, i) * w).abs();
                    }
                }
                let sdot = w - sign(w) * path * scale;
                p.set(i, j, lambda * sdot);
            }
        }
        out.push(p);
    }
    Ok(out)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Sensitivity-regularized step (pinning honoured).
pub fn update_step(net: &mut Network, batch: &Tensor, labels: &[usize], hp: &Hyperparams, mask: &PinMask) -> Result<f64> {
    Sgd::new(hp.clone(), UpdateRule::Sensitivity)?.step(net, batch, labels, mask)
}

/// The rewritten form of [`update_step`]; requires `hp.estimator == Exact`.
pub fn update_step_rewritten(
    net: &mut Network,
    batch: &Tensor,
    labels: &[usize],
    hp: &Hyperparams,
    mask: &PinMask,
) -> Result<f64> {
    Sgd::new(hp.clone(), UpdateRule::Rewritten)?.step(net, batch, labels, mask)
}

/// Plain weight-decay baseline step.
pub fn update_step_l2(net: &mut Network, batch: &Tensor, labels: &[usize], hp: &Hyperparams, mask: &PinMask) -> Result<f64> {
    Sgd::new(hp.clone(), UpdateRule::L2)?.step(net, batch, labels, mask)
}
