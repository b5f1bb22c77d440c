//! Per-neuron sensitivity of the network outputs to post-synaptic potentials.
//!
//! For neuron `i` of layer `n` and a single sample, the exact sensitivity is
//! `S = (1/C) Σ_k |∂y_{N,k}/∂p_{n,i}|`. Three cheaper estimators bracket or
//! approximate it:
//!
//! | estimator | per-sample value                                  | cost           |
//! |-----------|---------------------------------------------------|----------------|
//! | `Exact`   | `(1/C) Σ_k |∂y_k/∂p|`                              | `C` backward   |
//! | `Lower`   | `(1/C) |Σ_k ∂y_k/∂p|`  (triangle inequality)       | 1 backward     |
//! | `Upper`   | chained absolute Jacobians, no sign cancellation  | 1 abs backward |
//! | `Local`   | `|g'(p)|`, the neuron's own slope                 | none           |
//!
//! Values are computed per sample and then averaged over the batch, so the
//! ordering `Lower ≤ Exact ≤ Upper` holds both per sample and on average.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{ForwardTrace, Network};
use crate::tensor::{matmul_nn, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Exact,
    Lower,
    Upper,
    Local,
}

impl Estimator {
    pub const ALL: [Estimator; 4] = [
        Estimator::Exact,
        Estimator::Lower,
        Estimator::Upper,
        Estimator::Local,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Exact => "exact",
            Estimator::Lower => "lower",
            Estimator::Upper => "upper",
            Estimator::Local => "local",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Estimator::Exact),
            "lower" | "lb" => Ok(Estimator::Lower),
            "upper" | "ub" => Ok(Estimator::Upper),
            "local" => Ok(Estimator::Local),
            other => Err(Error::Input(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Batch-averaged per-neuron values, one vector per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMap {
    pub estimator: Estimator,
    pub values: Vec<Vec<f64>>,
    pub batch_size: usize,
    pub outputs: usize,
}

impl SensitivityMap {
    pub fn layer(&self, n: usize) -> &[f64] {
        &self.values[n]
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().flatten().copied()
    }

    pub fn num_neurons(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn mean(&self) -> f64 {
        let n = self.num_neurons();
        if n == 0 {
            0.0
        } else {
            self.iter().sum::<f64>() / n as f64
        }
    }
}

/// Per-sample values `[batch, out_dim]` for every layer.
pub fn per_sample(net: &Network, trace: &ForwardTrace, estimator: Estimator) -> Result<Vec<Tensor>> {
    let batch = net.check_trace(trace)?;
    let classes = net.output_dim();
    let inv_c = 1.0 / classes as f64;
    match estimator {
        Estimator::Exact => {
            let mut acc: Vec<Tensor> = trace.potentials.iter().map(|p| Tensor::zeros(p.shape())).collect();
            for k in 0..classes {
                let mut seed = Tensor::zeros(&[batch, classes]);
                for b in 0..batch {
                    seed.set(b, k, 1.0);
                }
                let grads = net.potential_grads(trace, &seed)?;
                for (a, g) in acc.iter_mut().zip(&grads) {
                    for (av, gv) in a.data_mut().iter_mut().zip(g.data()) {
                        *av += gv.abs();
                    }
                }
            }
            for a in &mut acc {
                a.data_mut().iter_mut().for_each(|v| *v *= inv_c);
            }
            Ok(acc)
        }
        Estimator::Lower => {
            let seed = Tensor::filled(&[batch, classes], inv_c);
            let grads = net.potential_grads(trace, &seed)?;
            Ok(grads.into_iter().map(|g| g.map(f64::abs)).collect())
        }
        Estimator::Upper => {
            // Reverse accumulation of the absolute chain: the row vector
            // (1/C)·1ᵀ·|J_N|·…·|J_{n+1}| evaluated at layer n, times |g'(p_n)|.
            let n_layers = net.layers().len();
            let mut out = vec![Tensor::zeros(&[0]); n_layers];
            let mut upstream = Tensor::filled(&[batch, classes], inv_c);
            for n in (0..n_layers).rev() {
                let layer = &net.layers()[n];
                let act = layer.activation;
                let mut s = upstream;
                for (v, &p) in s.data_mut().iter_mut().zip(trace.potentials[n].data()) {
                    *v *= act.derivative(p).abs();
                }
                upstream = if n > 0 {
                    matmul_nn(&s, &layer.weights.map(f64::abs))
                } else {
                    Tensor::zeros(&[0])
                };
                out[n] = s;
            }
            Ok(out)
        }
        Estimator::Local => Ok(net
            .layers()
            .iter()
            .zip(&trace.potentials)
            .map(|(layer, p)| {
                let act = layer.activation;
                p.map(|v| act.derivative(v).abs())
            })
            .collect()),
    }
}

/// Batch-averaged sensitivity from an existing forward trace.
pub fn from_trace(net: &Network, trace: &ForwardTrace, estimator: Estimator) -> Result<SensitivityMap> {
    let samples = per_sample(net, trace, estimator)?;
    Ok(SensitivityMap {
        estimator,
        values: samples.iter().map(Tensor::mean_rows).collect(),
        batch_size: trace.batch_size(),
        outputs: net.output_dim(),
    })
}

pub fn sensitivity(net: &Network, batch: &Tensor, estimator: Estimator) -> Result<SensitivityMap> {
    let (_, trace) = net.forward(batch)?;
    from_trace(net, &trace, estimator)
}

/// Same as [`sensitivity`] over many rows, `chunk` rows per forward pass.
pub fn sensitivity_chunked(net: &Network, features: &Tensor, estimator: Estimator, chunk: usize) -> Result<SensitivityMap> {
    let rows = features.rows();
    if rows == 0 || chunk == 0 {
        return Err(Error::Input("sensitivity needs at least one sample".into()));
    }
    let mut sums: Vec<Vec<f64>> = net.layers().iter().map(|l| vec![0.0; l.out_dim()]).collect();
    for start in (0..rows).step_by(chunk) {
        let idx: Vec<usize> = (start..(start + chunk).min(rows)).collect();
        let map = sensitivity(net, &features.gather_rows(&idx), estimator)?;
        for (acc, layer) in sums.iter_mut().zip(&map.values) {
            for (a, v) in acc.iter_mut().zip(layer) {
                *a += v * idx.len() as f64;
            }
        }
    }
    for v in sums.iter_mut().flatten() {
        *v /= rows as f64;
    }
    Ok(SensitivityMap {
        estimator,
        values: sums,
        batch_size: rows,
        outputs: net.output_dim(),
    })
}

pub fn sensitivity_exact(net: &Network, batch: &Tensor) -> Result<SensitivityMap> {
    sensitivity(net, batch, Estimator::Exact)
}

pub fn sensitivity_lower(net: &Network, batch: &Tensor) -> Result<SensitivityMap> {
    sensitivity(net, batch, Estimator::Lower)
}

pub fn sensitivity_upper(net: &Network, batch: &Tensor) -> Result<SensitivityMap> {
    sensitivity(net, batch, Estimator::Upper)
}

pub fn sensitivity_local(net: &Network, batch: &Tensor) -> Result<SensitivityMap> {
    sensitivity(net, batch, Estimator::Local)
}

/// `max(0, 1 - S)` elementwise.
pub fn insensitivity(map: &SensitivityMap) -> SensitivityMap {
    SensitivityMap {
        values: map
            .values
            .iter()
            .map(|layer| layer.iter().map(|s| (1.0 - s).max(0.0)).collect())
            .collect(),
        ..map.clone()
    }
}
