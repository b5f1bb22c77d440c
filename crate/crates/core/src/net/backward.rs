//! Reverse-mode differentiation over the layer sequence.

use crate::error::{Error, Result};
use crate::tensor::{matmul_nn, matmul_tn, Tensor};

use super::{ForwardTrace, Network};

/// Parameter gradients, averaged over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    /// `[out_dim, in_dim]` per layer.
    pub weights: Vec<Tensor>,
    /// `[out_dim]` per layer.
    pub biases: Vec<Tensor>,
}

impl GradientSet {
    pub fn first_nonfinite(&self) -> Option<usize> {
        self.weights
            .iter()
            .zip(&self.biases)
            .position(|(w, b)| !w.is_finite() || !b.is_finite())
    }
}

impl Network {
    pub(crate) fn check_trace(&self, trace: &ForwardTrace) -> Result<usize> {
        let n = self.layers.len();
        if trace.inputs.len() != n || trace.potentials.len() != n || trace.outputs.len() != n {
            return Err(Error::Consistency(format!(
                "trace has {} layers, network has {n}",
                trace.potentials.len()
            )));
        }
        let batch = trace.batch_size();
        for (i, layer) in self.layers.iter().enumerate() {
            let p = &trace.potentials[i];
            let x = &trace.inputs[i];
            if p.shape() != [batch, layer.out_dim()] || x.shape() != [batch, layer.in_dim()] {
                return Err(Error::Consistency(format!(
                    "trace layer {i} has potentials {:?} and inputs {:?}, layer is {}x{}",
                    p.shape(),
                    x.shape(),
                    layer.out_dim(),
                    layer.in_dim()
                )));
            }
        }
        Ok(batch)
    }

    /// Backpropagates a seed `output_grad = ∂J/∂y_N` (one row per sample).
    ///
    /// Returns parameter gradients of `J` averaged over samples, and for every
    /// layer the per-sample potential gradients `∂J_b/∂p_{n,i}`.
    pub fn backward(
        &self,
        trace: &ForwardTrace,
        output_grad: &Tensor,
    ) -> Result<(GradientSet, Vec<Tensor>)> {
        let (grads, potential_grads) = self.backprop(trace, output_grad, true)?;
        Ok((grads.expect("requested"), potential_grads))
    }

    /// Potential gradients only; skips the parameter-gradient products.
    pub fn potential_grads(&self, trace: &ForwardTrace, output_grad: &Tensor) -> Result<Vec<Tensor>> {
        Ok(self.backprop(trace, output_grad, false)?.1)
    }

    fn backprop(
        &self,
        trace: &ForwardTrace,
        output_grad: &Tensor,
        with_params: bool,
    ) -> Result<(Option<GradientSet>, Vec<Tensor>)> {
        let batch = self.check_trace(trace)?;
        if output_grad.shape() != [batch, self.output_dim()] {
            return Err(Error::Consistency(format!(
                "output gradient shape {:?}, expected [{batch}, {}]",
                output_grad.shape(),
                self.output_dim()
            )));
        }
        let n_layers = self.layers.len();
        let mut potential_grads = vec![Tensor::zeros(&[0]); n_layers];
        let mut weight_grads = vec![Tensor::zeros(&[0]); n_layers];
        let mut bias_grads = vec![Tensor::zeros(&[0]); n_layers];
        let inv_batch = 1.0 / batch as f64;

        let mut upstream = output_grad.clone();
        for n in (0..n_layers).rev() {
            let layer = &self.layers[n];
            let act = layer.activation;
            let mut dp = upstream;
            for (g, &p) in dp.data_mut().iter_mut().zip(trace.potentials[n].data()) {
                *g *= act.derivative(p);
            }
            if with_params {
                weight_grads[n] = matmul_tn(inv_batch, &dp, &trace.inputs[n]);
                bias_grads[n] = Tensor::from_vec(&[layer.out_dim()], dp.mean_rows())?;
            }
            upstream = if n > 0 {
                matmul_nn(&dp, &layer.weights)
            } else {
                Tensor::zeros(&[0])
            };
            potential_grads[n] = dp;
        }
        let grads = with_params.then_some(GradientSet {
            weights: weight_grads,
            biases: bias_grads,
        });
        Ok((grads, potential_grads))
    }
}
