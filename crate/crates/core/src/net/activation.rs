use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Elementwise activation applied to a neuron's potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, p: f64) -> f64 {
        match self {
            Activation::Relu => p.max(0.0),
            Activation::Sigmoid => sigmoid(p),
            Activation::Identity => p,
        }
    }

    /// Derivative with respect to the potential. `ReLU'(0)` is taken as 0.
    #[inline]
    pub fn derivative(self, p: f64) -> f64 {
        match self {
            Activation::Relu => {
                if p > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = sigmoid(p);
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }
}

#[inline]
fn sigmoid(p: f64) -> f64 {
    if p >= 0.0 {
        1.0 / (1.0 + (-p).exp())
    } else {
        let e = p.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "identity" | "linear" | "id" => Ok(Activation::Identity),
            other => Err(Error::Input(format!("unknown activation `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_gate_at_zero_is_off() {
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
        assert_eq!(Activation::Relu.derivative(1e-300), 1.0);
        assert_eq!(Activation::Relu.derivative(-2.0), 0.0);
    }

    #[test]
    fn sigmoid_slope_at_origin() {
        assert!((Activation::Sigmoid.derivative(0.0) - 0.25).abs() < 1e-15);
        assert!(Activation::Sigmoid.apply(-800.0).is_finite());
        assert!(Activation::Sigmoid.apply(800.0) == 1.0);
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-6;
        for act in [Activation::Sigmoid, Activation::Identity, Activation::Relu] {
            for p in [-2.3, -0.4, 0.7, 3.1] {
                let fd = (act.apply(p + h) - act.apply(p - h)) / (2.0 * h);
                assert!((fd - act.derivative(p)).abs() < 1e-8, "{act} at {p}");
            }
        }
    }

    #[test]
    fn parses_names() {
        assert_eq!("ReLU".parse::<Activation>().unwrap(), Activation::Relu);
        assert!("tanh".parse::<Activation>().is_err());
    }
}
