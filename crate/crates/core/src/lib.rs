//! Structured pruning of dense feed-forward classifiers driven by neuron
//! sensitivity.
//!
//! The sensitivity of a neuron measures how much the network outputs move when
//! the neuron's post-synaptic potential (its pre-activation value) moves. Neurons
//! with low sensitivity get their incoming weights decayed towards zero by a
//! sensitivity-weighted penalty; periodic magnitude thresholding then removes
//! them, and removed parameters stay pinned at zero for the rest of the run.
//!
//! Crate layout:
//!
//! - [`tensor`] dense row-major storage and the few kernels the engine needs.
//! - [`net`] dense layers, forward evaluation with potential capture, loss,
//!   reverse-mode gradients and accuracy.
//! - [`sensitivity`] exact, lower-bound, upper-bound and local estimators.
//! - [`optimizer`] the regularized SGD step (two algebraic routes) and the
//!   plain weight-decay baseline, both honouring a [`optimizer::PinMask`].
//! - [`pruner`] thresholding, the tolerance-constrained threshold search,
//!   the plateau-gated regularization procedure and the outer pruning loop.
//! - [`data`] datasets, IDX ingestion, seeded splitting and synthetic blobs.
//! - [`reporting`] model files, compression reports and sensitivity histograms.

pub mod data;
pub mod error;
pub mod net;
pub mod optimizer;
pub mod pruner;
pub mod reporting;
pub mod seed;
pub mod sensitivity;
pub mod tensor;

pub use data::Dataset;
pub use error::{Error, Result};
pub use net::{Activation, DenseLayer, ForwardTrace, GradientSet, Network};
pub use optimizer::{Hyperparams, PinMask, UpdateRule};
pub use sensitivity::{Estimator, SensitivityMap};
pub use tensor::Tensor;
