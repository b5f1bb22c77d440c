//! Labelled datasets, seeded splitting and synthetic fixtures.

mod idx;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub use idx::{
    encode_idx_images, encode_idx_labels, load_mnist_idx, parse_idx_images, parse_idx_labels,
    IMAGE_MAGIC, LABEL_MAGIC,
};

use crate::error::{Error, Result};
use crate::seed::{self, Stream};
use crate::tensor::Tensor;

/// Default share of samples held out for validation.
pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `[count, dim]`, values in `[0, 1]`.
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.shape().len() != 2 {
            return Err(Error::Input(format!(
                "features must be a matrix, got shape {:?}",
                features.shape()
            )));
        }
        if features.rows() != labels.len() {
            return Err(Error::Consistency(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Input(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.gather_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    /// The first `n` samples (or all of them).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Features and labels of the given rows, ready for a forward pass.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        (
            self.features.gather_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Seeded partition into an update set `U` and a validation set `V` with
/// `|V| = round(count · validation_fraction)`.
pub fn random_split(
    data: &Dataset,
    validation_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(validation_fraction > 0.0 && validation_fraction < 1.0) {
        return Err(Error::Input(format!(
            "validation fraction {validation_fraction} outside (0, 1)"
        )));
    }
    let count = data.len();
    let n_val = (count as f64 * validation_fraction).round() as usize;
    if n_val == 0 || n_val >= count {
        return Err(Error::Input(format!(
            "splitting {count} samples at {validation_fraction} leaves an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut seed::rng(seed, Stream::Split, 0));
    let (val, update) = order.split_at(n_val);
    Ok((data.subset(update), data.subset(val)))
}

/// Isotropic unit-variance Gaussian blobs around seeded centres whose pairwise
/// distance is at least `separation`, rescaled jointly into `[0, 1]`.
pub fn synthetic_blobs(
    n_per_class: usize,
    classes: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_per_class == 0 || classes == 0 || dim == 0 {
        return Err(Error::Input("blob counts must be positive".into()));
    }
    let mut rng = seed::rng(seed, Stream::Data, 0);
    let half_width = separation.max(1.0) * classes as f64;
    let mut centres: Vec<Vec<f64>> = Vec::with_capacity(classes);
    let mut attempts = 0usize;
    while centres.len() < classes {
        let c: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(-half_width..=half_width))
            .collect();
        attempts += 1;
        let far = centres.iter().all(|o| {
            o.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() >= separation
        });
        // after many rejections accept anyway; only reachable for tiny `dim`
        if far || attempts > 10_000 {
            centres.push(c);
        }
    }

    let count = n_per_class * classes;
    let mut values = Vec::with_capacity(count * dim);
    let mut labels = Vec::with_capacity(count);
    for (k, centre) in centres.iter().enumerate() {
        for _ in 0..n_per_class {
            for c in centre {
                let z: f64 = StandardNormal.sample(&mut rng);
                values.push(c + z);
            }
            labels.push(k);
        }
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    values.iter_mut().for_each(|v| *v = (*v - lo) / span);
    Dataset::new(Tensor::from_vec(&[count, dim], values)?, labels, classes)
}
