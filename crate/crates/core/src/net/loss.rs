use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::Network;

/// Rows evaluated per forward pass when scoring a whole dataset.
const EVAL_CHUNK: usize = 1000;

fn check_labels(outputs: &Tensor, labels: &[usize]) -> Result<usize> {
    let (batch, classes) = (outputs.rows(), outputs.cols());
    if labels.len() != batch {
        return Err(Error::Input(format!(
            "{} labels for {batch} output rows",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Input(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    Ok(classes)
}

/// `-log softmax(row)[label]` via log-sum-exp.
fn sample_loss(row: &[f64], label: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - row[label]
}

/// Mean softmax cross-entropy of raw outputs.
pub fn cross_entropy_loss(outputs: &Tensor, labels: &[usize]) -> Result<f64> {
    check_labels(outputs, labels)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(b, &l)| sample_loss(outputs.row(b), l))
        .sum();
    Ok(total / labels.len() as f64)
}

/// Mean loss together with the per-sample output gradient `softmax - onehot`.
///
/// The gradient rows are not divided by the batch size; [`Network::backward`]
/// averages over samples itself.
pub fn cross_entropy_with_grad(outputs: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let classes = check_labels(outputs, labels)?;
    let mut grad = Tensor::zeros(&[labels.len(), classes]);
    let mut total = 0.0;
    for (b, &label) in labels.iter().enumerate() {
        let row = outputs.row(b);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let g = grad.row_mut(b);
        let mut z = 0.0;
        for (gi, v) in g.iter_mut().zip(row) {
            *gi = (v - max).exp();
            z += *gi;
        }
        total += max + z.ln() - row[label];
        g.iter_mut().for_each(|gi| *gi /= z);
        g[label] -= 1.0;
    }
    Ok((total / labels.len() as f64, grad))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

/// Mean loss and top-1 accuracy over a whole dataset.
pub fn evaluate(net: &Network, data: &Dataset) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::Input("cannot evaluate on an empty dataset".into()));
    }
    let starts: Vec<usize> = (0..data.len()).step_by(EVAL_CHUNK).collect();
    let score = |&start: &usize| -> Result<(f64, usize)> {
        let end = (start + EVAL_CHUNK).min(data.len());
        let idx: Vec<usize> = (start..end).collect();
        let x = data.features.gather_rows(&idx);
        let labels = &data.labels[start..end];
        let out = net.predict(&x)?;
        let loss = cross_entropy_loss(&out, labels)? * labels.len() as f64;
        let correct = labels
            .iter()
            .enumerate()
            .filter(|(b, &l)| argmax(out.row(*b)) == l)
            .count();
        Ok((loss, correct))
    };

    #[cfg(feature = "parallel")]
    let parts: Vec<Result<(f64, usize)>> = {
        use rayon::prelude::*;
        starts.par_iter().map(score).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<(f64, usize)>> = starts.iter().map(score).collect();

    // chunk order is fixed, so the sum is independent of the thread count
    let mut loss = 0.0;
    let mut correct = 0;
    for part in parts {
        let (l, c) = part?;
        loss += l;
        correct += c;
    }
    let n = data.len() as f64;
    Ok(Evaluation {
        loss: loss / n,
        accuracy: correct as f64 / n,
    })
}

/// Top-1 accuracy in `[0, 1]`.
pub fn performance(net: &Network, data: &Dataset) -> Result<f64> {
    Ok(evaluate(net, data)?.accuracy)
}
