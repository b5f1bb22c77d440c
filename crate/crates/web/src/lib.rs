//! Browser bindings: sensitivity estimators, threshold search and a full
//! pruning run on a small 2-D problem. Every export returns a JSON string.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use serene_core::data::{random_split, synthetic_blobs};
use serene_core::net::evaluate;
use serene_core::pruner::{find_threshold, neuron_census, serene, threshold_prune, EpochTrainer, EventKind, SgdTrainer};
use serene_core::reporting::histogram;
use serene_core::sensitivity::sensitivity;
use serene_core::{Activation, Dataset, Estimator, Hyperparams, Network, PinMask, Tensor, UpdateRule};

const GRID: usize = 48;

#[derive(Debug, Serialize)]
pub struct EstimatorView {
    pub name: &'static str,
    pub values: Vec<Vec<f64>>,
    pub mean: f64,
    pub counts: Vec<u64>,
}

#[derive(Debug, Serialize)]
pub struct SensitivityView {
    pub dims: Vec<usize>,
    pub accuracy: f64,
    pub edges: Vec<f64>,
    pub estimators: Vec<EstimatorView>,
}

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub loss: f64,
    pub nonzero: usize,
}

#[derive(Debug, Serialize)]
pub struct CurveView {
    pub loss_before: f64,
    pub bound: f64,
    pub chosen: f64,
    pub no_prune: bool,
    pub probes: usize,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Serialize)]
pub struct StepView {
    pub iteration: usize,
    pub epoch: usize,
    pub validation_accuracy: Option<f64>,
    pub nonzero_weights: Option<usize>,
    pub threshold: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct PruneView {
    pub grid: usize,
    pub before: Vec<u8>,
    pub after: Vec<u8>,
    pub points: Vec<(f64, f64, usize)>,
    pub census_before: Vec<(usize, usize)>,
    pub census_after: Vec<(usize, usize)>,
    pub params: usize,
    pub nonzero_before: usize,
    pub nonzero_after: usize,
    pub accuracy_before: f64,
    pub accuracy_after: f64,
    pub steps: Vec<StepView>,
}

fn parse_dims(spec: &str) -> Result<Vec<usize>, String> {
    let dims: Vec<usize> = spec
        .split('-')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("bad layer size {t:?}")))
        .collect::<Result<_, _>>()?;
    if dims.len() < 3 || dims.contains(&0) || dims[0] != 2 {
        return Err("need 2-...-C with at least one hidden layer".into());
    }
    if dims.iter().any(|d| *d > 64) {
        return Err("layers are capped at 64 neurons".into());
    }
    Ok(dims)
}

fn problem(classes: usize, seed: u64) -> Dataset {
    synthetic_blobs(60, classes, 2, 2.5, seed).expect("valid blob parameters")
}

fn trained(dims: &[usize], activation: Activation, data: &Dataset, seed: u64, epochs: usize) -> Network {
    let mut acts = vec![activation; dims.len() - 2];
    acts.push(Activation::Identity);
    let mut net = Network::seeded(dims, &acts, seed).expect("valid dims");
    let hp = Hyperparams {
        eta: 0.2,
        batch_size: 16,
        seed,
        ..Hyperparams::default()
    };
    let mut t = SgdTrainer::new(hp, UpdateRule::L2).expect("valid hyperparameters");
    let mask = PinMask::empty(&net);
    for _ in 0..epochs {
        t.train_epoch(&mut net, data, &mask).expect("finite training");
    }
    net
}

fn activation(name: &str) -> Result<Activation, String> {
    name.parse::<Activation>().map_err(|e| e.to_string())
}

/// All four estimators on a network trained for `epochs` epochs.
pub fn sensitivity_view(spec: &str, act: &str, seed: u64, epochs: usize) -> Result<SensitivityView, String> {
    let dims = parse_dims(spec)?;
    let data = problem(*dims.last().expect("dims"), seed);
    let net = trained(&dims, activation(act)?, &data, seed, epochs.min(200));
    let maps: Vec<_> = Estimator::ALL
        .iter()
        .map(|e| sensitivity(&net, &data.features, *e))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let h = histogram(&maps, 30).map_err(|e| e.to_string())?;
    Ok(SensitivityView {
        dims,
        accuracy: evaluate(&net, &data).map_err(|e| e.to_string())?.accuracy,
        edges: h.edges.clone(),
        estimators: maps
            .into_iter()
            .zip(h.counts)
            .map(|(m, counts)| EstimatorView {
                name: m.estimator.name(),
                mean: m.mean(),
                values: m.values,
                counts,
            })
            .collect(),
    })
}

/// Validation loss as a function of a global magnitude threshold.
pub fn curve_view(spec: &str, seed: u64, twt: f64) -> Result<CurveView, String> {
    let dims = parse_dims(spec)?;
    let data = problem(*dims.last().expect("dims"), seed);
    let net = trained(&dims, Activation::Relu, &data, seed, 60);
    let (_, v) = random_split(&data, 0.25, seed).map_err(|e| e.to_string())?;
    let mask = PinMask::empty(&net);
    let found = find_threshold(&net, &mask, &v, twt).map_err(|e| e.to_string())?;
    let max_w = net.layers().iter().flat_map(|l| l.weights.data()).fold(0.0f64, |m, w| m.max(w.abs()));
    let min_w = net
        .layers()
        .iter()
        .flat_map(|l| l.weights.data())
        .map(|w| w.abs())
        .filter(|w| *w > 0.0)
        .fold(f64::INFINITY, f64::min);
    let steps = 80;
    let points = (0..=steps)
        .map(|k| {
            let t = min_w * (max_w / min_w).powf(k as f64 / steps as f64);
            let (p, _) = threshold_prune(&net, t, &mask);
            Ok(CurvePoint {
                threshold: t,
                loss: evaluate(&p, &v).map_err(|e| e.to_string())?.loss,
                nonzero: p.num_nonzero_weights(),
            })
        })
        .collect::<Result<_, String>>()?;
    Ok(CurveView {
        loss_before: found.loss_before,
        bound: found.loss_bound,
        chosen: found.threshold,
        no_prune: found.no_prune,
        probes: found.probes,
        points,
    })
}

fn decision_grid(net: &Network) -> Vec<u8> {
    let mut cells = Vec::with_capacity(GRID * GRID * 2);
    for r in 0..GRID {
        for c in 0..GRID {
            cells.push((c as f64 + 0.5) / GRID as f64);
            cells.push(1.0 - (r as f64 + 0.5) / GRID as f64);
        }
    }
    let x = Tensor::from_vec(&[GRID * GRID, 2], cells).expect("grid shape");
    let out = net.predict(&x).expect("grid matches input");
    (0..GRID * GRID).map(|b| serene_core::net::argmax(out.row(b)) as u8).collect()
}

/// A complete regularize-and-threshold run with the chosen estimator.
pub fn prune_view(spec: &str, estimator: &str, lambda: f64, twt: f64, seed: u64) -> Result<PruneView, String> {
    let dims = parse_dims(spec)?;
    let classes = *dims.last().expect("dims");
    let data = problem(classes, seed);
    let net = trained(&dims, Activation::Relu, &data, seed, 60);
    let (rule, est) = match estimator {
        "l2-baseline" => (UpdateRule::L2, Estimator::Lower),
        other => (UpdateRule::Sensitivity, other.parse::<Estimator>().map_err(|e| e.to_string())?),
    };
    let acc_before = evaluate(&net, &data).map_err(|e| e.to_string())?.accuracy;
    let hp = Hyperparams {
        eta: 0.1,
        lambda: if rule == UpdateRule::L2 { 0.0 } else { lambda },
        weight_decay: if rule == UpdateRule::L2 { lambda } else { 0.0 },
        pwe: 3,
        twt,
        target_accuracy: (acc_before - 0.03).max(0.0),
        batch_size: 16,
        seed,
        estimator: est,
        validation_fraction: 0.25,
        max_outer_iters: 15,
        epoch_budget: Some(150),
        ..Hyperparams::default()
    };
    let out = serene(&net, &PinMask::empty(&net), &data, &hp, rule).map_err(|e| e.to_string())?;
    let steps = out
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Accepted | EventKind::Threshold | EventKind::BelowTarget))
        .map(|e| StepView {
            iteration: e.iteration,
            epoch: e.epoch,
            validation_accuracy: e.validation_accuracy,
            nonzero_weights: e.nonzero_weights,
            threshold: e.threshold,
        })
        .collect();
    let dim = data.dim();
    Ok(PruneView {
        grid: GRID,
        before: decision_grid(&net),
        after: decision_grid(&out.network),
        points: (0..data.len())
            .map(|b| (data.features.data()[b * dim], data.features.data()[b * dim + 1], data.labels[b]))
            .collect(),
        census_before: neuron_census(&net),
        census_after: neuron_census(&out.network),
        params: net.num_params(),
        nonzero_before: net.num_nonzero_weights(),
        nonzero_after: out.network.num_nonzero_weights(),
        accuracy_before: acc_before,
        accuracy_after: evaluate(&out.network, &data).map_err(|e| e.to_string())?.accuracy,
        steps,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn sensitivities(spec: &str, act: &str, seed: u32, epochs: u32) -> Result<String, JsError> {
    to_json(sensitivity_view(spec, act, u64::from(seed), epochs as usize))
}

#[wasm_bindgen]
pub fn threshold_curve(spec: &str, seed: u32, twt: f64) -> Result<String, JsError> {
    to_json(curve_view(spec, u64::from(seed), twt))
}

#[wasm_bindgen]
pub fn prune(spec: &str, estimator: &str, lambda: f64, twt: f64, seed: u32) -> Result<String, JsError> {
    to_json(prune_view(spec, estimator, lambda, twt, u64::from(seed)))
}
