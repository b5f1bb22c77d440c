//! Iterative regularize, validate, threshold loop.

use serde::{Deserialize, Serialize};

use crate::data::{random_split, Dataset};
use crate::error::{Error, Result};
use crate::net::{evaluate, Network};
use crate::optimizer::{Hyperparams, PinMask, Sgd, UpdateRule};
use crate::seed::{self, Stream};

/// Growth factor of the threshold range expansion.
pub const EXPANSION_FACTOR: f64 = 2.0;
/// Bisection stops once the bracket is narrower than this times `max|w|`.
pub const RELATIVE_TOLERANCE: f64 = 1e-6;

/// Zeroes and pins every weight with `|w| ≤ t`. A neuron left with an all-zero
/// weight row also has its bias zeroed and pinned.
pub fn threshold_prune(net: &Network, t: f64, mask: &PinMask) -> (Network, PinMask) {
    let mut net = net.clone();
    let mut mask = mask.clone();
    for (n, layer) in net.layers_mut().iter_mut().enumerate() {
        let cols = layer.in_dim();
        let pins = &mut mask.weights[n];
        for (idx, w) in layer.weights.data_mut().iter_mut().enumerate() {
            if w.abs() <= t {
                *w = 0.0;
                pins[idx] = true;
            }
        }
        for (i, row) in layer.weights.data().chunks_exact(cols).enumerate() {
            if row.iter().all(|w| *w == 0.0) {
                layer.bias.data_mut()[i] = 0.0;
                mask.biases[n][i] = true;
            }
        }
    }
    (net, mask)
}

/// Per layer `(total neurons, neurons with a nonzero incoming weight)`.
pub fn neuron_census(net: &Network) -> Vec<(usize, usize)> {
    net.layers()
        .iter()
        .map(|layer| {
            let alive = layer
                .weights
                .data()
                .chunks_exact(layer.in_dim())
                .filter(|row| row.iter().any(|w| *w != 0.0))
                .count();
            (layer.out_dim(), alive)
        })
        .collect()
}

/// Hidden neurons (all layers but the output) with an all-zero incoming row.
pub fn removed_hidden_neurons(net: &Network) -> usize {
    let census = neuron_census(net);
    census[..census.len() - 1].iter().map(|(t, s)| t - s).sum()
}

#[derive(Debug, Clone)]
pub struct ThresholdOutcome {
    pub threshold: f64,
    pub network: Network,
    pub mask: PinMask,
    /// No positive threshold kept the loss within bounds; network and mask
    /// are the inputs unchanged.
    pub no_prune: bool,
    pub loss_before: f64,
    pub loss_after: f64,
    pub loss_bound: f64,
    pub probes: usize,
    pub expansion_probes: usize,
    /// Bracket width when the search stopped.
    pub bracket: f64,
}

/// Largest global magnitude threshold keeping `Loss(V) ≤ Loss₀·(1 + twt)`.
///
/// Every probe runs on a copy; `net` and `mask` are never touched.
pub fn find_threshold(net: &Network, mask: &PinMask, v: &Dataset, twt: f64) -> Result<ThresholdOutcome> {
    if v.is_empty() {
        return Err(Error::Input("threshold search needs a nonempty validation set".into()));
    }
    if !(twt >= 0.0) {
        return Err(Error::Input(format!("twt must be non-negative, got {twt}")));
    }
    let loss_before = evaluate(net, v)?.loss;
    let loss_bound = loss_before * (1.0 + twt);

    let mut min_w = f64::INFINITY;
    let mut max_w = 0.0f64;
    for w in net.layers().iter().flat_map(|l| l.weights.data()) {
        let a = w.abs();
        if a > 0.0 {
            min_w = min_w.min(a);
            max_w = max_w.max(a);
        }
    }
    let unchanged = |probes, expansion_probes| ThresholdOutcome {
        threshold: 0.0,
        network: net.clone(),
        mask: mask.clone(),
        no_prune: true,
        loss_before,
        loss_after: loss_before,
        loss_bound,
        probes,
        expansion_probes,
        bracket: 0.0,
    };
    if max_w == 0.0 {
        return Ok(unchanged(0, 0));
    }

    let mut probes = 0usize;
    let mut probe = |t: f64| -> Result<(f64, Network, PinMask)> {
        probes += 1;
        let (pruned, m) = threshold_prune(net, t, mask);
        let loss = evaluate(&pruned, v)?.loss;
        Ok((loss, pruned, m))
    };

    let first = probe(min_w)?;
    if !(first.0 <= loss_bound) {
        return Ok(unchanged(1, 1));
    }
    let mut lo = min_w;
    let mut best = first;
    let mut hi = None;
    let mut expansion_probes = 1;
    while lo < max_w {
        let t = (lo * EXPANSION_FACTOR).min(max_w);
        let r = probe(t)?;
        expansion_probes += 1;
        if r.0 <= loss_bound {
            lo = t;
            best = r;
        } else {
            hi = Some(t);
            break;
        }
    }

    let eps = RELATIVE_TOLERANCE * max_w;
    let mut bracket = 0.0;
    if let Some(mut hi) = hi {
        while hi - lo > eps {
            let mid = 0.5 * (lo + hi);
            let r = probe(mid)?;
            if r.0 <= loss_bound {
                lo = mid;
                best = r;
            } else {
                hi = mid;
            }
        }
        bracket = hi - lo;
    }
    let (loss_after, network, mask) = best;
    Ok(ThresholdOutcome {
        threshold: lo,
        network,
        mask,
        no_prune: false,
        loss_before,
        loss_after,
        loss_bound,
        probes,
        expansion_probes,
        bracket,
    })
}

/// One epoch of training plus the validation loss used for plateau detection.
pub trait EpochTrainer {
    /// Trains `net` for one epoch on `u`; returns the mean training loss.
    fn train_epoch(&mut self, net: &mut Network, u: &Dataset, mask: &PinMask) -> Result<f64>;

    fn validation_loss(&mut self, net: &Network, v: &Dataset) -> Result<f64> {
        Ok(evaluate(net, v)?.loss)
    }
}

/// Mini-batch SGD with a reshuffle of `U` every epoch.
#[derive(Debug, Clone)]
pub struct SgdTrainer {
    sgd: Sgd,
    epochs: u64,
}

impl SgdTrainer {
    pub fn new(hp: Hyperparams, rule: UpdateRule) -> Result<Self> {
        Ok(SgdTrainer {
            sgd: Sgd::new(hp, rule)?,
            epochs: 0,
        })
    }

    pub fn epochs_trained(&self) -> u64 {
        self.epochs
    }

    pub fn sgd(&self) -> &Sgd {
        &self.sgd
    }
}

impl EpochTrainer for SgdTrainer {
    fn train_epoch(&mut self, net: &mut Network, u: &Dataset, mask: &PinMask) -> Result<f64> {
        use rand::seq::SliceRandom;

        if u.is_empty() {
            return Err(Error::Input("cannot train on an empty dataset".into()));
        }
        let hp = self.sgd.hyperparams();
        let mut order: Vec<usize> = (0..u.len()).collect();
        order.shuffle(&mut seed::rng(hp.seed, Stream::Shuffle, self.epochs));
        self.epochs += 1;
        let batch = hp.batch_size;
        let mut total = 0.0;
        for chunk in order.chunks(batch) {
            let (x, y) = u.batch(chunk);
            total += self.sgd.step(net, &x, &y, mask)? * chunk.len() as f64;
        }
        Ok(total / u.len() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct Regularized {
    /// Best network on `V` seen during the run (possibly the input).
    pub network: Network,
    pub best_loss: f64,
    pub epochs: usize,
    /// Validation loss after each epoch.
    pub history: Vec<f64>,
    /// Stopped by `max_epochs` rather than by the plateau rule.
    pub truncated: bool,
}

/// Trains until `pwe` consecutive epochs bring no new best validation loss.
pub fn regularization<T: EpochTrainer + ?Sized>(
    net: &Network,
    u: &Dataset,
    v: &Dataset,
    pwe: usize,
    mask: &PinMask,
    trainer: &mut T,
    max_epochs: Option<usize>,
) -> Result<Regularized> {
    if u.is_empty() || v.is_empty() {
        return Err(Error::Input("update and validation sets must be nonempty".into()));
    }
    let mut best = net.clone();
    let mut best_loss = trainer.validation_loss(net, v)?;
    let mut current = net.clone();
    let mut patience = 0;
    let mut history = Vec::new();
    let mut truncated = false;
    while patience < pwe {
        if max_epochs.is_some_and(|m| history.len() >= m) {
            truncated = true;
            break;
        }
        trainer.train_epoch(&mut current, u, mask)?;
        let loss = trainer.validation_loss(&current, v)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                what: "validation loss",
                layer: net.layers().len() - 1,
                step: history.len() as u64,
            });
        }
        history.push(loss);
        if loss < best_loss {
            best = current.clone();
            best_loss = loss;
            patience = 0;
        } else {
            patience += 1;
        }
    }
    Ok(Regularized {
        network: best,
        best_loss,
        epochs: history.len(),
        history,
        truncated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    /// Input network scored on the first validation split.
    Start,
    Epoch,
    /// Network met the target and became the new best.
    Accepted,
    Threshold,
    /// Validation accuracy fell below the target; loop ends.
    BelowTarget,
    Warning,
    Stagnation,
    BudgetExhausted,
    Abort,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEvent {
    pub step: usize,
    pub iteration: usize,
    pub kind: EventKind,
    /// Training epochs completed so far in this run.
    pub epoch: usize,
    pub validation_loss: Option<f64>,
    pub validation_accuracy: Option<f64>,
    pub threshold: Option<f64>,
    pub params_pruned: Option<usize>,
    pub nonzero_weights: Option<usize>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    BelowTarget,
    IterationLimit,
    EpochBudget,
}

/// Input and output of one threshold search, kept when
/// [`PruneRunState::record_thresholds`] is set.
#[derive(Debug, Clone)]
pub struct ThresholdRecord {
    pub iteration: usize,
    pub split_seed: u64,
    pub twt: f64,
    pub before: Network,
    pub after: Network,
    pub after_mask: PinMask,
    pub threshold: f64,
}

/// State of one pruning run; kept intact if the run aborts.
#[derive(Debug, Clone)]
pub struct PruneRunState {
    pub best: Network,
    pub best_mask: PinMask,
    /// Validation accuracy of `best` when recorded; `None` while `best` is the input.
    pub best_accuracy: Option<f64>,
    /// Seed of the split on which `best` was validated.
    pub best_split_seed: Option<u64>,
    pub current: Network,
    pub mask: PinMask,
    pub iteration: usize,
    pub epochs: usize,
    pub events: Vec<RunEvent>,
    pub stop: Option<StopReason>,
    pub record_thresholds: bool,
    pub thresholds: Vec<ThresholdRecord>,
}

impl PruneRunState {
    pub fn new(net: Network, mask: PinMask) -> Result<Self> {
        mask.check(&net)?;
        Ok(PruneRunState {
            best: net.clone(),
            best_mask: mask.clone(),
            best_accuracy: None,
            best_split_seed: None,
            current: net,
            mask,
            iteration: 0,
            epochs: 0,
            events: Vec::new(),
            stop: None,
            record_thresholds: false,
            thresholds: Vec::new(),
        })
    }

    fn log(&mut self, kind: EventKind) -> &mut RunEvent {
        let step = self.events.len();
        self.events.push(RunEvent {
            step,
            iteration: self.iteration,
            kind,
            epoch: self.epochs,
            validation_loss: None,
            validation_accuracy: None,
            threshold: None,
            params_pruned: None,
            nonzero_weights: None,
            note: None,
        });
        self.events.last_mut().expect("just pushed")
    }

    /// Runs the loop to completion. On error an `Abort` event is appended and
    /// the state reflects everything done until then.
    pub fn run<T: EpochTrainer + ?Sized>(&mut self, data: &Dataset, hp: &Hyperparams, trainer: &mut T) -> Result<()> {
        hp.validate()?;
        let result = self.drive(data, hp, trainer);
        if let Err(e) = &result {
            self.log(EventKind::Abort).note = Some(e.to_string());
        }
        result
    }

    fn drive<T: EpochTrainer + ?Sized>(&mut self, data: &Dataset, hp: &Hyperparams, trainer: &mut T) -> Result<()> {
        loop {
            if self.iteration >= hp.max_outer_iters {
                self.log(EventKind::Stagnation).note = Some(format!("stopped after {} iterations", self.iteration));
                self.stop = Some(StopReason::IterationLimit);
                return Ok(());
            }
            let split_seed = seed::derive(hp.seed, Stream::Split, self.iteration as u64);
            let (u, v) = random_split(data, hp.validation_fraction, split_seed)?;

            if self.iteration == 0 {
                let eval = evaluate(&self.current, &v)?;
                let nz = self.current.num_nonzero_weights();
                let ev = self.log(EventKind::Start);
                ev.validation_loss = Some(eval.loss);
                ev.validation_accuracy = Some(eval.accuracy);
                ev.nonzero_weights = Some(nz);
                if eval.accuracy < hp.target_accuracy {
                    self.log(EventKind::Warning).note = Some(format!(
                        "input network scores {:.4} on the first split, below the target {:.4}",
                        eval.accuracy, hp.target_accuracy
                    ));
                }
            }

            let remaining = hp.epoch_budget.map(|b| b.saturating_sub(self.epochs));
            let reg = regularization(&self.current, &u, &v, hp.pwe, &self.mask, trainer, remaining)?;
            for loss in &reg.history {
                self.epochs += 1;
                self.log(EventKind::Epoch).validation_loss = Some(*loss);
            }
            self.current = reg.network;

            let eval = evaluate(&self.current, &v)?;
            if eval.accuracy < hp.target_accuracy {
                let ev = self.log(EventKind::BelowTarget);
                ev.validation_loss = Some(eval.loss);
                ev.validation_accuracy = Some(eval.accuracy);
                self.stop = Some(StopReason::BelowTarget);
                return Ok(());
            }
            self.best = self.current.clone();
            self.best_mask = self.mask.clone();
            self.best_accuracy = Some(eval.accuracy);
            self.best_split_seed = Some(split_seed);
            let nz = self.best.num_nonzero_weights();
            let ev = self.log(EventKind::Accepted);
            ev.validation_loss = Some(eval.loss);
            ev.validation_accuracy = Some(eval.accuracy);
            ev.nonzero_weights = Some(nz);

            if hp.epoch_budget.is_some_and(|b| self.epochs >= b) {
                self.log(EventKind::BudgetExhausted).note = Some(format!("{} epochs used", self.epochs));
                self.stop = Some(StopReason::EpochBudget);
                return Ok(());
            }

            let before = self.mask.pinned_total();
            let th = find_threshold(&self.current, &self.mask, &v, hp.twt)?;
            if self.record_thresholds {
                self.thresholds.push(ThresholdRecord {
                    iteration: self.iteration,
                    split_seed,
                    twt: hp.twt,
                    before: self.current.clone(),
                    after: th.network.clone(),
                    after_mask: th.mask.clone(),
                    threshold: th.threshold,
                });
            }
            self.current = th.network;
            self.mask = th.mask;
            let pruned = self.mask.pinned_total() - before;
            let nz = self.current.num_nonzero_weights();
            let ev = self.log(EventKind::Threshold);
            ev.threshold = Some(th.threshold);
            ev.validation_loss = Some(th.loss_after);
            ev.params_pruned = Some(pruned);
            ev.nonzero_weights = Some(nz);
            ev.note = Some(format!(
                "bound {:.6} from {:.6}, {} probes{}",
                th.loss_bound,
                th.loss_before,
                th.probes,
                if th.no_prune { ", no prune" } else { "" }
            ));
            self.iteration += 1;
        }
    }
}

#[derive(Debug, Clone)]
pub struct SereneOutcome {
    pub network: Network,
    pub mask: PinMask,
    pub validation_accuracy: Option<f64>,
    pub validation_split_seed: Option<u64>,
    pub events: Vec<RunEvent>,
    pub iterations: usize,
    pub epochs: usize,
    pub stop: StopReason,
}

impl From<PruneRunState> for SereneOutcome {
    fn from(s: PruneRunState) -> Self {
        SereneOutcome {
            network: s.best,
            mask: s.best_mask,
            validation_accuracy: s.best_accuracy,
            validation_split_seed: s.best_split_seed,
            events: s.events,
            iterations: s.iteration,
            epochs: s.epochs,
            stop: s.stop.unwrap_or(StopReason::BelowTarget),
        }
    }
}

/// Full pruning run driven by SGD with the given update rule.
pub fn serene(net: &Network, mask: &PinMask, data: &Dataset, hp: &Hyperparams, rule: UpdateRule) -> Result<SereneOutcome> {
    let mut trainer = SgdTrainer::new(hp.clone(), rule)?;
    serene_with(net, mask, data, hp, &mut trainer)
}

pub fn serene_with<T: EpochTrainer + ?Sized>(
    net: &Network,
    mask: &PinMask,
    data: &Dataset,
    hp: &Hyperparams,
    trainer: &mut T,
) -> Result<SereneOutcome> {
    let mut state = PruneRunState::new(net.clone(), mask.clone())?;
    state.run(data, hp, trainer)?;
    Ok(state.into())
}
