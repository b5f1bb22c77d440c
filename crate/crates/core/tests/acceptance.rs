//! Acceptance gate. Prints one line per criterion and exits non-zero if any
//! criterion fails.
//!
//! MNIST criteria read the IDX files from `$SERENE_MNIST_DIR` or
//! `<workspace>/data/mnist`; without them those criteria report SKIP.

mod common;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;
use serene_core::data::{load_mnist_idx, random_split, synthetic_blobs};
use serene_core::net::evaluate;
use serene_core::optimizer::{update_step, update_step_rewritten};
use serene_core::pruner::{
    find_threshold, removed_hidden_neurons, threshold_prune, EpochTrainer, EventKind, PruneRunState, SereneOutcome,
    SgdTrainer, ThresholdRecord,
};
use serene_core::reporting::{histogram, prune_report, RunMetadata};
use serene_core::sensitivity::{per_sample, sensitivity, sensitivity_chunked};
use serene_core::{Activation, Dataset, DenseLayer, Estimator, Hyperparams, Network, PinMask, Tensor, UpdateRule};

#[derive(PartialEq)]
enum Status {
    Pass,
    Fail,
    Skip,
}

struct Verdict {
    status: Status,
    detail: String,
}

fn verdict(ok: bool, detail: String) -> Verdict {
    Verdict {
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

fn skip(detail: &str) -> Verdict {
    Verdict {
        status: Status::Skip,
        detail: detail.to_string(),
    }
}

// ---------------------------------------------------------------------------
// 1. lower ≤ exact ≤ upper per neuron and sample

fn bound_sandwich() -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0usize;
    for seed in 0..100u64 {
        let mut r = common::rng(1000 + seed);
        let layers = r.random_range(2..=4);
        let net = common::random_net(&mut r, layers, 8, 1.5);
        let x = common::random_inputs(&mut r, 10, net.input_dim());
        let (_, trace) = net.forward(&x).unwrap();
        let lo = per_sample(&net, &trace, Estimator::Lower).unwrap();
        let ex = per_sample(&net, &trace, Estimator::Exact).unwrap();
        let up = per_sample(&net, &trace, Estimator::Upper).unwrap();
        for n in 0..lo.len() {
            for ((l, e), u) in lo[n].data().iter().zip(ex[n].data()).zip(up[n].data()) {
                worst = worst.max(l - e).max(e - u);
                checked += 1;
            }
        }
    }
    verdict(
        worst <= 1e-9,
        format!("{checked} neuron-samples on 100 nets, worst violation {worst:.2e} (slack 1e-9)"),
    )
}

// ---------------------------------------------------------------------------
// 2. exact sensitivity vs central differences on injected potential offsets

fn finite_difference() -> Verdict {
    let eps = 1e-5;
    let mut worst_ratio = 0.0f64;
    let mut checked = 0;
    for seed in 0..20u64 {
        let mut r = common::rng(2000 + seed);
        let layers = r.random_range(2..=4);
        let net = common::random_net(&mut r, layers, 8, 1.5);
        let x = common::random_inputs(&mut r, 4, net.input_dim());
        let exact = sensitivity(&net, &x, Estimator::Exact).unwrap();
        let fd = common::fd_sensitivity(&net, &x, eps);
        for (a, b) in exact.values.iter().flatten().zip(fd.iter().flatten()) {
            let tol = 1e-5f64.max(1e-3 * a.abs());
            worst_ratio = worst_ratio.max((a - b).abs() / tol);
            checked += 1;
        }
    }
    verdict(
        worst_ratio <= 1.0,
        format!("{checked} neurons on 20 nets, worst |S - S_fd| / tol = {worst_ratio:.2e}"),
    )
}

// ---------------------------------------------------------------------------
// 3. direct vs rewritten update

fn rewritten_equivalence() -> Verdict {
    let mut worst = 0.0f64;
    let mut moved = 0.0f64;
    for seed in 0..20u64 {
        let mut r = common::rng(3000 + seed);
        let layers = r.random_range(2..=4);
        let net = common::random_net(&mut r, layers, 8, 1.0);
        let x = common::random_inputs(&mut r, 6, net.input_dim());
        let y = common::random_labels(&mut r, 6, net.output_dim());
        let hp = Hyperparams {
            eta: 0.05,
            lambda: 0.2,
            estimator: Estimator::Exact,
            ..Hyperparams::default()
        };
        let mask = PinMask::empty(&net);
        let mut a = net.clone();
        let mut b = net.clone();
        let mut plain = net.clone();
        update_step(&mut a, &x, &y, &hp, &mask).unwrap();
        update_step_rewritten(&mut b, &x, &y, &hp, &mask).unwrap();
        update_step(&mut plain, &x, &y, &Hyperparams { lambda: 0.0, ..hp.clone() }, &mask).unwrap();
        for ((la, lb), lp) in a.layers().iter().zip(b.layers()).zip(plain.layers()) {
            for ((wa, wb), wp) in la.weights.data().iter().zip(lb.weights.data()).zip(lp.weights.data()) {
                worst = worst.max((wa - wb).abs());
                moved = moved.max((wa - wp).abs());
            }
            for (ba, bb) in la.bias.data().iter().zip(lb.bias.data()) {
                worst = worst.max((ba - bb).abs());
            }
        }
    }
    verdict(
        worst <= 1e-12 && moved > 1e-6,
        format!("20 nets, max elementwise difference {worst:.2e}, largest penalty effect {moved:.2e}"),
    )
}

// ---------------------------------------------------------------------------
// 4. pinned parameters stay zero under every update variant

fn toy_classifier(dims: &[usize], acts: &[Activation], data: &Dataset, epochs: usize, seed: u64) -> Network {
    let mut net = Network::seeded(dims, acts, seed).unwrap();
    let hp = Hyperparams {
        batch_size: 10,
        seed,
        ..Hyperparams::default()
    };
    let mut t = SgdTrainer::new(hp, UpdateRule::L2).unwrap();
    let mask = PinMask::empty(&net);
    for _ in 0..epochs {
        t.train_epoch(&mut net, data, &mask).unwrap();
    }
    net
}

fn pinned_are_zero(net: &Network, mask: &PinMask) -> bool {
    net.layers().iter().enumerate().all(|(n, l)| {
        l.weights.data().iter().zip(&mask.weights[n]).all(|(w, p)| !*p || *w == 0.0)
            && l.bias.data().iter().zip(&mask.biases[n]).all(|(b, p)| !*p || *b == 0.0)
    })
}

fn pin_permanence() -> Verdict {
    let data = synthetic_blobs(40, 3, 5, 5.0, 4).unwrap();
    let net = toy_classifier(&[5, 8, 6, 3], &[Activation::Relu, Activation::Sigmoid, Activation::Identity], &data, 20, 4);
    let mut mags: Vec<f64> = net.layers().iter().flat_map(|l| l.weights.data()).map(|w| w.abs()).collect();
    mags.sort_by(f64::total_cmp);
    let (pruned, mask) = threshold_prune(&net, mags[mags.len() / 2], &PinMask::empty(&net));

    let base = Hyperparams {
        eta: 0.1,
        lambda: 0.05,
        weight_decay: 0.01,
        batch_size: 10,
        seed: 9,
        ..Hyperparams::default()
    };
    let mut variants: Vec<(String, Hyperparams, UpdateRule)> = Estimator::ALL
        .iter()
        .map(|e| (format!("sensitivity/{e}"), Hyperparams { estimator: *e, ..base.clone() }, UpdateRule::Sensitivity))
        .collect();
    variants.push(("rewritten/exact".into(), Hyperparams { estimator: Estimator::Exact, ..base.clone() }, UpdateRule::Rewritten));
    variants.push(("l2".into(), base.clone(), UpdateRule::L2));
    variants.push(("sensitivity/lower+momentum".into(), Hyperparams { momentum: 0.9, ..base.clone() }, UpdateRule::Sensitivity));

    let mut failures = Vec::new();
    for (name, hp, rule) in &variants {
        let mut n = pruned.clone();
        let mut t = SgdTrainer::new(hp.clone(), *rule).unwrap();
        for _ in 0..10 {
            t.train_epoch(&mut n, &data, &mask).unwrap();
            if !pinned_are_zero(&n, &mask) {
                failures.push(name.clone());
                break;
            }
        }
        if n == pruned {
            failures.push(format!("{name} (no training happened)"));
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "{} pinned of {} params, {} variants x 10 epochs{}",
            mask.pinned_total(),
            net.num_params(),
            variants.len(),
            if failures.is_empty() { String::new() } else { format!(", failed: {failures:?}") }
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. tolerance contract and linear-scan oracle

fn check_records(records: &[ThresholdRecord], data: &Dataset, frac: f64, loss: impl Fn(&Network, &Dataset) -> f64) -> (usize, f64) {
    let mut worst = f64::NEG_INFINITY;
    for rec in records {
        let (_, v) = random_split(data, frac, rec.split_seed).unwrap();
        let before = loss(&rec.before, &v);
        let after = loss(&rec.after, &v);
        worst = worst.max(after - before * (1.0 + rec.twt));
    }
    (records.len(), worst)
}

/// Prunes every weight whose magnitude is in the `k` smallest distinct values,
/// mirroring the neuron-removal rule for biases.
fn prune_smallest(net: &Network, distinct: &[f64], k: usize) -> Network {
    let mut out = net.clone();
    let cut = if k == 0 { -1.0 } else { distinct[k - 1] };
    for layer in out.layers_mut() {
        let cols = layer.in_dim();
        for w in layer.weights.data_mut() {
            if w.abs() <= cut {
                *w = 0.0;
            }
        }
        for i in 0..layer.out_dim() {
            if (0..cols).all(|j| layer.weights.at(i, j) == 0.0) {
                layer.bias.data_mut()[i] = 0.0;
            }
        }
    }
    out
}

fn quantised_net(r: &mut impl Rng) -> (Network, Vec<f64>) {
    let levels = r.random_range(3..=12);
    let mut mags: Vec<f64> = Vec::new();
    while mags.len() < levels {
        let m = (r.random_range(1..=60) as f64) * 0.05;
        if !mags.contains(&m) {
            mags.push(m);
        }
    }
    let dims = [3, r.random_range(2..=4), r.random_range(2..=3)];
    let layers = dims
        .windows(2)
        .enumerate()
        .map(|(n, d)| {
            let w: Vec<f64> = (0..d[0] * d[1])
                .map(|_| mags[r.random_range(0..levels)] * if r.random::<bool>() { 1.0 } else { -1.0 })
                .collect();
            let b: Vec<f64> = (0..d[1]).map(|_| r.random_range(-0.3..0.3)).collect();
            let act = if n == 0 { common::pick_activation(r) } else { Activation::Identity };
            DenseLayer::new(Tensor::from_vec(&[d[1], d[0]], w).unwrap(), Tensor::from_vec(&[d[1]], b).unwrap(), act).unwrap()
        })
        .collect();
    let net = Network::new(3, layers).unwrap();
    let mut distinct: Vec<f64> = net.layers().iter().flat_map(|l| l.weights.data()).map(|w| w.abs()).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    (net, distinct)
}

fn twt_contract(toy_records: &[(Vec<ThresholdRecord>, Dataset, f64)], mnist: Option<&MnistRuns>) -> Verdict {
    // (a) every threshold call recorded in end-to-end runs
    let mut calls = 0;
    let mut worst = f64::NEG_INFINITY;
    for (records, data, frac) in toy_records {
        let (c, w) = check_records(records, data, *frac, common::loss);
        calls += c;
        worst = worst.max(w);
    }
    let mut mnist_note = String::from("MNIST runs not available");
    if let Some(m) = mnist {
        let mut mc = 0;
        for run in [&m.lower, &m.l2] {
            let (c, w) = check_records(&run.thresholds, &m.train, run.hp.validation_fraction, |n, d| evaluate(n, d).unwrap().loss);
            mc += c;
            worst = worst.max(w);
        }
        calls += mc;
        mnist_note = format!("{mc} of them on MNIST");
    }
    let contract_ok = calls > 0 && worst <= 0.0;

    // (b) linear-scan oracle on nets with few distinct magnitudes
    let mut compared = 0;
    let mut mismatches = 0;
    let mut non_monotone = 0;
    for seed in 0..200u64 {
        let mut r = common::rng(5000 + seed);
        let (net, distinct) = quantised_net(&mut r);
        let x = common::random_inputs(&mut r, 12, 3);
        let y = common::random_labels(&mut r, 12, net.output_dim());
        let v = Dataset::new(x, y, net.output_dim()).unwrap();
        let twt = [0.0, 0.05, 0.3, 1.0][seed as usize % 4];
        let bound = common::loss(&net, &v) * (1.0 + twt);
        let feasible: Vec<bool> = (1..=distinct.len()).map(|k| common::loss(&prune_smallest(&net, &distinct, k), &v) <= bound).collect();
        // the scan is only meaningful where feasibility is a prefix
        let k_star = feasible.iter().take_while(|f| **f).count();
        if feasible[k_star..].iter().any(|f| *f) {
            non_monotone += 1;
            continue;
        }
        compared += 1;
        let expected = prune_smallest(&net, &distinct, k_star);
        let got = find_threshold(&net, &PinMask::empty(&net), &v, twt).unwrap();
        let same = got.network.layers().iter().zip(expected.layers()).all(|(a, b)| a.weights == b.weights && a.bias == b.bias);
        if !same || got.no_prune != (k_star == 0) {
            mismatches += 1;
        }
    }
    let oracle_ok = compared >= 100 && mismatches == 0;
    verdict(
        contract_ok && oracle_ok,
        format!(
            "{calls} recorded searches ({mnist_note}), worst Loss(after) - bound = {worst:.3e}; linear scan: {compared} nets compared, {mismatches} mismatches, {non_monotone} non-monotone skipped"
        ),
    )
}

// ---------------------------------------------------------------------------
// 9. returned network's recorded validation accuracy ≥ A

struct RunResult {
    name: String,
    input: Network,
    data: Dataset,
    hp: Hyperparams,
    outcome: SereneOutcome,
    thresholds: Vec<ThresholdRecord>,
    seconds: f64,
}

fn run_serene(name: &str, net: &Network, data: &Dataset, hp: Hyperparams, rule: UpdateRule) -> RunResult {
    let start = Instant::now();
    let mut state = PruneRunState::new(net.clone(), PinMask::empty(net)).unwrap();
    state.record_thresholds = true;
    let mut trainer = SgdTrainer::new(hp.clone(), rule).unwrap();
    state.run(data, &hp, &mut trainer).unwrap();
    let thresholds = std::mem::take(&mut state.thresholds);
    RunResult {
        name: name.to_string(),
        input: net.clone(),
        data: data.clone(),
        hp,
        outcome: state.into(),
        thresholds,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn return_contract(runs: &[&RunResult]) -> Verdict {
    let mut problems = Vec::new();
    let mut accepted = 0;
    for run in runs {
        let o = &run.outcome;
        let last_accept = o.events.iter().rev().find(|e| e.kind == EventKind::Accepted);
        match (last_accept, o.validation_accuracy, o.validation_split_seed) {
            (Some(ev), Some(acc), Some(split)) => {
                accepted += 1;
                let logged = ev.validation_accuracy.unwrap_or(f64::NAN);
                let (_, v) = random_split(&run.data, run.hp.validation_fraction, split).unwrap();
                let measured = evaluate(&o.network, &v).unwrap().accuracy;
                if !(logged >= run.hp.target_accuracy) || logged != acc || measured != logged {
                    problems.push(format!("{}: logged {logged}, measured {measured}, A {}", run.name, run.hp.target_accuracy));
                }
            }
            (None, None, None) => {
                if o.network != run.input {
                    problems.push(format!("{}: no accepted network but output differs from input", run.name));
                }
            }
            _ => problems.push(format!("{}: inconsistent outcome bookkeeping", run.name)),
        }
    }
    verdict(
        problems.is_empty() && accepted > 0,
        format!(
            "{} runs ({accepted} with an accepted network){}",
            runs.len(),
            if problems.is_empty() { String::new() } else { format!(": {problems:?}") }
        ),
    )
}

fn toy_runs() -> Vec<RunResult> {
    let mut runs = Vec::new();
    let blobs = synthetic_blobs(60, 2, 4, 5.0, 21).unwrap();
    let relu = toy_classifier(&[4, 8, 2], &[Activation::Relu, Activation::Identity], &blobs, 30, 1);
    let sig = toy_classifier(&[4, 8, 2], &[Activation::Sigmoid, Activation::Identity], &blobs, 30, 2);
    let base = Hyperparams {
        eta: 0.1,
        lambda: 1e-3,
        pwe: 2,
        twt: 0.3,
        target_accuracy: 0.95,
        batch_size: 10,
        seed: 5,
        validation_fraction: 0.2,
        max_outer_iters: 8,
        ..Hyperparams::default()
    };
    for e in Estimator::ALL {
        let hp = Hyperparams { estimator: e, ..base.clone() };
        runs.push(run_serene(&format!("toy relu {e}"), &relu, &blobs, hp, UpdateRule::Sensitivity));
    }
    runs.push(run_serene("toy sigmoid lower", &sig, &blobs, base.clone(), UpdateRule::Sensitivity));
    runs.push(run_serene(
        "toy relu l2",
        &relu,
        &blobs,
        Hyperparams { lambda: 0.0, weight_decay: 1e-3, twt: 0.0, ..base.clone() },
        UpdateRule::L2,
    ));
    runs.push(run_serene("toy unreachable target", &relu, &blobs, Hyperparams { target_accuracy: 1.01, ..base }, UpdateRule::Sensitivity));
    runs
}

// ---------------------------------------------------------------------------
// MNIST criteria

/// Desk-scale schedule: pretraining plus pruning stays within 60 epochs.
const PRETRAIN_EPOCHS: usize = 20;
const PRUNE_EPOCHS: usize = 40;
const TARGET_ACCURACY: f64 = 0.98;

struct MnistRuns {
    train: Dataset,
    test: Dataset,
    pretrained: Network,
    lower: RunResult,
    l2: RunResult,
}

fn mnist_dir() -> PathBuf {
    std::env::var_os("SERENE_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn load_mnist() -> Option<(Dataset, Dataset)> {
    let dir = mnist_dir();
    let train = load_mnist_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte")).ok()?;
    let test = load_mnist_idx(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte")).ok()?;
    Some((train, test))
}

fn mnist_runs() -> Option<MnistRuns> {
    let (train, test) = load_mnist()?;
    let start = Instant::now();
    let acts = [Activation::Relu, Activation::Relu, Activation::Identity];
    let mut net = Network::seeded(&[784, 300, 100, 10], &acts, 0).unwrap();
    let pre_hp = Hyperparams {
        eta: 0.1,
        weight_decay: 1e-4,
        batch_size: 100,
        seed: 0,
        ..Hyperparams::default()
    };
    let mut t = SgdTrainer::new(pre_hp, UpdateRule::L2).unwrap();
    let mask = PinMask::empty(&net);
    for _ in 0..PRETRAIN_EPOCHS {
        t.train_epoch(&mut net, &train, &mask).unwrap();
    }
    eprintln!(
        "  pretrained LeNet-300 in {:.0}s, test accuracy {:.4}",
        start.elapsed().as_secs_f64(),
        evaluate(&net, &test).unwrap().accuracy
    );

    let hp = Hyperparams {
        eta: 0.1,
        lambda: 1e-5,
        pwe: 3,
        twt: 0.3,
        target_accuracy: TARGET_ACCURACY,
        batch_size: 100,
        seed: 0,
        estimator: Estimator::Lower,
        epoch_budget: Some(PRUNE_EPOCHS),
        ..Hyperparams::default()
    };
    let lower = run_serene("mnist lower", &net, &train, hp.clone(), UpdateRule::Sensitivity);
    eprintln!("  lower-bound run took {:.0}s", lower.seconds);
    let l2_hp = Hyperparams {
        lambda: 0.0,
        weight_decay: 1e-4,
        twt: 0.0,
        ..hp
    };
    let l2 = run_serene("mnist l2", &net, &train, l2_hp, UpdateRule::L2);
    eprintln!("  l2 baseline run took {:.0}s", l2.seconds);
    Some(MnistRuns {
        train,
        test,
        pretrained: net,
        lower,
        l2,
    })
}

fn mean_ordering(m: &MnistRuns) -> Verdict {
    let x = m.test.head(1000).features;
    let maps: Vec<_> = Estimator::ALL.iter().map(|e| sensitivity_chunked(&m.pretrained, &x, *e, 250).unwrap()).collect();
    let h = histogram(&maps, 60).unwrap();
    let out = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("lenet300_sensitivity.csv");
    let _ = std::fs::write(&out, h.to_csv());
    let s = h.summary();
    let (lo, ex, up) = (s.lower.unwrap(), s.exact.unwrap(), s.upper.unwrap());
    let median = |m: &serene_core::SensitivityMap| {
        let mut v: Vec<f64> = m.iter().collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (med_lo, med_up) = (median(&maps[1]), median(&maps[2]));
    let above = maps[2].iter().filter(|u| *u > med_lo).count() as f64 / maps[2].num_neurons() as f64;
    verdict(
        lo <= ex && ex <= up && med_up > med_lo && above > 0.5,
        format!(
            "means lower {lo:.3e} <= exact {ex:.3e} <= upper {up:.3e}; medians lower {med_lo:.3e}, upper {med_up:.3e}; {:.0}% of upper values above the lower median; histogram at {}",
            100.0 * above,
            out.display()
        ),
    )
}

fn mnist_pruning(m: &MnistRuns) -> Verdict {
    let o = &m.lower.outcome;
    let report = prune_report(&o.network, &o.mask, None, RunMetadata::default()).unwrap().with_test(&o.network, &m.test).unwrap();
    let err = report.test_error.unwrap();
    let removed = removed_hidden_neurons(&o.network);
    let epochs = PRETRAIN_EPOCHS + o.epochs;
    verdict(
        report.compression_ratio >= 5.0 && err <= 0.025 && removed >= 1 && epochs <= 60,
        format!(
            "ratio {:.2}x (>= 5), test error {:.2}% (<= 2.5%), {removed} hidden neurons removed, {epochs} epochs ({PRETRAIN_EPOCHS} pretraining + {}), A = {TARGET_ACCURACY}",
            report.compression_ratio,
            100.0 * err,
            o.epochs
        ),
    )
}

fn l2_direction(m: &MnistRuns) -> Verdict {
    let lower = removed_hidden_neurons(&m.lower.outcome.network);
    let l2 = removed_hidden_neurons(&m.l2.outcome.network);
    let ratio = |o: &SereneOutcome| o.network.num_params() as f64 / o.network.num_nonzero_weights().max(1) as f64;
    verdict(
        lower >= l2,
        format!(
            "hidden neurons removed: lower {lower}, l2 baseline {l2} (weight ratio {:.2}x vs {:.2}x)",
            ratio(&m.lower.outcome),
            ratio(&m.l2.outcome)
        ),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut record = |id, name, v: Verdict| {
        let tag = match v.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        println!("[{tag}] criterion {id}: {name}: {}", v.detail);
        results.push((id, name, v));
    };

    record(1, "bound sandwich", bound_sandwich());
    record(2, "finite-difference oracle", finite_difference());
    record(3, "rewritten update equivalence", rewritten_equivalence());
    record(4, "pin permanence", pin_permanence());

    let toys = toy_runs();
    let mnist = mnist_runs();
    let toy_records: Vec<_> = toys.iter().map(|r| (r.thresholds.clone(), r.data.clone(), r.hp.validation_fraction)).collect();
    record(5, "tolerance contract", twt_contract(&toy_records, mnist.as_ref()));

    let missing = format!("MNIST IDX files not found under {}", mnist_dir().display());
    match &mnist {
        Some(m) => {
            record(6, "mean ordering on LeNet-300", mean_ordering(m));
            record(7, "desk-scale MNIST pruning", mnist_pruning(m));
            record(8, "l2 ablation direction", l2_direction(m));
        }
        None => {
            record(6, "mean ordering on LeNet-300", skip(&missing));
            record(7, "desk-scale MNIST pruning", skip(&missing));
            record(8, "l2 ablation direction", skip(&missing));
        }
    }
    let mut all: Vec<&RunResult> = toys.iter().collect();
    if let Some(m) = &mnist {
        all.push(&m.lower);
        all.push(&m.l2);
    }
    record(9, "return contract", return_contract(&all));

    let failed = results.iter().filter(|r| r.2.status == Status::Fail).count();
    let skipped = results.iter().filter(|r| r.2.status == Status::Skip).count();
    println!("{} passed, {failed} failed, {skipped} skipped", results.len() - failed - skipped);
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
