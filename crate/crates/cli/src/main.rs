//! `serene`: pretrain, prune, evaluate and inspect dense classifiers.

mod arch;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serene_core::data::{load_mnist_idx, synthetic_blobs};
use serene_core::net::evaluate;
use serene_core::pruner::{serene, EpochTrainer, SgdTrainer};
use serene_core::reporting::{load_model, prune_report, save_model, sensitivity_histogram, RunMetadata};
use serene_core::sensitivity::sensitivity_chunked;
use serene_core::{Dataset, Estimator, Hyperparams, Network, PinMask, UpdateRule};

use arch::{parse_arch, ArchError};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error(transparent)]
    Core(#[from] serene_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use serene_core::Error as E;
        match self {
            CliError::Usage(_) | CliError::Arch(_) | CliError::Core(E::Input(_)) => 2,
            CliError::Core(E::NonFinite { .. }) => 4,
            CliError::Core(_) | CliError::Io { .. } => 3,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "serene", version, about = "Sensitivity-regularized neuron pruning for dense classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network from a seeded initialization (or a checkpoint).
    Pretrain(PretrainArgs),
    /// Regularize and threshold a trained network.
    Prune(PruneArgs),
    /// Print accuracy and loss of a model on a dataset.
    Eval(EvalArgs),
    /// Write a histogram of the four sensitivity estimators.
    Hist(HistArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// IDX image file.
    #[arg(long)]
    data_images: Option<PathBuf>,
    /// IDX label file.
    #[arg(long)]
    data_labels: Option<PathBuf>,
    /// Synthetic data instead of files: `blobs:PER_CLASS:CLASSES:DIM:SEPARATION`.
    #[arg(long, conflicts_with_all = ["data_images", "data_labels"])]
    synthetic: Option<String>,
}

#[derive(Args, Clone)]
struct TestArgs {
    /// IDX image file scored as a held-out test set.
    #[arg(long, requires = "test_labels")]
    test_images: Option<PathBuf>,
    #[arg(long, requires = "test_images")]
    test_labels: Option<PathBuf>,
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long, default_value = "784-300-100-10:relu")]
    arch: String,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    test: TestArgs,
    /// Resume from this model instead of a fresh initialization.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 1e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = 20)]
    epochs_cap: usize,
    /// Stop once training accuracy reaches this fraction.
    #[arg(long)]
    target_acc: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PruneArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    test: TestArgs,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 1e-5)]
    lambda: f64,
    #[arg(long, default_value_t = 20)]
    pwe: usize,
    #[arg(long, default_value_t = 0.3)]
    twt: f64,
    #[arg(long, default_value_t = 0.98)]
    target_acc: f64,
    /// exact, lower, upper, local or l2-baseline.
    #[arg(long, default_value = "lower")]
    estimator: String,
    /// Decay coefficient of the l2-baseline rule.
    #[arg(long, default_value_t = 1e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 0.0)]
    momentum: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    batch: usize,
    /// Total training epochs allowed across the run.
    #[arg(long)]
    epochs_cap: Option<usize>,
    #[arg(long, default_value_t = 100)]
    max_outer_iters: usize,
    #[arg(long, default_value_t = 0.1)]
    validation_fraction: f64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct HistArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Leading samples of the dataset to average over.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 60)]
    bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

fn load_data(args: &DataArgs, seed: u64) -> Result<Dataset> {
    if let Some(spec) = &args.synthetic {
        let parts: Vec<&str> = spec.split(':').collect();
        let bad = || CliError::Usage(format!("bad synthetic spec {spec:?}, expected blobs:PER_CLASS:CLASSES:DIM:SEPARATION"));
        if parts.len() != 5 || parts[0] != "blobs" {
            return Err(bad());
        }
        let n = |s: &str| s.parse::<usize>().map_err(|_| bad());
        let sep: f64 = parts[4].parse().map_err(|_| bad())?;
        return Ok(synthetic_blobs(n(parts[1])?, n(parts[2])?, n(parts[3])?, sep, seed)?);
    }
    match (&args.data_images, &args.data_labels) {
        (Some(i), Some(l)) => Ok(load_mnist_idx(i, l)?),
        _ => Err(CliError::Usage("pass --data-images and --data-labels, or --synthetic".into())),
    }
}

fn load_test(args: &TestArgs) -> Result<Option<Dataset>> {
    match (&args.test_images, &args.test_labels) {
        (Some(i), Some(l)) => Ok(Some(load_mnist_idx(i, l)?)),
        _ => Ok(None),
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn check_input_dim(net: &Network, data: &Dataset) -> Result<()> {
    if net.input_dim() != data.dim() {
        return Err(serene_core::Error::Dimension {
            layer: 0,
            expected: net.input_dim(),
            found: data.dim(),
        }
        .into());
    }
    Ok(())
}

fn pretrain(a: PretrainArgs) -> Result<()> {
    let data = load_data(&a.data, a.seed)?;
    let test = load_test(&a.test)?;
    let (mut net, mask) = match &a.checkpoint {
        Some(p) => load_model(p)?,
        None => {
            let arch = parse_arch(&a.arch)?;
            let net = Network::seeded(&arch.dims, &arch.activations, a.seed)?;
            let mask = PinMask::empty(&net);
            (net, mask)
        }
    };
    check_input_dim(&net, &data)?;
    ensure_dir(&a.out_dir)?;
    let hp = Hyperparams {
        eta: a.eta,
        weight_decay: a.weight_decay,
        batch_size: a.batch,
        seed: a.seed,
        ..Hyperparams::default()
    };
    let mut trainer = SgdTrainer::new(hp, UpdateRule::L2)?;
    let mut log = String::new();
    for epoch in 1..=a.epochs_cap {
        let loss = trainer.train_epoch(&mut net, &data, &mask)?;
        let train = evaluate(&net, &data)?;
        let test_acc = test.as_ref().map(|t| evaluate(&net, t)).transpose()?.map(|e| e.accuracy);
        let record = serde_json::json!({
            "epoch": epoch,
            "batch_loss": loss,
            "train_loss": train.loss,
            "train_accuracy": train.accuracy,
            "test_accuracy": test_acc,
        });
        println!("{record}");
        log.push_str(&format!("{record}\n"));
        if a.target_acc.is_some_and(|t| train.accuracy >= t) {
            break;
        }
    }
    let path = a.out_dir.join("model.srn");
    save_model(&net, &mask, &path)?;
    write(&a.out_dir.join("pretrain_log.jsonl"), log)?;
    println!("saved {}", path.display());
    Ok(())
}

fn prune(a: PruneArgs) -> Result<()> {
    let (rule, estimator) = match a.estimator.as_str() {
        "l2-baseline" | "l2" => (UpdateRule::L2, Estimator::Lower),
        other => (UpdateRule::Sensitivity, other.parse::<Estimator>().map_err(|e| CliError::Usage(e.to_string()))?),
    };
    let (net, mask) = load_model(&a.checkpoint)?;
    let data = load_data(&a.data, a.seed)?;
    let test = load_test(&a.test)?;
    check_input_dim(&net, &data)?;
    ensure_dir(&a.out_dir)?;
    let hp = Hyperparams {
        eta: a.eta,
        lambda: if rule == UpdateRule::L2 { 0.0 } else { a.lambda },
        pwe: a.pwe,
        twt: a.twt,
        target_accuracy: a.target_acc,
        batch_size: a.batch,
        seed: a.seed,
        estimator,
        weight_decay: if rule == UpdateRule::L2 { a.weight_decay } else { 0.0 },
        momentum: a.momentum,
        validation_fraction: a.validation_fraction,
        max_outer_iters: a.max_outer_iters,
        epoch_budget: a.epochs_cap,
    };
    let out = serene(&net, &mask, &data, &hp, rule)?;

    let v = match out.validation_split_seed {
        Some(s) => serene_core::data::random_split(&data, hp.validation_fraction, s)?.1,
        None => {
            let first = serene_core::seed::derive(hp.seed, serene_core::seed::Stream::Split, 0);
            serene_core::data::random_split(&data, hp.validation_fraction, first)?.1
        }
    };
    let meta = RunMetadata {
        seed: Some(a.seed),
        method: Some(a.estimator.clone()),
        hyperparams: Some(hp),
    };
    let mut report = prune_report(&out.network, &out.mask, Some(&v), meta)?;
    if let Some(t) = &test {
        report = report.with_test(&out.network, t)?;
    }
    save_model(&out.network, &out.mask, a.out_dir.join("pruned.srn"))?;
    report.write_json(a.out_dir.join("report.json"))?;
    write(&a.out_dir.join("report.txt"), report.to_string())?;
    let mut events = String::new();
    for e in &out.events {
        events.push_str(&serde_json::to_string(e).expect("event serializes"));
        events.push('\n');
    }
    write(&a.out_dir.join("events.jsonl"), events)?;
    print!("{report}");
    println!("stopped: {:?} after {} iterations, {} epochs", out.stop, out.iterations, out.epochs);
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let (net, _) = load_model(&a.checkpoint)?;
    let data = load_data(&a.data, a.seed)?;
    check_input_dim(&net, &data)?;
    let e = evaluate(&net, &data)?;
    println!("accuracy {:.6}", e.accuracy);
    println!("loss {:.6}", e.loss);
    Ok(())
}

fn hist(a: HistArgs) -> Result<()> {
    if a.samples == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    let (net, _) = load_model(&a.checkpoint)?;
    let data = load_data(&a.data, a.seed)?.head(a.samples);
    check_input_dim(&net, &data)?;
    ensure_dir(&a.out_dir)?;
    let maps = Estimator::ALL
        .iter()
        .map(|e| sensitivity_chunked(&net, &data.features, *e, 250))
        .collect::<serene_core::Result<Vec<_>>>()?;
    let path = a.out_dir.join("sensitivity.csv");
    let s = sensitivity_histogram(&maps, a.bins, &path)?;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "wrote {}", path.display());
    for (name, m) in [("exact", s.exact), ("lower", s.lower), ("upper", s.upper), ("local", s.local)] {
        let _ = writeln!(out, "mean_{name} {:.6e}", m.unwrap_or(f64::NAN));
    }
    Ok(())
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("SERENE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("SERENE_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Pretrain(a) => pretrain(a),
        Command::Prune(a) => prune(a),
        Command::Eval(a) => eval(a),
        Command::Hist(a) => hist(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
