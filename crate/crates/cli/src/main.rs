//! `mshapelets`: synthesize data, train masked shapelet models, evaluate
//! them against baselines, check gradients and run grid searches.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use masked_shapelets::baselines::NnDtw;
use masked_shapelets::dataset::{load_dataset, save_dataset};
use masked_shapelets::eval::{
    error_rate_with, export_masks, grid_search, mask_snapshot_header, mask_snapshot_rows, masks_csv,
};
use masked_shapelets::gradients::gradcheck;
use masked_shapelets::model::{load_model, save_model};
use masked_shapelets::synthgen::{generate, SynthConfig};
use masked_shapelets::trainer::{train_with_observer, MaskInit, TrainConfig, TrainEvent, METRICS_HEADER};
use masked_shapelets::{Activation, Error, Execution, TimeSeriesDataset};

#[derive(Parser)]
#[command(name = "mshapelets", version)]
#[command(about = "Learn channel-masked shapelets for multivariate time series classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the planted-pattern synthetic benchmark
    Synth(SynthArgs),
    /// Train a shapelet model
    Train(TrainArgs),
    /// Report the error rate of a model or of 1-NN DTW on a dataset
    Eval(EvalArgs),
    /// Compare analytic gradients against central finite differences
    Gradcheck(GradcheckArgs),
    /// Cross-validated search over K and lambda
    Gridsearch(GridArgs),
    /// Export the activated masks of a trained model as CSV
    Masks(MasksArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out_train: PathBuf,
    #[arg(long)]
    out_test: PathBuf,
    /// Sidecar manifest; defaults to `<out-train>.manifest.json`
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 500)]
    train_size: usize,
    #[arg(long, default_value_t = 200)]
    test_size: usize,
    #[arg(long, default_value_t = 40)]
    channels: usize,
    #[arg(long, default_value_t = 202)]
    length: usize,
    #[arg(long, default_value_t = 25)]
    pattern_length: usize,
    #[arg(long, default_value_t = 0.1)]
    noise_sd: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum ActivationArg {
    Relu,
    Sigmoid,
}

impl From<ActivationArg> for Activation {
    fn from(a: ActivationArg) -> Self {
        match a {
            ActivationArg::Relu => Activation::Relu,
            ActivationArg::Sigmoid => Activation::Sigmoid,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskInitArg {
    Abs,
    Normal,
}

/// Hyperparameters shared by `train` and `gridsearch`.
#[derive(Args)]
struct Hyper {
    /// Number of shapelets
    #[arg(short = 'K', long = "shapelets", default_value_t = 20)]
    num_shapelets: usize,
    #[arg(long, default_value_t = 10)]
    lmin: usize,
    #[arg(long, default_value_t = 30)]
    lmax: usize,
    #[arg(long, default_value_t = 0.01)]
    lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    eta: f64,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, value_enum, default_value_t = ActivationArg::Relu)]
    activation: ActivationArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = MaskInitArg::Abs)]
    mask_init: MaskInitArg,
    /// Update parameters after every class term instead of once per instance
    #[arg(long)]
    inner_class_updates: bool,
    #[arg(long, default_value_t = 1e-8)]
    adagrad_epsilon: f64,
    /// Z-normalize every channel of every instance before use
    #[arg(long)]
    znorm: bool,
    /// Run everything on the calling thread
    #[arg(long)]
    sequential: bool,
}

impl Hyper {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            num_shapelets: self.num_shapelets,
            min_length: self.lmin,
            max_length: self.lmax,
            lambda: self.lambda,
            learning_rate: self.eta,
            max_iter: self.iters,
            activation: self.activation.into(),
            seed: self.seed,
            mask_init: match self.mask_init {
                MaskInitArg::Abs => MaskInit::AbsNormal,
                MaskInitArg::Normal => MaskInit::Normal,
            },
            inner_class_updates: self.inner_class_updates,
            adagrad_epsilon: self.adagrad_epsilon,
            execution: execution(self.sequential),
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out_model: PathBuf,
    /// Per-iteration metrics CSV
    #[arg(long)]
    log: PathBuf,
    #[command(flatten)]
    hyper: Hyper,
    /// Train the unmasked baseline (all masks fixed at 1)
    #[arg(long)]
    no_masks: bool,
    /// Record activated masks every N iterations (0 disables)
    #[arg(long, default_value_t = 0, value_name = "N")]
    mask_snapshots: usize,
    /// Snapshot file; defaults to `<out-model>.masks.csv`
    #[arg(long)]
    snapshot_out: Option<PathBuf>,
    /// Write 0 in the seconds column so identical runs give identical logs
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, required_unless_present = "nn_dtw", conflicts_with = "nn_dtw")]
    model: Option<PathBuf>,
    /// Classify with 1-NN under multivariate DTW instead of a model
    #[arg(long, requires = "train_data")]
    nn_dtw: bool,
    #[arg(long)]
    train_data: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    znorm: bool,
    /// Optional JSON report
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, value_delimiter = ',', default_value = "10,20,40,100")]
    k_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.001,0.01,0.1")]
    lambda_grid: Vec<f64>,
    #[command(flatten)]
    hyper: Hyper,
}

#[derive(Args)]
struct MasksArgs {
    #[arg(long)]
    model: PathBuf,
    /// Output CSV; prints to stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failures mapped onto the documented exit codes.
enum Failure {
    Check(String),
    Usage(String),
    Io(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
            Failure::Numeric(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Check(m) | Failure::Usage(m) | Failure::Io(m) | Failure::Numeric(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::RaggedChannels { .. }
            | Error::ChannelCount { .. }
            | Error::EmptyDataset
            | Error::VersionMismatch { .. }
            | Error::Schema(_) => Failure::Io(msg),
            Error::NonFinite { .. } => Failure::Numeric(msg),
            Error::UnknownLabel(_)
            | Error::InvalidConfig(_)
            | Error::ShapeletTooLong { .. }
            | Error::DimensionMismatch(_) => Failure::Usage(msg),
        }
    }
}

type Outcome = std::result::Result<(), Failure>;

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Io(format!("i/o error on {}: {e}", path.display()))
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn load(path: &Path, znorm: bool) -> Result<TimeSeriesDataset, Failure> {
    let ds = load_dataset(path)?;
    Ok(if znorm { ds.znormalized() } else { ds })
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn write_json(path: &Path, value: &serde_json::Value) -> Outcome {
    let text = serde_json::to_string_pretty(value).expect("json values always serialize");
    std::fs::write(path, text + "\n").map_err(|e| io_failure(path, e))
}

fn cmd_synth(args: SynthArgs) -> Outcome {
    let cfg = SynthConfig {
        train_size: args.train_size,
        test_size: args.test_size,
        num_channels: args.channels,
        series_length: args.length,
        pattern_length: args.pattern_length,
        noise_sd: args.noise_sd,
        seed: args.seed,
    };
    let (train, test) = generate(&cfg)?;
    save_dataset(&train, &args.out_train)?;
    save_dataset(&test, &args.out_test)?;
    let manifest = args.manifest.unwrap_or_else(|| with_suffix(&args.out_train, ".manifest.json"));
    write_json(
        &manifest,
        &json!({
            "generator": "planted-patterns",
            "config": cfg,
            "train": args.out_train.display().to_string(),
            "test": args.out_test.display().to_string(),
        }),
    )?;
    println!(
        "wrote {} train and {} test instances ({} channels, length {}) with seed {}",
        train.len(),
        test.len(),
        cfg.num_channels,
        cfg.series_length,
        cfg.seed
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Outcome {
    let cfg = args.hyper.config();
    cfg.validate()?;
    let ds = load(&args.data, args.hyper.znorm)?;

    let create = |path: &Path| File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e));
    let mut log = create(&args.log)?;
    writeln!(log, "{METRICS_HEADER}").map_err(|e| io_failure(&args.log, e))?;
    let snapshot_path = args
        .snapshot_out
        .clone()
        .unwrap_or_else(|| with_suffix(&args.out_model, ".masks.csv"));
    let mut snapshots = match args.mask_snapshots {
        0 => None,
        _ => Some(create(&snapshot_path)?),
    };
    let timing = !args.no_timing;

    let log_path = args.log.clone();
    let (model, metrics) = train_with_observer(&cfg, &ds, args.no_masks, |event| match event {
        TrainEvent::Initialized(model) => match snapshots.as_mut() {
            Some(out) => writeln!(out, "{}", mask_snapshot_header(model.num_channels()))
                .and_then(|_| write!(out, "{}", mask_snapshot_rows(model, 0)))
                .map_err(|e| Error::io(&snapshot_path, e)),
            None => Ok(()),
        },
        TrainEvent::Iteration(record, model) => {
            writeln!(log, "{}", record.csv_row(timing))
                .and_then(|_| log.flush())
                .map_err(|e| Error::io(&log_path, e))?;
            match snapshots.as_mut() {
                Some(out) if record.iteration % args.mask_snapshots == 0 => {
                    write!(out, "{}", mask_snapshot_rows(model, record.iteration))
                        .map_err(|e| Error::io(&snapshot_path, e))
                }
                _ => Ok(()),
            }
        }
    })?;
    if let Some(mut out) = snapshots {
        out.flush().map_err(|e| io_failure(&snapshot_path, e))?;
    }
    save_model(&model, &args.out_model)?;

    match metrics.records.last() {
        Some(last) => println!("train_error={} objective={}", last.train_error, last.objective),
        None => println!("train_error=n/a (0 iterations)"),
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Outcome {
    let ds = load(&args.data, args.znorm)?;
    let exec = execution(args.sequential);
    let (method, rate) = match (&args.model, &args.train_data) {
        (Some(path), _) => {
            let model = load_model(path)?;
            let method = if model.masks_frozen { "unmasked" } else { "masked" };
            (method, error_rate_with(&model, &ds, exec)?)
        }
        (None, Some(train_path)) => {
            let train = load(train_path, args.znorm)?;
            ("nn-dtw", error_rate_with(&NnDtw::new(&train), &ds, exec)?)
        }
        (None, None) => return Err(Failure::Usage("either --model or --nn-dtw --train-data is required".into())),
    };
    println!("error_rate={rate:.3}");
    if let Some(report) = &args.report {
        write_json(
            report,
            &json!({
                "method": method,
                "data": args.data.display().to_string(),
                "instances": ds.len(),
                "error_rate": rate,
            }),
        )?;
    }
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Outcome {
    if !(args.tolerance >= 0.0) {
        return Err(Failure::Usage("tolerance must be >= 0".into()));
    }
    let report = gradcheck(args.seed, args.trials, args.tolerance, execution(args.sequential))?;
    println!(
        "max_relative_error={:e} checked={} skipped_degenerate={}",
        report.max_relative_error, report.checked, report.skipped_degenerate
    );
    if report.passed() {
        return Ok(());
    }
    for d in &report.failures {
        println!(
            "FAIL trial {} {}: analytic {:e} numeric {:e} relative error {:e}",
            d.trial, d.coordinate, d.analytic, d.numeric, d.relative_error
        );
    }
    Err(Failure::Check(format!(
        "{} coordinates exceed tolerance {:e}",
        report.failures.len(),
        args.tolerance
    )))
}

fn cmd_gridsearch(args: GridArgs) -> Outcome {
    let cfg = args.hyper.config();
    let ds = load(&args.data, args.hyper.znorm)?;
    let result = grid_search(&ds, args.folds, &args.k_grid, &args.lambda_grid, &cfg)?;
    std::fs::write(&args.out, result.to_csv()).map_err(|e| io_failure(&args.out, e))?;
    println!(
        "best K={} lambda={} mean_val_error={}",
        result.best.num_shapelets, result.best.lambda, result.best.mean_error
    );
    Ok(())
}

fn cmd_masks(args: MasksArgs) -> Outcome {
    let model = load_model(&args.model)?;
    match &args.out {
        Some(path) => export_masks(&model, path)?,
        None => print!("{}", masks_csv(&model)),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Gridsearch(a) => cmd_gridsearch(a),
        Command::Masks(a) => cmd_masks(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
