use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use gazetype::augment::AugmentConfig;
use gazetype::estimator::{
    build_model, evaluate_split, load_weights, save_weights, train_from_manifest, write_history_csv,
    EstimatorError, EvalReport, ModelConfig, TrainConfig,
};
use gazetype::filter::{self, FilterError, NoiseScript};
use gazetype::service::{replay_log, Server, ServiceContext, ServiceError, SessionConfig};
use gazetype::synth::dataset::{generate_dataset, load_manifest, DatasetError, Split, SplitCounts, MANIFEST_FILE};
use gazetype::synth::SynthParams;
use gazetype::t9::{self, compute_metrics, Layout, T9Error};
use gazetype::EyeState;

#[derive(Parser)]
#[command(name = "gazetype", version, about = "Gaze-driven T9 typing: data, training, evaluation and serving")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic eye-strip dataset.
    GenData(GenData),
    /// Train the classifier on a dataset.
    Train(TrainCmd),
    /// Report top-1/top-2 accuracy on dataset splits.
    Eval(EvalCmd),
    /// Generate a noisy gaze stream and filter it.
    Simulate(SimulateCmd),
    /// Replay a filtered stream or session log through the keyboard.
    Type(TypeCmd),
    /// Run the session service.
    Serve(ServeCmd),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Training images per class.
    #[arg(long, default_value_t = 200)]
    train: usize,
    #[arg(long, default_value_t = 50)]
    val: usize,
    #[arg(long, default_value_t = 50)]
    test_known: usize,
    #[arg(long, default_value_t = 50)]
    test_unknown: usize,
    /// 32x64 single-eye strips instead of 32x128 two-eye strips.
    #[arg(long)]
    single_eye: bool,
}

#[derive(Args)]
struct TrainCmd {
    #[arg(long)]
    dataset: PathBuf,
    /// Output weight file.
    #[arg(long)]
    weights: PathBuf,
    /// Per-epoch history CSV; defaults to the weights path with .history.csv.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    /// Samples drawn from the augmented pool per epoch (default: all).
    #[arg(long)]
    samples_per_epoch: Option<usize>,
    #[arg(long, default_value_t = 10)]
    lr_halving_epochs: usize,
    /// Train on the plain images only.
    #[arg(long)]
    no_augment: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    TestKnown,
    TestUnknown,
    /// Both test splits.
    Test,
}

#[derive(Args)]
struct EvalCmd {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Write the reports as JSON, keyed by split name.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateCmd {
    /// Noise script JSON; defaults to a sweep over directions 1-9 then closed.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = filter::DEFAULT_CAPACITY)]
    capacity: usize,
    /// Trace CSV destination (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TypeCmd {
    /// Filtered-stream CSV (frame,state) or session log (.jsonl).
    #[arg(long)]
    script: PathBuf,
    /// Intended text, for the error rate.
    #[arg(long)]
    reference: Option<String>,
    /// Frame rate used to turn frame counts into seconds.
    #[arg(long, default_value_t = 29.0)]
    fps: f64,
    /// Write the engine events as JSON lines.
    #[arg(long)]
    events: Option<PathBuf>,
}

#[derive(Args)]
struct ServeCmd {
    /// Key-value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    listen: Option<String>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    log_dir: Option<PathBuf>,
}

/// Failures grouped by exit code.
#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Malformed(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 3,
            CliError::Malformed(_) => 4,
            CliError::Runtime(_) => 5,
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => CliError::Input(e.to_string()),
            DatasetError::Synth(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Malformed(e.to_string()),
        }
    }
}

impl From<EstimatorError> for CliError {
    fn from(e: EstimatorError) -> Self {
        match e {
            EstimatorError::Dataset(d) => d.into(),
            EstimatorError::Io { .. } => CliError::Input(e.to_string()),
            EstimatorError::Nn(_) | EstimatorError::Topology(_) | EstimatorError::Dimensions { .. } => {
                CliError::Malformed(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Model(m) => m.into(),
            ServiceError::Io { .. } => CliError::Input(e.to_string()),
            ServiceError::Socket(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Malformed(e.to_string()),
        }
    }
}

impl From<T9Error> for CliError {
    fn from(e: T9Error) -> Self {
        match e {
            T9Error::Io(_) => CliError::Input(e.to_string()),
            _ => CliError::Malformed(e.to_string()),
        }
    }
}

impl From<FilterError> for CliError {
    fn from(e: FilterError) -> Self {
        CliError::Malformed(e.to_string())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| io_error(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| io_error(path, e))
}

fn manifest(dataset: &Path) -> Result<gazetype::synth::dataset::DatasetManifest, CliError> {
    Ok(load_manifest(&dataset.join(MANIFEST_FILE))?)
}

fn gen_data(args: GenData) -> Result<(), CliError> {
    let counts = SplitCounts {
        train: args.train,
        val: args.val,
        test_known: args.test_known,
        test_unknown: args.test_unknown,
    };
    let params = if args.single_eye { SynthParams::single_eye() } else { SynthParams::default() };
    let m = generate_dataset(&args.dataset, &counts, &params, args.seed)?;
    println!("wrote {} images to {}", m.records.len(), args.dataset.display());
    Ok(())
}

fn train(args: TrainCmd) -> Result<(), CliError> {
    let m = manifest(&args.dataset)?;
    let first = m
        .split(Split::Train)
        .next()
        .ok_or_else(|| CliError::Malformed("train split is empty".into()))?;
    let width = gazetype::EyeStrip::load_png(&m.image_path(first))
        .map_err(|e| CliError::Malformed(e.to_string()))?
        .width();
    let model = build_model(ModelConfig::for_width(width), args.seed)?;
    let augment = if args.no_augment { AugmentConfig::none() } else { AugmentConfig::default() };
    let config = TrainConfig {
        epochs: args.epochs,
        samples_per_epoch: args.samples_per_epoch,
        lr_halving_epochs: args.lr_halving_epochs,
        ..TrainConfig::default()
    };
    let outcome = train_from_manifest(model, &m, &augment, &config, args.seed, |r| {
        eprintln!("epoch {:>3}  loss {:.4}  val top-1 {:.2}%", r.epoch, r.loss, r.val_top1);
    })?;
    save_weights(&outcome.params, &args.weights)?;
    let history = args
        .history
        .unwrap_or_else(|| args.weights.with_extension("history.csv"));
    write_history_csv(create(&history)?, &outcome.history).map_err(|e| CliError::Input(e.to_string()))?;
    println!("best epoch {}; weights in {}", outcome.best_epoch, args.weights.display());
    Ok(())
}

fn eval(args: EvalCmd) -> Result<(), CliError> {
    let m = manifest(&args.dataset)?;
    let params = load_weights(&args.weights)?;
    let splits: Vec<Split> = match args.split {
        SplitArg::Train => vec![Split::Train],
        SplitArg::Val => vec![Split::Val],
        SplitArg::TestKnown => vec![Split::TestKnown],
        SplitArg::TestUnknown => vec![Split::TestUnknown],
        SplitArg::Test => vec![Split::TestKnown, Split::TestUnknown],
    };
    let mut reports: Vec<(Split, EvalReport)> = Vec::new();
    println!("{:<14} {:>6} {:>10} {:>10}", "split", "n", "Top1 Acc.", "Top2 Acc.");
    for split in splits {
        let r = evaluate_split(&params, &m, split)?;
        println!("{:<14} {:>6} {:>9.2}% {:>9.2}%", split.as_str(), r.total(), r.top1, r.top2);
        reports.push((split, r));
    }
    if let Some(path) = args.report {
        let doc: serde_json::Map<String, serde_json::Value> = reports
            .iter()
            .map(|(s, r)| (s.as_str().to_string(), serde_json::to_value(r).expect("report serializes")))
            .collect();
        let mut w = create(&path)?;
        serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| CliError::Input(e.to_string()))?;
        w.flush().map_err(|e| io_error(&path, e))?;
    }
    Ok(())
}

/// Fixations on directions 1-9 then closed, one second each, with blinks.
fn sweep_script() -> NoiseScript {
    let states: Vec<EyeState> = (1..=9).chain([0]).map(|c| EyeState::new(c).expect("valid code")).collect();
    NoiseScript {
        blink_rate: 1.0,
        saccade_probability: 1.0,
        ..NoiseScript::clean(&states, 29)
    }
}

fn simulate(args: SimulateCmd) -> Result<(), CliError> {
    let script = match &args.script {
        Some(path) => serde_json::from_reader(open(path)?).map_err(|e| CliError::Malformed(format!("{}: {e}", path.display())))?,
        None => sweep_script(),
    };
    let raw: Vec<Option<EyeState>> = filter::simulate_sequence(&script, args.seed)?.into_iter().map(Some).collect();
    let filtered = filter::filter_stream(args.capacity, &raw)?;
    let result = match &args.output {
        Some(path) => filter::write_trace_csv(create(path)?, &raw, &filtered),
        None => filter::write_trace_csv(std::io::stdout().lock(), &raw, &filtered),
    };
    result.map_err(|e| CliError::Input(e.to_string()))
}

fn type_cmd(args: TypeCmd) -> Result<(), CliError> {
    if args.fps.is_nan() || args.fps <= 0.0 {
        return Err(CliError::Malformed("fps must be positive".into()));
    }
    let is_log = args.script.extension().is_some_and(|e| e == "jsonl");
    let (events, text, frames) = if is_log {
        let replay = replay_log(open(&args.script)?)?;
        let frames = replay.filtered.len();
        (replay.events, replay.text, frames)
    } else {
        let stream = t9::read_replay_csv(open(&args.script)?)?;
        let (events, text) = t9::run_stream(&Layout::default(), &stream);
        (events, text, stream.len())
    };
    if let Some(path) = &args.events {
        t9::write_event_log(create(path)?, &events)?;
    }
    println!("text: {text}");
    let elapsed = frames.max(1) as f64 / args.fps;
    let reference = args.reference.as_deref().unwrap_or(&text);
    let metrics = compute_metrics(&text, reference, elapsed)?;
    println!("{}", serde_json::to_string_pretty(&metrics).expect("metrics serialize"));
    Ok(())
}

fn serve(args: ServeCmd) -> Result<(), CliError> {
    let mut config = match &args.config {
        Some(path) => SessionConfig::load(path)?,
        None => SessionConfig::default(),
    };
    if let Some(l) = args.listen {
        config.listen = l;
    }
    if args.weights.is_some() {
        config.weights = args.weights;
    }
    if args.log_dir.is_some() {
        config.log_dir = args.log_dir;
    }
    let listen = config.listen.clone();
    let server = Server::bind(listen.as_str(), ServiceContext::new(config)?)?;
    eprintln!("listening on {}", server.local_addr());
    server.run();
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Simulate(a) => simulate(a),
        Command::Type(a) => type_cmd(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
