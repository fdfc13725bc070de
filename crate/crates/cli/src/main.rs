//! motionrocket: train, evaluate, and serve the IMU motion classifier.
//!
//! One binary, subcommand per pipeline stage. Reports go to stdout as JSON
//! (reproduction report as Markdown); progress and the fully resolved
//! configuration are logged to stderr, level controlled by MOTIONROCKET_LOG.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 bad input data,
//! 3 runtime failure.

mod file_config;
mod reproduce;

use clap::{Args, Parser, Subcommand};
use motionrocket_core::bench::{run_bench, run_bench_with_model, BenchConfig};
use motionrocket_core::eval::{cross_validate, write_csv, write_json, write_roc_svg};
use motionrocket_core::model_io::{load_model, save_model};
use motionrocket_core::pipeline::train_model;
use motionrocket_core::serve::replay::replay_frames;
use motionrocket_core::signal::{load_dataset, load_recording, save_dataset, save_recording};
use motionrocket_core::synth::{generate, inject_transitions};
use motionrocket_core::{AugmentConfig, ServerConfig, SynthSpec, TrainConfig};
use serde_json::json;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "motionrocket",
    version,
    about = "Real-time IMU motion recognition: generate, train, evaluate, serve"
)]
struct Cli {
    /// JSON config file; sections named after subcommands supply defaults
    /// for any flag not given explicitly.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset, or a transition recording with --sequence.
    Gen(GenArgs),
    /// Fit a model on a dataset file and write it to disk.
    Train(TrainArgs),
    /// Stratified k-fold cross-validation with JSON/CSV/SVG reports.
    Eval(EvalArgs),
    /// Run the live classification server until interrupted.
    Serve(ServeArgs),
    /// Stream a recorded frame file into a running server.
    Replay(ReplayArgs),
    /// Measure single-window inference latency.
    Bench(BenchArgs),
    /// Regenerate every evaluation artifact: gen, train, eval, replay, latency.
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Windows per class (dataset mode).
    #[arg(long, value_name = "N", conflicts_with_all = ["total", "sequence"])]
    per_class: Option<usize>,
    /// Total windows, remainder spread round-robin from class 0 (dataset mode).
    #[arg(long, value_name = "N", conflicts_with = "sequence")]
    total: Option<usize>,
    /// Comma-separated class sequence, e.g. 1,4,2; switches to recording mode.
    #[arg(long, value_name = "C,C,..", value_delimiter = ',')]
    sequence: Option<Vec<i32>>,
    /// Seconds per class block (recording mode).
    #[arg(long, value_name = "S")]
    block_seconds: Option<f64>,
    /// Crossfade between blocks (recording mode).
    #[arg(long, value_name = "S")]
    crossfade_seconds: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output NDJSON path.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset NDJSON path.
    #[arg(long, value_name = "FILE")]
    dataset: Option<PathBuf>,
    /// Output model path (.mrmd).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Requested feature count; rounded down to a multiple of 84.
    #[arg(long, value_name = "N")]
    features: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Disable jitter/time-warp augmentation.
    #[arg(long)]
    no_augment: bool,
    /// Augmented copies per training window.
    #[arg(long, value_name = "N")]
    augment_copies: Option<usize>,
    /// Jitter noise as a fraction of per-channel standard deviation.
    #[arg(long, value_name = "FRAC")]
    jitter_sigma: Option<f64>,
    /// Control points of the time-warp map, endpoints included.
    #[arg(long, value_name = "N")]
    warp_knots: Option<usize>,
    /// Warp displacement scale relative to knot spacing.
    #[arg(long, value_name = "FRAC")]
    warp_sigma: Option<f64>,
    /// Also write the training summary JSON here (always printed to stdout).
    #[arg(long, value_name = "FILE")]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Dataset NDJSON path.
    #[arg(long, value_name = "FILE")]
    dataset: Option<PathBuf>,
    /// Number of folds.
    #[arg(long, value_name = "K")]
    folds: Option<usize>,
    /// Drives both the fold split and per-fold training seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON report path.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Optional ROC curve SVG.
    #[arg(long, value_name = "FILE")]
    plot: Option<PathBuf>,
    /// Optional per-fold CSV.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Requested feature count per fold model.
    #[arg(long, value_name = "N")]
    features: Option<usize>,
    /// Disable augmentation of the training splits.
    #[arg(long)]
    no_augment: bool,
    #[arg(long, value_name = "N")]
    augment_copies: Option<usize>,
}

#[derive(Args)]
struct ServeArgs {
    /// TCP ingest address, e.g. 0.0.0.0:7400.
    #[arg(long, value_name = "ADDR")]
    listen: Option<SocketAddr>,
    /// OSC trigger target (UDP), e.g. 127.0.0.1:57120.
    #[arg(long, value_name = "ADDR")]
    osc: Option<SocketAddr>,
    /// Model file path (.mrmd).
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Hop between window starts in seconds.
    #[arg(long, value_name = "S")]
    hop: Option<f64>,
    /// Window length in seconds; must match the model.
    #[arg(long, value_name = "S")]
    window: Option<f64>,
    /// Suppress OSC output while the winning probability is below this.
    #[arg(long, value_name = "P")]
    probability_floor: Option<f64>,
    /// Append one latency record per trigger to this NDJSON file.
    #[arg(long, value_name = "FILE")]
    latency_log: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    /// Recording NDJSON path (SensorFrame per line).
    #[arg(long, value_name = "FILE")]
    recording: Option<PathBuf>,
    /// Server ingest address.
    #[arg(long, value_name = "ADDR")]
    target: Option<SocketAddr>,
    /// Playback speed multiplier; "inf" streams without pacing.
    #[arg(long, value_name = "X")]
    speed: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    /// Time this model; omitted, a throwaway model is trained at --features.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    iterations: Option<usize>,
    #[arg(long, value_name = "N")]
    features: Option<usize>,
    /// Untimed runs before measurement.
    #[arg(long, value_name = "N")]
    warmup: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the report JSON here.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Directory receiving every artifact.
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "K")]
    folds: Option<usize>,
    #[arg(long, value_name = "N")]
    features: Option<usize>,
    /// Dataset size for the cross-validation stage.
    #[arg(long, value_name = "N")]
    total: Option<usize>,
    /// Replay speed for the live-serving stage.
    #[arg(long, value_name = "X")]
    speed: Option<f64>,
}

/// A terminal failure carrying its process exit code.
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<motionrocket_core::Error> for Failure {
    fn from(e: motionrocket_core::Error) -> Self {
        use motionrocket_core::Error;
        let code = match &e {
            Error::InvalidConfig(_) => 1,
            Error::Runtime(_) => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn require<T>(flag: Option<T>, file: Option<T>, name: &str) -> Result<T, Failure> {
    flag.or(file)
        .ok_or_else(|| Failure::usage(format!("missing required {name} (flag or config file)")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(
        env_logger::Env::new()
            .filter_or("MOTIONROCKET_LOG", "info")
            .write_style("MOTIONROCKET_LOG_STYLE"),
    )
    .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file = file_config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Gen(args) => run_gen(args, file.gen),
        Command::Train(args) => run_train(args, file.train),
        Command::Eval(args) => run_eval(args, file.eval),
        Command::Serve(args) => run_serve(args, file.serve),
        Command::Replay(args) => run_replay(args, file.replay),
        Command::Bench(args) => run_bench_cmd(args, file.bench),
        Command::Reproduce(args) => reproduce::run(args.resolve(file.reproduce)),
    }
}

fn print_report(value: &serde_json::Value, also: Option<&PathBuf>) -> Result<(), Failure> {
    let pretty = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::runtime(format!("serialize report: {e}")))?;
    println!("{pretty}");
    if let Some(path) = also {
        std::fs::write(path, pretty + "\n")
            .map_err(|e| Failure::runtime(format!("write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn run_gen(args: GenArgs, file: file_config::GenFile) -> Result<(), Failure> {
    let seed = pick(args.seed, file.seed, 7);
    let out = require(args.out, file.out, "--out")?;
    let sequence = args.sequence.or(file.sequence);

    if let Some(sequence) = sequence {
        let block = pick(args.block_seconds, file.block_seconds, 4.0);
        let crossfade = pick(args.crossfade_seconds, file.crossfade_seconds, 0.25);
        log::info!(
            "resolved gen: mode=recording sequence={sequence:?} block_seconds={block} \
             crossfade_seconds={crossfade} seed={seed} out={}",
            out.display()
        );
        let spec = SynthSpec::per_class(1, seed);
        let script = inject_transitions(&spec, &sequence, block, crossfade)?;
        save_recording(&script.frames, &out)?;
        let last_ms = script.frames.last().map(|f| f.t_ms).unwrap_or(0.0);
        print_report(
            &json!({
                "mode": "recording",
                "out": out,
                "frames": script.frames.len(),
                "duration_ms": last_ms,
                "blocks": script.steady_ms.len(),
                "transition_midpoints_ms": script.boundaries_ms,
                "seed": seed,
            }),
            None,
        )
    } else {
        let spec = match (args.per_class.or(file.per_class), args.total.or(file.total)) {
            (Some(p), None) => SynthSpec::per_class(p, seed),
            (None, Some(t)) => SynthSpec::total(t, seed),
            (Some(_), Some(_)) => {
                return Err(Failure::usage("--per-class and --total are exclusive"))
            }
            (None, None) => {
                return Err(Failure::usage(
                    "gen needs --per-class, --total, or --sequence",
                ))
            }
        };
        log::info!(
            "resolved gen: mode=dataset class_counts={:?} seed={seed} out={}",
            spec.class_counts,
            out.display()
        );
        let ds = generate(&spec)?;
        save_dataset(&ds, &out)?;
        print_report(
            &json!({
                "mode": "dataset",
                "out": out,
                "windows": ds.len(),
                "class_histogram": ds.class_histogram(),
                "seed": seed,
            }),
            None,
        )
    }
}

struct AugmentFlags {
    no_augment: bool,
    copies: Option<usize>,
    jitter_sigma: Option<f64>,
    warp_knots: Option<usize>,
    warp_sigma: Option<f64>,
}

fn resolve_train_config(
    features: Option<usize>,
    seed: Option<u64>,
    aug: AugmentFlags,
    file_features: Option<usize>,
    file_seed: Option<u64>,
    file_no_augment: Option<bool>,
    file_copies: Option<usize>,
) -> TrainConfig {
    let mut cfg = TrainConfig::default();
    cfg.num_features = pick(features, file_features, cfg.num_features);
    cfg.seed = pick(seed, file_seed, cfg.seed);
    let no_augment = aug.no_augment || file_no_augment.unwrap_or(false);
    if no_augment {
        cfg.augment = None;
        cfg.augment_copies = 0;
    } else {
        let mut a = AugmentConfig::default();
        if let Some(v) = aug.jitter_sigma {
            a.jitter_sigma = v;
        }
        if let Some(v) = aug.warp_knots {
            a.warp_knots = v;
        }
        if let Some(v) = aug.warp_sigma {
            a.warp_sigma = v;
        }
        cfg.augment = Some(a);
        cfg.augment_copies = pick(aug.copies, file_copies, cfg.augment_copies);
    }
    cfg
}

fn run_train(args: TrainArgs, file: file_config::TrainFile) -> Result<(), Failure> {
    let dataset = require(args.dataset, file.dataset, "--dataset")?;
    let out = require(args.out, file.out, "--out")?;
    let summary_path = args.summary.or(file.summary);
    let cfg = resolve_train_config(
        args.features,
        args.seed,
        AugmentFlags {
            no_augment: args.no_augment,
            copies: args.augment_copies,
            jitter_sigma: args.jitter_sigma,
            warp_knots: args.warp_knots,
            warp_sigma: args.warp_sigma,
        },
        file.features,
        file.seed,
        file.no_augment,
        file.augment_copies,
    );
    log::info!(
        "resolved train: dataset={} out={} features={} seed={} augment={:?} copies={}",
        dataset.display(),
        out.display(),
        cfg.num_features,
        cfg.seed,
        cfg.augment,
        cfg.augment_copies
    );

    let ds = load_dataset(&dataset)?;
    let started = Instant::now();
    let model = train_model(&ds, &cfg)?;
    let wall_s = started.elapsed().as_secs_f64();
    save_model(&model, &out)?;

    let alpha_path: Vec<serde_json::Value> = model
        .alpha_path
        .iter()
        .map(|s| json!({"alpha": s.alpha, "loo_mse": s.loo_mse}))
        .collect();
    print_report(
        &json!({
            "dataset": dataset,
            "windows": ds.len(),
            "class_histogram": ds.class_histogram(),
            "features": model.weights.nrows(),
            "alpha": model.alpha,
            "alpha_path": alpha_path,
            "wall_s": wall_s,
            "model": out,
        }),
        summary_path.as_ref(),
    )
}

fn run_eval(args: EvalArgs, file: file_config::EvalFile) -> Result<(), Failure> {
    let dataset = require(args.dataset, file.dataset, "--dataset")?;
    let report_path = require(args.report, file.report, "--report")?;
    let folds = pick(args.folds, file.folds, 10);
    let seed = pick(args.seed, file.seed, 42);
    let plot = args.plot.or(file.plot);
    let csv = args.csv.or(file.csv);
    let mut cfg = resolve_train_config(
        args.features,
        args.seed,
        AugmentFlags {
            no_augment: args.no_augment,
            copies: args.augment_copies,
            jitter_sigma: None,
            warp_knots: None,
            warp_sigma: None,
        },
        file.features,
        file.seed,
        file.no_augment,
        file.augment_copies,
    );
    cfg.seed = seed;
    log::info!(
        "resolved eval: dataset={} folds={folds} seed={seed} features={} augment={:?} report={}",
        dataset.display(),
        cfg.num_features,
        cfg.augment,
        report_path.display()
    );

    let ds = load_dataset(&dataset)?;
    let report = cross_validate(&ds, folds, seed, &cfg)?;
    write_json(&report, &report_path)?;
    if let Some(path) = &csv {
        write_csv(&report, path)?;
    }
    if let Some(path) = &plot {
        write_roc_svg(&report, path)?;
    }
    print_report(
        &json!({
            "folds": report.k,
            "n_samples": report.n_samples,
            "mean_accuracy": report.mean_accuracy,
            "std_accuracy": report.std_accuracy,
            "mean_macro_f1": report.mean_macro_f1,
            "std_macro_f1": report.std_macro_f1,
            "macro_auc": report.macro_auc,
            "per_class_auc": report.per_class_auc,
            "elapsed_s": report.elapsed_s,
            "report": report_path,
            "csv": csv,
            "plot": plot,
        }),
        None,
    )
}

fn run_serve(args: ServeArgs, file: file_config::ServeFile) -> Result<(), Failure> {
    let listen = require(args.listen, file.listen, "--listen")?;
    let model_path = require(args.model, file.model, "--model")?;
    let mut cfg = ServerConfig::new(listen);
    cfg.osc_target = args.osc.or(file.osc);
    cfg.hop_seconds = pick(args.hop, file.hop, cfg.hop_seconds);
    cfg.window_seconds = pick(args.window, file.window, cfg.window_seconds);
    cfg.probability_floor = pick(
        args.probability_floor,
        file.probability_floor,
        cfg.probability_floor,
    );
    cfg.latency_log = args.latency_log.or(file.latency_log);
    log::info!(
        "resolved serve: listen={listen} osc={:?} model={} window={}s hop={}s floor={} latency_log={:?}",
        cfg.osc_target,
        model_path.display(),
        cfg.window_seconds,
        cfg.hop_seconds,
        cfg.probability_floor,
        cfg.latency_log
    );

    let model = load_model(&model_path)?;
    let handle = motionrocket_core::serve::spawn(model, cfg)?;
    log::info!("listening on {}", handle.local_addr());

    let interrupted = std::sync::Arc::new(std::sync::atomic::AtomicBool::new(false));
    {
        let interrupted = std::sync::Arc::clone(&interrupted);
        ctrlc::set_handler(move || {
            interrupted.store(true, std::sync::atomic::Ordering::Relaxed);
        })
        .map_err(|e| Failure::runtime(format!("install signal handler: {e}")))?;
    }

    let events = handle.events();
    while !interrupted.load(std::sync::atomic::Ordering::Relaxed) {
        // The tap stays connected until stop(), so errors here are timeouts.
        if let Ok(ev) = events.recv_timeout(std::time::Duration::from_millis(100)) {
            log::debug!(
                "trigger t_ms={} label={} p={:.3} latency_ms={:.2} stale={}",
                ev.t_ms,
                ev.label,
                ev.probability(),
                ev.latency_ms,
                ev.stale
            );
        }
    }
    log::info!("shutting down");
    let stats = handle.stop()?;
    let stats_json = serde_json::to_value(&stats)
        .map_err(|e| Failure::runtime(format!("serialize stats: {e}")))?;
    print_report(&stats_json, None)
}

fn run_replay(args: ReplayArgs, file: file_config::ReplayFile) -> Result<(), Failure> {
    let recording = require(args.recording, file.recording, "--recording")?;
    let target = require(args.target, file.target, "--target")?;
    let speed = pick(args.speed, file.speed, 1.0);
    if !(speed > 0.0) {
        return Err(Failure::usage(format!("--speed must be positive, got {speed}")));
    }
    log::info!(
        "resolved replay: recording={} target={target} speed={speed}",
        recording.display()
    );
    let frames = load_recording(&recording)?;
    let report = replay_frames(&frames, target, speed)?;
    print_report(
        &json!({
            "frames_sent": report.frames_sent,
            "wall_seconds": report.wall_seconds,
            "target": target,
            "speed": speed,
        }),
        None,
    )
}

fn run_bench_cmd(args: BenchArgs, file: file_config::BenchFile) -> Result<(), Failure> {
    let model_path = args.model.or(file.model);
    let mut cfg = BenchConfig::default();
    cfg.iterations = pick(args.iterations, file.iterations, cfg.iterations);
    cfg.num_features = pick(args.features, file.features, cfg.num_features);
    cfg.warmup = pick(args.warmup, file.warmup, cfg.warmup);
    cfg.seed = pick(args.seed, file.seed, cfg.seed);
    let out = args.out.or(file.out);
    log::info!(
        "resolved bench: model={:?} iterations={} features={} warmup={} seed={}",
        model_path,
        cfg.iterations,
        cfg.num_features,
        cfg.warmup,
        cfg.seed
    );

    let report = match &model_path {
        Some(path) => {
            let model = load_model(path)?;
            run_bench_with_model(&model, &cfg)?
        }
        None => run_bench(&cfg)?,
    };
    let value = serde_json::to_value(&report)
        .map_err(|e| Failure::runtime(format!("serialize report: {e}")))?;
    print_report(&value, out.as_ref())
}

impl ReproduceArgs {
    fn resolve(self, file: file_config::ReproduceFile) -> reproduce::Plan {
        reproduce::Plan {
            out_dir: pick(self.out_dir, file.out_dir, PathBuf::from("reports")),
            seed: pick(self.seed, file.seed, 7),
            folds: pick(self.folds, file.folds, 10),
            features: pick(self.features, file.features, 10_000),
            total: pick(self.total, file.total, 648),
            speed: pick(self.speed, file.speed, 16.0),
        }
    }
}
