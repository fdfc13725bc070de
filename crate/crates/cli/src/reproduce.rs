//! One-command regeneration of every evaluation artifact.
//!
//! Runs the whole pipeline end to end: synthesize a dataset, train, run
//! cross-validation, synthesize a transition recording, replay it through a
//! live server on loopback, and summarize the latency log. Metrics land in
//! a Markdown report; every intermediate artifact is kept beside it.

use crate::Failure;
use motionrocket_core::bench::MachineInfo;
use motionrocket_core::eval::{cross_validate, write_csv, write_json, write_roc_svg, EvalReport};
use motionrocket_core::model_io::save_model;
use motionrocket_core::pipeline::{classify, train_model, TrainConfig};
use motionrocket_core::serve::latency::{measure_latency, LatencySummary};
use motionrocket_core::serve::replay::replay_frames;
use motionrocket_core::serve::{spawn, ServerConfig, ServerStats};
use motionrocket_core::signal::{
    assemble_stream, save_dataset, save_recording, AssembleConfig, ChannelLayout,
};
use motionrocket_core::synth::{generate, inject_transitions, SynthSpec, TransitionScript};
use serde_json::json;
use std::path::PathBuf;
use std::time::{Duration, Instant};

const SEQUENCE: [i32; 6] = [1, 4, 2, 6, 3, 5];
const BLOCK_SECONDS: f64 = 4.0;
const CROSSFADE_SECONDS: f64 = 0.25;

pub struct Plan {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub folds: usize,
    pub features: usize,
    pub total: usize,
    pub speed: f64,
}

fn stage<T>(name: &str, f: impl FnOnce() -> Result<T, Failure>) -> Result<T, Failure> {
    log::info!("reproduce stage {name}: start");
    let t = Instant::now();
    let out = f().map_err(|mut e| {
        e.message = format!("stage {name}: {}", e.message);
        e
    })?;
    log::info!(
        "reproduce stage {name}: done in {:.2}s",
        t.elapsed().as_secs_f64()
    );
    Ok(out)
}

struct LiveRun {
    stats: ServerStats,
    online_labels: Vec<i32>,
    offline_labels: Vec<i32>,
}

pub fn run(plan: Plan) -> Result<(), Failure> {
    if !(plan.speed.is_finite() && plan.speed > 0.0) {
        return Err(Failure::usage(
            "reproduce --speed must be finite and positive",
        ));
    }
    std::fs::create_dir_all(&plan.out_dir)
        .map_err(|e| Failure::runtime(format!("create {}: {e}", plan.out_dir.display())))?;
    log::info!(
        "resolved reproduce: out_dir={} seed={} folds={} features={} total={} speed={}",
        plan.out_dir.display(),
        plan.seed,
        plan.folds,
        plan.features,
        plan.total,
        plan.speed
    );
    let started = Instant::now();
    let dataset_path = plan.out_dir.join("synth.ndjson");
    let model_path = plan.out_dir.join("model.mrmd");
    let eval_json = plan.out_dir.join("eval.json");
    let eval_csv = plan.out_dir.join("eval.csv");
    let roc_svg = plan.out_dir.join("roc.svg");
    let recording_path = plan.out_dir.join("recording.ndjson");
    let latency_path = plan.out_dir.join("latency.ndjson");
    let report_path = plan.out_dir.join("reproduction.md");

    let ds = stage("gen-dataset", || {
        let ds = generate(&SynthSpec::total(plan.total, plan.seed))?;
        save_dataset(&ds, &dataset_path)?;
        Ok(ds)
    })?;

    let train_cfg = TrainConfig {
        num_features: plan.features,
        seed: plan.seed,
        ..TrainConfig::default()
    };
    let model = stage("train", || {
        let model = train_model(&ds, &train_cfg)?;
        save_model(&model, &model_path)?;
        Ok(model)
    })?;

    let eval = stage("eval", || {
        let report = cross_validate(&ds, plan.folds, plan.seed, &train_cfg)?;
        write_json(&report, &eval_json)?;
        write_csv(&report, &eval_csv)?;
        write_roc_svg(&report, &roc_svg)?;
        Ok(report)
    })?;

    let script = stage("gen-recording", || {
        let spec = SynthSpec::per_class(1, plan.seed ^ 0x7265_6331);
        let script = inject_transitions(&spec, &SEQUENCE, BLOCK_SECONDS, CROSSFADE_SECONDS)?;
        save_recording(&script.frames, &recording_path)?;
        Ok(script)
    })?;

    let live = stage("serve-replay", || {
        run_live(&model, &script, &latency_path, plan.speed)
    })?;
    if live.online_labels != live.offline_labels {
        return Err(Failure::runtime(format!(
            "stage serve-replay: online labels {:?} diverge from offline {:?}",
            live.online_labels, live.offline_labels
        )));
    }

    let latency = stage("measure-latency", || Ok(measure_latency(&latency_path)?))?;

    stage("report", || {
        let text = render_markdown(&plan, &ds.class_histogram(), &eval, &script, &live, &latency);
        std::fs::write(&report_path, text)
            .map_err(|e| Failure::runtime(format!("write {}: {e}", report_path.display())))?;
        Ok(())
    })?;

    let pretty = serde_json::to_string_pretty(&json!({
        "out_dir": plan.out_dir,
        "mean_accuracy": eval.mean_accuracy,
        "std_accuracy": eval.std_accuracy,
        "mean_macro_f1": eval.mean_macro_f1,
        "macro_auc": eval.macro_auc,
        "windows_served": live.online_labels.len(),
        "labels_match_offline": true,
        "emit_p95_ms": latency.emit_p95_ms,
        "infer_p95_ms": latency.infer_p95_ms,
        "report": report_path,
        "wall_s": started.elapsed().as_secs_f64(),
    }))
    .map_err(|e| Failure::runtime(format!("serialize summary: {e}")))?;
    println!("{pretty}");
    Ok(())
}

fn run_live(
    model: &motionrocket_core::RidgeModel,
    script: &TransitionScript,
    latency_path: &std::path::Path,
    speed: f64,
) -> Result<LiveRun, Failure> {
    let window = model.rocket.input_len;
    let stream = assemble_stream(
        &script.frames,
        &ChannelLayout::default(),
        AssembleConfig::default(),
    );
    let offline = stream.segment(window, window)?;
    let offline_labels: Vec<i32> = offline
        .iter()
        .map(|w| classify(model, w).map(|p| p.label))
        .collect::<motionrocket_core::Result<_>>()?;

    let mut cfg = ServerConfig::new("127.0.0.1:0".parse().unwrap());
    cfg.latency_log = Some(latency_path.to_path_buf());
    let handle = spawn(model.clone(), cfg)?;
    let tap = handle.events();
    replay_frames(&script.frames, handle.local_addr(), speed)?;

    let expected = script.frames.len() as u64;
    let deadline = Instant::now() + Duration::from_secs(60);
    while handle.stats().frames_in < expected {
        if Instant::now() > deadline {
            return Err(Failure::runtime(format!(
                "server ingested {} of {expected} frames before timeout",
                handle.stats().frames_in
            )));
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    let stats = handle.stop()?;
    let online_labels: Vec<i32> = tap.try_iter().map(|ev| ev.label).collect();
    Ok(LiveRun {
        stats,
        online_labels,
        offline_labels,
    })
}

fn fmt_auc(auc: &Option<f64>) -> String {
    match auc {
        Some(v) => format!("{v:.4}"),
        None => "undefined".into(),
    }
}

fn render_markdown(
    plan: &Plan,
    histogram: &[usize],
    eval: &EvalReport,
    script: &TransitionScript,
    live: &LiveRun,
    latency: &LatencySummary,
) -> String {
    let machine = MachineInfo::detect();
    let duration_s = script.frames.last().map(|f| f.t_ms).unwrap_or(0.0) / 1000.0;
    let sequence: Vec<String> = SEQUENCE.iter().map(|c| c.to_string()).collect();
    let mut md = String::new();
    md.push_str("# Reproduction report\n\n");
    md.push_str(&format!(
        "Seed {}; {} windows over {} classes {:?}; {}-fold stratified cross-validation; \
         {} requested features; machine {}-{}, {} thread{}.\n\n",
        plan.seed,
        eval.n_samples,
        histogram.len(),
        histogram,
        eval.k,
        plan.features,
        machine.os,
        machine.arch,
        machine.cpu_threads,
        if machine.cpu_threads == 1 { "" } else { "s" },
    ));

    md.push_str("## Cross-validation\n\n");
    md.push_str("| metric | value |\n|---|---|\n");
    md.push_str(&format!(
        "| mean accuracy | {:.4} +/- {:.4} |\n",
        eval.mean_accuracy, eval.std_accuracy
    ));
    md.push_str(&format!(
        "| mean macro F1 | {:.4} +/- {:.4} |\n",
        eval.mean_macro_f1, eval.std_macro_f1
    ));
    md.push_str(&format!("| pooled accuracy | {:.4} |\n", eval.pooled_accuracy));
    md.push_str(&format!("| macro AUC | {:.4} |\n\n", eval.macro_auc));

    md.push_str("Per-class one-vs-rest AUC over the pooled held-out predictions:\n\n");
    md.push_str("| class | AUC |\n|---|---|\n");
    for (c, auc) in eval.per_class_auc.iter().enumerate() {
        md.push_str(&format!("| {c} | {} |\n", fmt_auc(auc)));
    }
    md.push('\n');

    md.push_str("## Live serving\n\n");
    md.push_str(&format!(
        "Recording: {} frames, {:.1} s, class sequence {}, replayed into a loopback \
         server at {}x.\n\n",
        script.frames.len(),
        duration_s,
        sequence.join(" -> "),
        plan.speed,
    ));
    md.push_str(&format!(
        "Windows classified: {}. Online and offline label sequences identical: {}. \
         Windows dropped under backpressure: {}.\n\n",
        live.online_labels.len(),
        if live.online_labels == live.offline_labels {
            "yes"
        } else {
            "NO"
        },
        live.stats.window_drops,
    ));

    md.push_str("### Latency\n\n");
    md.push_str("| statistic | frame receipt to emit | inference |\n|---|---|---|\n");
    md.push_str(&format!(
        "| p50 | {:.2} ms | {:.2} ms |\n",
        latency.emit_p50_ms, latency.infer_p50_ms
    ));
    md.push_str(&format!(
        "| p95 | {:.2} ms | {:.2} ms |\n",
        latency.emit_p95_ms, latency.infer_p95_ms
    ));
    md.push_str(&format!("| max | {:.2} ms | |\n\n", latency.emit_max_ms));

    md.push_str("## Artifacts\n\n");
    for name in [
        "synth.ndjson",
        "model.mrmd",
        "eval.json",
        "eval.csv",
        "roc.svg",
        "recording.ndjson",
        "latency.ndjson",
    ] {
        md.push_str(&format!("- {name}\n"));
    }
    md.push('\n');
    md
}
