//! Release gate: ten end-to-end checks, each printing one
//! `acceptance NN <name>: PASS|FAIL` line. Run with
//! `cargo test --test acceptance -- --nocapture` to see the checklist.
//!
//! The expensive fixtures (a full ten-fold evaluation, a deployment-sized
//! model, a live loopback replay) are built once and shared through
//! `OnceLock`, so the order the harness picks does not change what any
//! check sees.

use std::net::UdpSocket;
use std::panic::AssertUnwindSafe;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use motionrocket_core::bench::{run_bench_with_model, BenchConfig};
use motionrocket_core::eval::{cross_validate, stratified_kfold, EvalReport};
use motionrocket_core::model_io::{load_model, save_model};
use motionrocket_core::pipeline::{classify, train_model, TrainConfig};
use motionrocket_core::ridge::{
    default_alpha_grid, fit_ridge, ridge_solve_dual, ridge_solve_primal,
};
use motionrocket_core::rocket::{conv_naive, transform, transform_batch, RocketParams};
use motionrocket_core::serve::latency::{measure_latency, LatencySummary};
use motionrocket_core::serve::osc::encode_trigger;
use motionrocket_core::serve::replay::replay_frames;
use motionrocket_core::serve::{spawn, ServerConfig, ServerStats};
use motionrocket_core::signal::{
    assemble_stream, load_dataset, save_dataset, AssembleConfig, ChannelLayout,
};
use motionrocket_core::synth::{generate, inject_transitions, SynthSpec};
use motionrocket_core::{MotionWindow, RidgeModel, TriggerEvent, NUM_CLASSES};

fn gate(id: usize, name: &str, body: impl FnOnce()) {
    let outcome = std::panic::catch_unwind(AssertUnwindSafe(body));
    let verdict = if outcome.is_ok() { "PASS" } else { "FAIL" };
    println!("acceptance {id:02} {name}: {verdict}");
    if let Err(payload) = outcome {
        std::panic::resume_unwind(payload);
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Ten-fold evaluation of the 648-window reference set. Shared by the
/// accuracy and AUC checks so both read the same run.
fn cv_report() -> &'static EvalReport {
    static REPORT: OnceLock<EvalReport> = OnceLock::new();
    REPORT.get_or_init(|| {
        let ds = generate(&SynthSpec::total(648, 7)).expect("synth");
        let cfg = TrainConfig {
            seed: 7,
            ..TrainConfig::default()
        };
        cross_validate(&ds, 10, 7, &cfg).expect("cross validation")
    })
}

/// A deployment-sized model (9996 features, augmentation on), shared by
/// the latency, equivalence and transition checks.
fn big_model() -> &'static RidgeModel {
    static MODEL: OnceLock<RidgeModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let ds = generate(&SynthSpec::per_class(12, 0x5eed_acc0)).expect("synth");
        let cfg = TrainConfig {
            seed: 5,
            ..TrainConfig::default()
        };
        train_model(&ds, &cfg).expect("train")
    })
}

struct Live {
    offline: Vec<i32>,
    events: Vec<TriggerEvent>,
    stats: ServerStats,
    latency: LatencySummary,
}

/// One loopback replay through the live server: 18 blocks of scripted
/// motion at 16x speed, with OSC and the latency log enabled.
fn live_run() -> &'static Live {
    static LIVE: OnceLock<Live> = OnceLock::new();
    LIVE.get_or_init(|| {
        let model = big_model().clone();
        let mut sequence = Vec::new();
        for _ in 0..3 {
            sequence.extend_from_slice(&[1, 4, 2, 6, 3, 5]);
        }
        let script = inject_transitions(&SynthSpec::per_class(1, 0x11fe), &sequence, 4.0, 0.25)
            .expect("script");

        let stream = assemble_stream(
            &script.frames,
            &ChannelLayout::default(),
            AssembleConfig::default(),
        );
        let window = model.rocket.input_len;
        let offline: Vec<i32> = stream
            .segment(window, window)
            .expect("segment")
            .iter()
            .map(|w| classify(&model, w).expect("classify").label)
            .collect();

        let dir = tempfile::tempdir().expect("tempdir");
        let log_path = dir.path().join("latency.ndjson");
        let osc_sink = UdpSocket::bind("127.0.0.1:0").expect("udp bind");
        let mut cfg = ServerConfig::new("127.0.0.1:0".parse().unwrap());
        cfg.latency_log = Some(log_path.clone());
        cfg.osc_target = Some(osc_sink.local_addr().unwrap());
        let handle = spawn(model, cfg).expect("spawn");
        let tap = handle.events();
        replay_frames(&script.frames, handle.local_addr(), 16.0).expect("replay");

        let expected = script.frames.len() as u64;
        let deadline = Instant::now() + Duration::from_secs(120);
        while handle.stats().frames_in < expected {
            assert!(Instant::now() < deadline, "server stalled during replay");
            std::thread::sleep(Duration::from_millis(20));
        }
        let stats = handle.stop().expect("stop");
        let events: Vec<TriggerEvent> = tap.try_iter().collect();
        let latency = measure_latency(&log_path).expect("latency log");
        Live {
            offline,
            events,
            stats,
            latency,
        }
    })
}

#[test]
fn accept_01_cross_validated_accuracy() {
    gate(1, "ten-fold accuracy and macro F1 on the 648-window set", || {
        let r = cv_report();
        assert!(
            r.mean_accuracy >= 0.95,
            "mean accuracy {:.4} below 0.95",
            r.mean_accuracy
        );
        assert!(
            r.mean_macro_f1 >= 0.95,
            "mean macro F1 {:.4} below 0.95",
            r.mean_macro_f1
        );
        assert!(
            r.elapsed_s <= 300.0,
            "evaluation took {:.1}s, budget is 300s",
            r.elapsed_s
        );
    });
}

#[test]
fn accept_02_per_class_roc_auc() {
    gate(2, "one-vs-rest ROC AUC of every class", || {
        let r = cv_report();
        assert_eq!(r.per_class_auc.len(), NUM_CLASSES);
        for (class, auc) in r.per_class_auc.iter().enumerate() {
            let auc = auc.unwrap_or_else(|| panic!("class {class} AUC undefined"));
            assert!(auc >= 0.99, "class {class} AUC {auc:.4} below 0.99");
        }
    });
}

#[test]
fn accept_03_single_window_inference_latency() {
    gate(3, "p95 single-window inference under 15 ms", || {
        let cfg = BenchConfig {
            iterations: 1000,
            warmup: 100,
            ..BenchConfig::default()
        };
        let report = run_bench_with_model(big_model(), &cfg).expect("bench");
        assert_eq!(report.num_features, 9996);
        assert!(report.iterations >= 1000);
        assert!(
            report.p95_ms <= 15.0,
            "p95 {:.3} ms exceeds 15 ms",
            report.p95_ms
        );
    });
}

#[test]
fn accept_04_live_emit_latency() {
    gate(4, "p95 receipt-to-emit latency under 50 ms on loopback", || {
        let live = live_run();
        assert_eq!(
            live.latency.count,
            live.events.len(),
            "latency log rows should match emitted events"
        );
        assert!(
            live.latency.count >= 25,
            "only {} windows served",
            live.latency.count
        );
        assert!(
            live.latency.emit_p95_ms < 50.0,
            "emit p95 {:.2} ms exceeds 50 ms",
            live.latency.emit_p95_ms
        );
    });
}

#[test]
fn accept_05_fast_path_matches_naive_convolution() {
    gate(5, "fast transform equals naive convolution on the full grid", || {
        let params = &big_model().rocket;
        let windows = generate(&SynthSpec::per_class(2, 0xfa57)).expect("synth").windows;
        let layout = params.feature_layout();
        for w in windows.iter().take(8) {
            let fast = transform(params, w).expect("transform");
            for (gi, group) in params.groups.iter().enumerate() {
                let mut z = vec![0.0f64; params.input_len];
                for &c in &group.channels {
                    for (k, zv) in z.iter_mut().enumerate() {
                        *zv += w.data[[c as usize, k]];
                    }
                }
                let y = conv_naive(&z, group.kernel, group.dilation, group.padding);
                let (first, count) = layout[gi];
                for slot in 0..count {
                    let idx = first + slot;
                    let bias = params.biases[idx];
                    let hits = y.iter().filter(|&&v| v > bias).count();
                    let expected = hits as f64 / y.len() as f64;
                    assert!(
                        fast.values[idx] == expected,
                        "feature {idx} (kernel {}, dilation {}, padding {}): \
                         fast {} naive {}",
                        group.kernel,
                        group.dilation,
                        group.padding,
                        fast.values[idx],
                        expected
                    );
                }
            }
        }
    });
}

#[test]
fn accept_06_ridge_dual_equals_primal_and_alpha_refit() {
    gate(6, "dual solve equals primal solve; pinned-alpha refit is stable", || {
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(0xd0a1 + seed);
            let x = Array2::from_shape_fn((40, 200), |_| rng.gen::<f64>() * 2.0 - 1.0);
            let mut y = Array2::zeros((40, NUM_CLASSES));
            for i in 0..40 {
                y[[i, rng.gen_range(0..NUM_CLASSES)]] = 1.0;
            }
            let alpha = [0.1, 1.0, 10.0][seed as usize % 3];
            let primal = ridge_solve_primal(&x, &y, alpha);
            let dual = ridge_solve_dual(&x, &y, alpha);
            let worst = primal
                .iter()
                .zip(dual.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(
                worst <= 1e-8,
                "seed {seed}: max |primal - dual| = {worst:e}"
            );
        }

        // Re-fitting with the grid pinned to the chosen alpha must rebuild
        // the identical model.
        let ds = generate(&SynthSpec::per_class(4, 0xa1fa)).expect("synth");
        let rocket = RocketParams::fit(&ds.windows, 840, 3).expect("rocket");
        let feats = transform_batch(&rocket, &ds.windows).expect("features");
        let full = fit_ridge(&feats, &ds.labels, &default_alpha_grid(), rocket.clone())
            .expect("full grid fit");
        let pinned =
            fit_ridge(&feats, &ds.labels, &[full.alpha], rocket).expect("pinned fit");
        assert_eq!(full.alpha, pinned.alpha);
        assert_eq!(full.weights, pinned.weights);
        assert_eq!(full.intercepts, pinned.intercepts);
        assert_eq!(full.feature_mean, pinned.feature_mean);
        assert_eq!(full.feature_std, pinned.feature_std);
    });
}

#[test]
fn accept_07_online_matches_offline() {
    gate(7, "live replay labels equal offline pipeline labels", || {
        let live = live_run();
        assert!(!live.offline.is_empty());
        assert_eq!(
            live.stats.window_drops, 0,
            "windows were shed; sequences not comparable"
        );
        assert_eq!(live.events.len(), live.offline.len());
        let online: Vec<i32> = live.events.iter().map(|e| e.label).collect();
        assert_eq!(online, live.offline, "label sequences diverged");
        for pair in live.events.windows(2) {
            assert!(pair[0].t_ms < pair[1].t_ms, "event times not increasing");
        }
    });
}

#[test]
fn accept_08_invariant_suite() {
    gate(8, "transform, fold, simplex, wire and roundtrip invariants", || {
        let params = &big_model().rocket;
        let windows = generate(&SynthSpec::per_class(2, 0xfa57)).expect("synth").windows;

        // Features are PPV fractions.
        for w in windows.iter().take(6) {
            let f = transform(params, w).expect("transform");
            assert!(f.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }

        // Adding a constant to every channel leaves unpadded features
        // untouched: the kernels sum to zero.
        let probe = &windows[0];
        let shifted = MotionWindow::new(probe.data.mapv(|v| v + 3.5), probe.t_start_ms)
            .expect("shifted window");
        let base = transform(params, probe).expect("transform");
        let moved = transform(params, &shifted).expect("transform");
        let layout = params.feature_layout();
        let mut unpadded_checked = 0usize;
        for (gi, group) in params.groups.iter().enumerate() {
            if group.padding {
                continue;
            }
            let (first, count) = layout[gi];
            for idx in first..first + count {
                assert!(
                    base.values[idx] == moved.values[idx],
                    "unpadded feature {idx} moved under constant offset"
                );
                unpadded_checked += 1;
            }
        }
        assert!(unpadded_checked > 1000, "too few unpadded features probed");

        // Stratified folds spread every class within one window.
        let labels = generate(&SynthSpec::total(648, 7)).expect("synth").labels;
        let plan = stratified_kfold(&labels, 10, 7).expect("folds");
        for class in 0..NUM_CLASSES as i32 {
            let counts: Vec<usize> = (0..plan.k())
                .map(|f| {
                    plan.test_indices(f)
                        .iter()
                        .filter(|&&i| labels[i] == class)
                        .count()
                })
                .collect();
            let spread = counts.iter().max().unwrap() - counts.iter().min().unwrap();
            assert!(spread <= 1, "class {class} fold counts {counts:?}");
        }

        // Probabilities live on the simplex and argmax is the label.
        let model = big_model();
        for w in windows.iter().take(5) {
            let p = classify(model, w).expect("classify");
            assert_eq!(p.probs.len(), NUM_CLASSES);
            assert!(p.probs.iter().all(|&v| v >= 0.0));
            let sum: f64 = p.probs.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-9, "probabilities sum to {sum}");
            let best = p.probs[p.label as usize];
            assert!(p.probs.iter().all(|&v| v <= best));
        }

        // The OSC trigger encoding is frozen.
        let golden: [u8; 20] = [
            0x2F, 0x6D, 0x6F, 0x74, 0x69, 0x6F, 0x6E, 0x00, 0x2C, 0x69, 0x66, 0x00, 0x00,
            0x00, 0x00, 0x03, 0x3F, 0x60, 0x00, 0x00,
        ];
        assert_eq!(encode_trigger("/motion", 3, 0.875).expect("osc"), golden);

        // Dataset and model files round-trip exactly and rewrite
        // byte-identically.
        let dir = tempfile::tempdir().expect("tempdir");
        let ds = generate(&SynthSpec::per_class(2, 0x0ddc)).expect("synth");
        let ds_path = dir.path().join("ds.ndjson");
        save_dataset(&ds, &ds_path).expect("save dataset");
        let loaded = load_dataset(&ds_path).expect("load dataset");
        assert_eq!(loaded.windows, ds.windows);
        assert_eq!(loaded.labels, ds.labels);
        let ds_path2 = dir.path().join("ds2.ndjson");
        save_dataset(&loaded, &ds_path2).expect("save dataset");
        assert_eq!(
            std::fs::read(&ds_path).unwrap(),
            std::fs::read(&ds_path2).unwrap(),
            "dataset serialization not byte-stable"
        );

        let small_cfg = TrainConfig {
            num_features: 840,
            augment: None,
            seed: 2,
            ..TrainConfig::default()
        };
        let small =
            train_model(&generate(&SynthSpec::per_class(3, 0x10ad)).expect("synth"), &small_cfg)
                .expect("train");
        let m1 = dir.path().join("a.mrmd");
        let m2 = dir.path().join("b.mrmd");
        save_model(&small, &m1).expect("save model");
        save_model(&small, &m2).expect("save model");
        assert_eq!(load_model(&m1).expect("load model"), small);
        assert_eq!(
            std::fs::read(&m1).unwrap(),
            std::fs::read(&m2).unwrap(),
            "model serialization not byte-stable"
        );
    });
}

#[test]
fn accept_09_transition_windows_lower_confidence() {
    gate(9, "windows straddling transitions are less confident", || {
        let mut sequence = Vec::new();
        for _ in 0..9 {
            sequence.extend_from_slice(&[1, 4, 2, 6, 3, 5]);
        }
        let script = inject_transitions(&SynthSpec::per_class(1, 0x7a95), &sequence, 4.0, 0.25)
            .expect("script");
        assert!(
            script.boundaries_ms.len() >= 50,
            "need at least 50 transitions, have {}",
            script.boundaries_ms.len()
        );

        let stream = assemble_stream(
            &script.frames,
            &ChannelLayout::default(),
            AssembleConfig::default(),
        );
        let windows = stream.segment(96, 24).expect("segment");
        let model = big_model();
        let window_ms = 2000.0;

        let mut straddling = Vec::new();
        let mut steady = Vec::new();
        for w in &windows {
            let t0 = w.t_start_ms;
            let t1 = t0 + window_ms;
            let p = classify(model, w).expect("classify");
            let confidence = p.probs[p.label as usize];
            let crosses = script
                .boundaries_ms
                .iter()
                .any(|&b| b >= t0 + 250.0 && b <= t1 - 250.0);
            if crosses {
                straddling.push(confidence);
            } else if script
                .steady_ms
                .iter()
                .any(|&(s, e, _)| t0 >= s && t1 <= e)
            {
                steady.push(confidence);
            }
        }
        assert!(straddling.len() >= 50, "{} straddling windows", straddling.len());
        assert!(steady.len() >= 50, "{} steady windows", steady.len());
        let m_straddle = median(straddling);
        let m_steady = median(steady);
        assert!(
            m_straddle < m_steady,
            "straddling median {m_straddle:.4} not below steady median {m_steady:.4}"
        );
    });
}

#[test]
fn accept_10_shuffled_labels_fall_to_chance() {
    gate(10, "label shuffling drops accuracy to chance", || {
        let base = generate(&SynthSpec::per_class(6, 0xc1a55)).expect("synth");
        let cfg = TrainConfig {
            num_features: 840,
            augment: None,
            seed: 1,
            ..TrainConfig::default()
        };
        let mut accs = Vec::new();
        for s in 0..30u64 {
            let mut ds = base.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(0x5bff_1e00 + s);
            ds.labels.shuffle(&mut rng);
            let report = cross_validate(&ds, 6, s, &cfg).expect("cross validation");
            accs.push(report.mean_accuracy);
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let chance = 1.0 / 7.0;
        assert!(
            (mean - chance).abs() <= 0.06,
            "mean shuffled accuracy {mean:.4}, chance is {chance:.4}"
        );
    });
}
