//! Single-window inference latency measurement.
//!
//! Times the full hot path, feature transform plus classification, one
//! window at a time, and reports nearest-rank percentiles. Inputs cycle
//! through a pool of distinct windows so the numbers aren't flattered by a
//! single cached input.

use crate::pipeline::{classify, train_model, TrainConfig};
use crate::ridge::{default_alpha_grid, RidgeModel};
use crate::serve::latency::percentile_nearest_rank;
use crate::synth::{generate, SynthSpec};
use crate::{Error, Result};
use serde::Serialize;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Requested transform width for the throwaway model (rounded down to a
    /// multiple of 84). Ignored when an existing model is supplied.
    pub num_features: usize,
    pub iterations: usize,
    /// Untimed runs before measurement starts.
    pub warmup: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            num_features: 10_000,
            iterations: 1000,
            warmup: 100,
            seed: 0x6265_6e63,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MachineInfo {
    pub os: String,
    pub arch: String,
    pub cpu_threads: usize,
}

impl MachineInfo {
    pub fn detect() -> Self {
        MachineInfo {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            cpu_threads: std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    /// Actual feature count of the timed model.
    pub num_features: usize,
    pub window_shape: (usize, usize),
    pub iterations: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    pub machine: MachineInfo,
}

/// Train a small throwaway model at the configured width, then time it.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    let train = generate(&SynthSpec::per_class(2, cfg.seed))?;
    let model = train_model(
        &train,
        &TrainConfig {
            num_features: cfg.num_features,
            seed: cfg.seed,
            alpha_grid: default_alpha_grid(),
            augment: None,
            augment_copies: 0,
        },
    )?;
    run_bench_with_model(&model, cfg)
}

/// Time an existing model, e.g. one loaded from disk.
pub fn run_bench_with_model(model: &RidgeModel, cfg: &BenchConfig) -> Result<BenchReport> {
    if cfg.iterations < 1 {
        return Err(Error::InvalidConfig("iterations must be >= 1".into()));
    }
    let pool = generate(&SynthSpec {
        class_counts: [3; crate::NUM_CLASSES],
        seed: cfg.seed ^ 0x9e37_79b9,
        window_len: model.rocket.input_len,
        sample_rate_hz: crate::signal::SAMPLE_RATE_HZ,
    })?
    .windows;

    for w in pool.iter().cycle().take(cfg.warmup) {
        std::hint::black_box(classify(model, w)?);
    }
    let mut times_ms = Vec::with_capacity(cfg.iterations);
    for w in pool.iter().cycle().take(cfg.iterations) {
        let t = Instant::now();
        let pred = classify(model, w)?;
        times_ms.push(t.elapsed().as_secs_f64() * 1000.0);
        std::hint::black_box(pred);
    }
    times_ms.sort_by(f64::total_cmp);
    let mean_ms = times_ms.iter().sum::<f64>() / times_ms.len() as f64;
    Ok(BenchReport {
        num_features: model.weights.nrows(),
        window_shape: (model.rocket.num_channels, model.rocket.input_len),
        iterations: cfg.iterations,
        mean_ms,
        p50_ms: percentile_nearest_rank(&times_ms, 50.0),
        p95_ms: percentile_nearest_rank(&times_ms, 95.0),
        p99_ms: percentile_nearest_rank(&times_ms, 99.0),
        max_ms: *times_ms.last().unwrap(),
        machine: MachineInfo::detect(),
    })
}
