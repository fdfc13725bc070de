//! Optional JSON config file.
//!
//! Every flag can instead come from a config file section named after its
//! subcommand; explicit flags win. Unknown keys are rejected so typos fail
//! loudly rather than silently falling back to defaults.

use crate::Failure;
use serde::Deserialize;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub gen: GenFile,
    pub train: TrainFile,
    pub eval: EvalFile,
    pub serve: ServeFile,
    pub replay: ReplayFile,
    pub bench: BenchFile,
    pub reproduce: ReproduceFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenFile {
    pub per_class: Option<usize>,
    pub total: Option<usize>,
    pub sequence: Option<Vec<i32>>,
    pub block_seconds: Option<f64>,
    pub crossfade_seconds: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub dataset: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub features: Option<usize>,
    pub seed: Option<u64>,
    pub no_augment: Option<bool>,
    pub augment_copies: Option<usize>,
    pub jitter_sigma: Option<f64>,
    pub warp_knots: Option<usize>,
    pub warp_sigma: Option<f64>,
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalFile {
    pub dataset: Option<PathBuf>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub report: Option<PathBuf>,
    pub plot: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub features: Option<usize>,
    pub no_augment: Option<bool>,
    pub augment_copies: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeFile {
    pub listen: Option<SocketAddr>,
    pub osc: Option<SocketAddr>,
    pub model: Option<PathBuf>,
    pub hop: Option<f64>,
    pub window: Option<f64>,
    pub probability_floor: Option<f64>,
    pub latency_log: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayFile {
    pub recording: Option<PathBuf>,
    pub target: Option<SocketAddr>,
    pub speed: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchFile {
    pub model: Option<PathBuf>,
    pub iterations: Option<usize>,
    pub features: Option<usize>,
    pub warmup: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReproduceFile {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub folds: Option<usize>,
    pub features: Option<usize>,
    pub total: Option<usize>,
    pub speed: Option<f64>,
}

pub fn load(path: Option<&Path>) -> Result<FileConfig, Failure> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("config file {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("config file {}: {e}", path.display())))
}
