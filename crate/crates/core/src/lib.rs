//! Real-time motion recognition for wearable IMU streams.
//!
//! The pipeline mirrors a live-performance setup: four six-channel IMU units
//! (3-axis accelerometer + 3-axis gyroscope) stream frames at 48 Hz, the
//! frames are assembled into a uniform 24-channel grid, segmented into
//! 2-second windows, mapped to proportion-of-positive-values features by a
//! bank of dilated zero-sum convolution kernels, and classified by a ridge
//! model with softmax probabilities. Trigger messages go out as OSC over UDP
//! within a tight latency budget.
//!
//! Module map:
//!
//! - [`signal`]: sensor frame types, stream assembly, windowing, dataset I/O
//! - [`augment`]: jitter and time-warp training augmentation
//! - [`rocket`]: the convolutional feature transform (fit + fast transform +
//!   naive reference convolution)
//! - [`ridge`]: closed-form multiclass ridge with automatic regularization
//! - [`model_io`]: binary model file round-trip
//! - [`pipeline`]: end-to-end training configuration and model fitting
//! - [`eval`]: stratified cross-validation, confusion/F1/ROC reporting
//! - [`synth`]: synthetic 7-class motion generator and transition recordings
//! - [`serve`]: live TCP ingest -> classify -> OSC/NDJSON trigger loop
//! - [`bench`]: single-window inference latency measurement

pub mod augment;
pub mod bench;
pub mod eval;
pub mod model_io;
pub mod pipeline;
pub mod ridge;
pub mod rocket;
pub mod serve;
pub mod signal;
pub mod synth;

mod seed;

pub use augment::AugmentConfig;
pub use eval::{EvalReport, FoldPlan};
pub use pipeline::{Prediction, TrainConfig};
pub use ridge::RidgeModel;
pub use rocket::{FeatureVector, RocketParams};
pub use serve::{ServerConfig, TriggerEvent};
pub use signal::{ChannelLayout, LabeledDataset, MotionWindow, SensorFrame};
pub use synth::SynthSpec;

/// Number of motion classes (class 0 is the negative/idle class).
pub const NUM_CLASSES: usize = 7;

/// Unified error type for the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A malformed line in an NDJSON file, with its 1-based line number.
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("runtime: {0}")]
    Runtime(String),
}

pub type Result<T> = std::result::Result<T, Error>;
