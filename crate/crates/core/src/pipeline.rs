//! End-to-end glue: dataset in, fitted model out; window in, label out.

use std::time::Instant;

use crate::augment::{expand_dataset, AugmentConfig};
use crate::ridge::{default_alpha_grid, fit_ridge, RidgeModel};
use crate::rocket::{transform, transform_batch, RocketParams};
use crate::signal::{LabeledDataset, MotionWindow};
use crate::{Error, Result};

/// Everything that shapes a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Requested transform width; rounded down to a multiple of 84.
    pub num_features: usize,
    /// Seeds the transform's channel subsets and bias sampling.
    pub seed: u64,
    /// Regularizers searched by leave-one-out error.
    pub alpha_grid: Vec<f64>,
    /// `None` disables augmentation entirely.
    pub augment: Option<AugmentConfig>,
    /// Augmented copies per training window.
    pub augment_copies: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            num_features: 10_000,
            seed: 42,
            alpha_grid: default_alpha_grid(),
            augment: Some(AugmentConfig::default()),
            augment_copies: 1,
        }
    }
}

/// One classified window.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: i32,
    /// Softmax probabilities, one per class.
    pub probs: Vec<f64>,
    /// Wall time spent in transform + classify for this window.
    pub infer_micros: u64,
}

/// Fit the full pipeline on a labeled dataset.
///
/// Augmented copies (if configured) are appended to the training set before
/// the transform is fitted, so bias quantiles see the augmented
/// distribution too.
pub fn train_model(ds: &LabeledDataset, cfg: &TrainConfig) -> Result<RidgeModel> {
    if ds.is_empty() {
        return Err(Error::InvalidData("cannot train on an empty dataset".into()));
    }
    let expanded;
    let training: &LabeledDataset = match (&cfg.augment, cfg.augment_copies) {
        (Some(aug), copies) if copies > 0 => {
            expanded = expand_dataset(ds, aug, copies)?;
            &expanded
        }
        _ => ds,
    };
    let rocket = RocketParams::fit(&training.windows, cfg.num_features, cfg.seed)?;
    let x = transform_batch(&rocket, &training.windows)?;
    let mut model = fit_ridge(&x, &training.labels, &cfg.alpha_grid, rocket)?;
    model.class_names = ds.class_names.clone();
    Ok(model)
}

/// Classify one window, timing the transform + decision.
pub fn classify(model: &RidgeModel, window: &MotionWindow) -> Result<Prediction> {
    let start = Instant::now();
    let features = transform(&model.rocket, window)?;
    let (label, probs) = model.predict(&features)?;
    let infer_micros = start.elapsed().as_micros() as u64;
    Ok(Prediction {
        label,
        probs,
        infer_micros,
    })
}
