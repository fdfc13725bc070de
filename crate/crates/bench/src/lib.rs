//! Shared fixtures for the criterion benches in `benches/`.

use motionrocket_core::pipeline::{train_model, TrainConfig};
use motionrocket_core::synth::{generate, SynthSpec};
use motionrocket_core::{LabeledDataset, MotionWindow, RidgeModel};

/// A trained model plus a pool of fresh windows to classify, sized so a
/// bench can cycle through the pool without repeating the exact input on
/// consecutive iterations.
pub struct Fixture {
    pub model: RidgeModel,
    pub pool: Vec<MotionWindow>,
}

pub fn fixture(num_features: usize) -> Fixture {
    let train = generate(&SynthSpec::per_class(3, 0xbe6c)).expect("synth");
    let cfg = TrainConfig {
        num_features,
        augment: None,
        ..TrainConfig::default()
    };
    let model = train_model(&train, &cfg).expect("train");
    let pool = generate(&SynthSpec::per_class(2, 0xbe6d)).expect("synth").windows;
    Fixture { model, pool }
}

pub fn training_set(per_class: usize) -> LabeledDataset {
    generate(&SynthSpec::per_class(per_class, 0xbe6e)).expect("synth")
}
