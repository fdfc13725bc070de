//! Synthetic motion generator for tests, demos, and benchmarks.
//!
//! Produces seven stylized movement classes over the standard four-sensor
//! layout. Class 0 is stillness (noise plus gravity); classes 1..6 are
//! periodic movements differing in fundamental frequency, in which sensors
//! carry the movement, and in the accelerometer/gyroscope balance:
//!
//! | class | freq (Hz) | sensors        | emphasis |
//! |-------|-----------|----------------|----------|
//! | 1     | 1.0       | wrists (0, 1)  | accel    |
//! | 2     | 1.5       | ankles (2, 3)  | accel    |
//! | 3     | 2.0       | wrists (0, 1)  | accel    |
//! | 4     | 2.5       | ankles (2, 3)  | accel    |
//! | 5     | 3.0       | all            | accel    |
//! | 6     | 3.5       | all            | gyro     |
//!
//! Pairs 1/3 and 2/4 share sensor mask, axis weights, and amplitude, so
//! their per-channel variances are identical and only the frequency tells
//! them apart. Amplitude statistics alone cannot separate the classes; a
//! frequency-aware feature space can.

use std::f64::consts::TAU;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::seed;
use crate::signal::{
    LabeledDataset, MotionWindow, SensorFrame, CHANNELS_PER_SENSOR, NUM_CHANNELS, NUM_SENSORS,
    SAMPLE_RATE_HZ,
};
use crate::{Error, Result, NUM_CLASSES};

/// What to generate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub class_counts: [usize; NUM_CLASSES],
    pub seed: u64,
    pub window_len: usize,
    pub sample_rate_hz: f64,
}

impl SynthSpec {
    /// Equal count for every class.
    pub fn per_class(n: usize, seed: u64) -> Self {
        SynthSpec {
            class_counts: [n; NUM_CLASSES],
            seed,
            window_len: 96,
            sample_rate_hz: SAMPLE_RATE_HZ,
        }
    }

    /// A grand total, remainder spread round-robin from class 0.
    pub fn total(n: usize, seed: u64) -> Self {
        let base = n / NUM_CLASSES;
        let extra = n % NUM_CLASSES;
        let mut counts = [base; NUM_CLASSES];
        for c in counts.iter_mut().take(extra) {
            *c += 1;
        }
        SynthSpec {
            class_counts: counts,
            seed,
            window_len: 96,
            sample_rate_hz: SAMPLE_RATE_HZ,
        }
    }

    pub fn total_windows(&self) -> usize {
        self.class_counts.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_windows() == 0 {
            return Err(Error::InvalidConfig("nothing to generate".into()));
        }
        if self.window_len < 9 {
            return Err(Error::InvalidConfig("window_len must be >= 9".into()));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(Error::InvalidConfig("sample_rate_hz must be > 0".into()));
        }
        Ok(())
    }
}

/// Display names for the seven classes, in label order.
pub fn class_names() -> Vec<String> {
    ["still", "sway", "march", "wave", "kick", "bounce", "twist"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// Fundamental frequency of a class, 0 for stillness.
fn class_freq_hz(class: usize) -> f64 {
    if class == 0 {
        0.0
    } else {
        0.5 + 0.5 * class as f64
    }
}

/// How strongly each sensor carries the movement.
fn sensor_mask(class: usize) -> [f64; NUM_SENSORS] {
    match class {
        0 => [0.0; NUM_SENSORS],
        1 | 3 => [1.0, 1.0, 0.15, 0.15],
        2 | 4 => [0.15, 0.15, 1.0, 1.0],
        _ => [1.0; NUM_SENSORS],
    }
}

/// Relative weight of the six axes within a sensor.
fn axis_weights(class: usize) -> [f64; CHANNELS_PER_SENSOR] {
    if class == 6 {
        // Gyro-dominant.
        [0.3, 0.24, 0.18, 1.0, 0.8, 0.6]
    } else {
        [1.0, 0.8, 0.6, 0.5, 0.4, 0.3]
    }
}

const ACCEL_AMP: f64 = 0.5; // g
const GYRO_AMP: f64 = 50.0; // deg/s
const ACCEL_NOISE: f64 = 0.05;
const GYRO_NOISE: f64 = 4.0;
const GRAVITY_G: f64 = 1.0;

/// Noise-free channel value at absolute time `t` seconds.
fn clean_value(class: usize, channel: usize, t: f64, phase: f64, amp_scale: f64) -> f64 {
    let sensor = channel / CHANNELS_PER_SENSOR;
    let axis = channel % CHANNELS_PER_SENSOR;
    let gravity = if axis == 2 { GRAVITY_G } else { 0.0 };
    let f = class_freq_hz(class);
    if f == 0.0 {
        return gravity;
    }
    let base_amp = if axis < 3 { ACCEL_AMP } else { GYRO_AMP };
    let amp = amp_scale * base_amp * sensor_mask(class)[sensor] * axis_weights(class)[axis];
    let psi = axis as f64 * 0.9; // fixed per-axis phase offset
    let w = TAU * f * t + phase + psi;
    gravity + amp * (w.sin() + 0.25 * (2.0 * w + 0.6).sin())
}

fn channel_noise_sigma(channel: usize) -> f64 {
    if channel % CHANNELS_PER_SENSOR < 3 {
        ACCEL_NOISE
    } else {
        GYRO_NOISE
    }
}

/// Generate a labeled dataset, class-major, windows 2 s apart.
///
/// Window `i` of class `c` draws everything (phase, amplitude wobble,
/// noise) from an RNG derived from `(seed, c, i)`, so any subset is
/// reproducible independently of the rest.
pub fn generate(spec: &SynthSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let dt = 1.0 / spec.sample_rate_hz;
    let mut windows = Vec::with_capacity(spec.total_windows());
    let mut labels = Vec::with_capacity(spec.total_windows());
    let mut t_start = 0.0f64;
    for class in 0..NUM_CLASSES {
        for i in 0..spec.class_counts[class] {
            let mut rng = seed::rng_for(spec.seed, class as u64, i as u64);
            let phase: f64 = rng.gen::<f64>() * TAU;
            let amp_scale = 0.85 + 0.3 * rng.gen::<f64>();
            let mut data = Array2::zeros((NUM_CHANNELS, spec.window_len));
            for ch in 0..NUM_CHANNELS {
                let sigma = channel_noise_sigma(ch);
                for k in 0..spec.window_len {
                    let t = k as f64 * dt;
                    let z: f64 = rng.sample(StandardNormal);
                    data[[ch, k]] = clean_value(class, ch, t, phase, amp_scale) + sigma * z;
                }
            }
            windows.push(MotionWindow {
                data,
                t_start_ms: t_start,
            });
            labels.push(class as i32);
            t_start += 1000.0 * spec.window_len as f64 * dt;
        }
    }
    let mut ds = LabeledDataset::new(windows, labels)?;
    ds.class_names = Some(class_names());
    Ok(ds)
}

/// A continuous recording that walks through a sequence of classes.
#[derive(Debug, Clone)]
pub struct TransitionScript {
    /// Raw sensor frames, time-ordered, ready for assembly or replay.
    pub frames: Vec<SensorFrame>,
    /// One entry per block: (steady-state start ms, steady-state end ms,
    /// label). Steady state excludes the crossfade ramps.
    pub steady_ms: Vec<(f64, f64, i32)>,
    /// Midpoints of the crossfades between consecutive blocks.
    pub boundaries_ms: Vec<f64>,
}

/// Build a frame stream that plays `sequence` back to back, linearly
/// crossfading between neighbouring blocks.
///
/// Each block lasts `block_seconds`; consecutive blocks overlap by
/// `crossfade_seconds` during which the old signal ramps down as the new
/// one ramps up. Frames for all four sensors are emitted at the nominal
/// rate with a small fixed per-sensor stagger, so assembly has real
/// interpolation to do.
pub fn inject_transitions(
    spec: &SynthSpec,
    sequence: &[i32],
    block_seconds: f64,
    crossfade_seconds: f64,
) -> Result<TransitionScript> {
    spec.validate()?;
    if sequence.is_empty() {
        return Err(Error::InvalidConfig("empty class sequence".into()));
    }
    for &c in sequence {
        if c < 0 || c as usize >= NUM_CLASSES {
            return Err(Error::InvalidConfig(format!("class {c} out of range")));
        }
    }
    if !(block_seconds > 0.0) || crossfade_seconds < 0.0 || crossfade_seconds >= block_seconds {
        return Err(Error::InvalidConfig(
            "need 0 <= crossfade_seconds < block_seconds".into(),
        ));
    }

    let nb = sequence.len();
    let stride = block_seconds - crossfade_seconds;
    let total_s = stride * (nb - 1) as f64 + block_seconds;
    let dt = 1.0 / spec.sample_rate_hz;

    // Per-block random phase and amplitude wobble.
    let block_params: Vec<(f64, f64)> = (0..nb)
        .map(|b| {
            let mut rng = seed::rng_for(spec.seed, 7, b as u64);
            (rng.gen::<f64>() * TAU, 0.85 + 0.3 * rng.gen::<f64>())
        })
        .collect();

    let block_start = |b: usize| b as f64 * stride;
    // Blend weight of block b at time t: trapezoid with crossfade ramps.
    let weight = |b: usize, t: f64| -> f64 {
        let start = block_start(b);
        let end = start + block_seconds;
        if t < start || t > end {
            return 0.0;
        }
        let mut w = 1.0f64;
        if b > 0 && crossfade_seconds > 0.0 && t < start + crossfade_seconds {
            w = w.min((t - start) / crossfade_seconds);
        }
        if b + 1 < nb && crossfade_seconds > 0.0 && t > end - crossfade_seconds {
            w = w.min((end - t) / crossfade_seconds);
        }
        w
    };

    let mut frames = Vec::new();
    let steps = (total_s / dt).floor() as usize;
    let mut seq_no = 0u64;
    for k in 0..=steps {
        for s in 0..NUM_SENSORS {
            // Small fixed stagger keeps sensors off the common grid.
            let t = k as f64 * dt + s as f64 * 1.7e-3;
            if t > total_s {
                continue;
            }
            let mut rng = seed::rng_for(spec.seed, 8 + s as u64, k as u64);
            let mut accel = [0.0f64; 3];
            let mut gyro = [0.0f64; 3];
            for axis in 0..CHANNELS_PER_SENSOR {
                let ch = s * CHANNELS_PER_SENSOR + axis;
                let mut v = 0.0;
                for (b, &class) in sequence.iter().enumerate() {
                    let w = weight(b, t);
                    if w > 0.0 {
                        let (phase, amp) = block_params[b];
                        v += w * clean_value(class as usize, ch, t, phase, amp);
                    }
                }
                let z: f64 = rng.sample(StandardNormal);
                v += channel_noise_sigma(ch) * z;
                if axis < 3 {
                    accel[axis] = v;
                } else {
                    gyro[axis - 3] = v;
                }
            }
            frames.push(SensorFrame {
                seq: seq_no,
                t_ms: t * 1000.0,
                sensor_id: s as u8,
                accel,
                gyro,
            });
            seq_no += 1;
        }
    }

    let steady_ms = (0..nb)
        .map(|b| {
            let mut lo = block_start(b);
            let mut hi = lo + block_seconds;
            if b > 0 {
                lo += crossfade_seconds;
            }
            if b + 1 < nb {
                hi -= crossfade_seconds;
            }
            (lo * 1000.0, hi * 1000.0, sequence[b])
        })
        .collect();
    let boundaries_ms = (1..nb)
        .map(|b| (block_start(b) + crossfade_seconds / 2.0) * 1000.0)
        .collect();

    Ok(TransitionScript {
        frames,
        steady_ms,
        boundaries_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ridge::{default_alpha_grid, fit_ridge};
    use crate::rocket::{self, FeatureVector, RocketParams};
    use ndarray::Array2;

    #[test]
    fn per_class_counts() {
        let ds = generate(&SynthSpec::per_class(5, 1)).unwrap();
        assert_eq!(ds.len(), 35);
        assert_eq!(ds.class_histogram(), [5; NUM_CLASSES]);
        assert_eq!(ds.class_names.as_ref().unwrap().len(), NUM_CLASSES);
    }

    #[test]
    fn total_spreads_remainder_round_robin() {
        let spec = SynthSpec::total(648, 7);
        assert_eq!(spec.class_counts, [93, 93, 93, 93, 92, 92, 92]);
        assert_eq!(spec.total_windows(), 648);
        let even = SynthSpec::total(14, 0);
        assert_eq!(even.class_counts, [2; NUM_CLASSES]);
    }

    #[test]
    fn windows_have_standard_shape_and_finite_values() {
        let ds = generate(&SynthSpec::per_class(3, 2)).unwrap();
        for w in &ds.windows {
            assert_eq!(w.num_channels(), NUM_CHANNELS);
            assert_eq!(w.window_len(), 96);
            assert!(w.data.iter().all(|v| v.is_finite()));
        }
        // Start times strictly increase.
        for pair in ds.windows.windows(2) {
            assert!(pair[1].t_start_ms > pair[0].t_start_ms);
        }
    }

    #[test]
    fn generation_is_deterministic_in_seed() {
        let a = generate(&SynthSpec::per_class(4, 11)).unwrap();
        let b = generate(&SynthSpec::per_class(4, 11)).unwrap();
        assert_eq!(a, b);
        let c = generate(&SynthSpec::per_class(4, 12)).unwrap();
        assert_ne!(a.windows[0], c.windows[0]);
    }

    #[test]
    fn still_class_is_noise_around_gravity() {
        let ds = generate(&SynthSpec::per_class(2, 3)).unwrap();
        let w = &ds.windows[0]; // class 0
        for s in 0..NUM_SENSORS {
            let az = w.data.row(s * 6 + 2);
            let mean = az.sum() / az.len() as f64;
            assert!((mean - GRAVITY_G).abs() < 0.05, "sensor {s} mean {mean}");
            let ax = w.data.row(s * 6);
            let mean_x = ax.sum() / ax.len() as f64;
            assert!(mean_x.abs() < 0.05);
        }
    }

    #[test]
    fn amplitude_twins_have_matching_channel_power() {
        // Classes 1 and 3 must be indistinguishable by per-channel std.
        let ds = generate(&SynthSpec::per_class(30, 5)).unwrap();
        let mean_std_per_class = |class: i32, ch: usize| -> f64 {
            let mut acc = 0.0;
            let mut n = 0;
            for (w, &l) in ds.windows.iter().zip(&ds.labels) {
                if l != class {
                    continue;
                }
                let row = w.data.row(ch);
                let m = row.sum() / row.len() as f64;
                acc += (row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / row.len() as f64)
                    .sqrt();
                n += 1;
            }
            acc / n as f64
        };
        for ch in 0..NUM_CHANNELS {
            let a = mean_std_per_class(1, ch);
            let b = mean_std_per_class(3, ch);
            let rel = (a - b).abs() / a.max(b).max(1e-9);
            assert!(rel < 0.1, "channel {ch}: {a} vs {b}");
        }
    }

    /// Per-channel standard deviations: the strongest cheap summary a
    /// linear model could use without seeing temporal structure.
    fn amplitude_features(ds: &LabeledDataset) -> Array2<f64> {
        let mut x = Array2::zeros((ds.len(), NUM_CHANNELS));
        for (i, w) in ds.windows.iter().enumerate() {
            for ch in 0..NUM_CHANNELS {
                let row = w.data.row(ch);
                let m = row.sum() / row.len() as f64;
                x[[i, ch]] =
                    (row.iter().map(|v| (v - m).powi(2)).sum::<f64>() / row.len() as f64).sqrt();
            }
        }
        x
    }

    #[test]
    fn amplitude_probe_fails_where_convolution_succeeds() {
        let train = generate(&SynthSpec::per_class(24, 41)).unwrap();
        let test = generate(&SynthSpec::per_class(10, 42)).unwrap();

        // Linear model on amplitude summaries: blind to the frequency-only
        // class pairs, so accuracy stays well below 0.9.
        let probe = fit_ridge(
            &amplitude_features(&train),
            &train.labels,
            &default_alpha_grid(),
            RocketParams::fit(&train.windows[..1], 84, 0).unwrap(),
        )
        .unwrap();
        let xt = amplitude_features(&test);
        let mut probe_correct = 0;
        for (i, &l) in test.labels.iter().enumerate() {
            let fv = FeatureVector {
                values: xt.row(i).to_vec(),
            };
            if probe.predict(&fv).unwrap().0 == l {
                probe_correct += 1;
            }
        }
        let probe_acc = probe_correct as f64 / test.len() as f64;
        assert!(probe_acc < 0.9, "amplitude probe too strong: {probe_acc}");

        // The convolution features see frequency and separate everything.
        let params = RocketParams::fit(&train.windows, 840, 13).unwrap();
        let x = rocket::transform_batch(&params, &train.windows).unwrap();
        let model = fit_ridge(&x, &train.labels, &default_alpha_grid(), params).unwrap();
        let mut correct = 0;
        for (w, &l) in test.windows.iter().zip(&test.labels) {
            let f = rocket::transform(&model.rocket, w).unwrap();
            if model.predict(&f).unwrap().0 == l {
                correct += 1;
            }
        }
        let acc = correct as f64 / test.len() as f64;
        assert!(acc >= 0.9, "convolution features should separate: {acc}");
        assert!(acc > probe_acc, "transform must beat the probe");
    }

    #[test]
    fn transitions_structure() {
        let spec = SynthSpec::per_class(1, 9);
        let script = inject_transitions(&spec, &[1, 4, 2], 4.0, 0.5).unwrap();
        assert_eq!(script.steady_ms.len(), 3);
        assert_eq!(script.boundaries_ms.len(), 2);
        // Frames time-ordered overall (same-tick stagger included).
        for pair in script.frames.windows(2) {
            assert!(pair[1].t_ms >= pair[0].t_ms - 1e-9);
        }
        // Steady regions sit inside their blocks in sequence order.
        assert_eq!(script.steady_ms[0].2, 1);
        assert_eq!(script.steady_ms[1].2, 4);
        assert_eq!(script.steady_ms[2].2, 2);
        for (lo, hi, _) in &script.steady_ms {
            assert!(hi > lo);
        }
        // Boundaries fall between the steady regions they separate.
        for (b, &t) in script.boundaries_ms.iter().enumerate() {
            assert!(t > script.steady_ms[b].1 - 1.0);
            assert!(t < script.steady_ms[b + 1].0 + 1.0);
        }
        // Total duration: 3 blocks of 4 s overlapping 0.5 s.
        let last = script.frames.last().unwrap().t_ms;
        assert!((last / 1000.0 - (4.0 * 3.0 - 0.5 * 2.0)).abs() < 0.1);
    }

    #[test]
    fn transitions_validate_inputs() {
        let spec = SynthSpec::per_class(1, 0);
        assert!(inject_transitions(&spec, &[], 4.0, 0.5).is_err());
        assert!(inject_transitions(&spec, &[9], 4.0, 0.5).is_err());
        assert!(inject_transitions(&spec, &[1], 2.0, 2.0).is_err());
    }
}
