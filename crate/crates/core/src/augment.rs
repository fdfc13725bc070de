//! Training-set augmentation: per-channel jitter and smooth time warping.
//!
//! Both transforms are label-preserving. Jitter adds Gaussian noise scaled by
//! each channel's own standard deviation, so quiet channels stay quiet. Time
//! warping stretches and compresses the window along the time axis with a
//! smooth monotone map, imitating the natural tempo variation between
//! repetitions of the same movement.
//!
//! Every augmented copy draws from an RNG derived from (seed, window index,
//! copy index), so results are reproducible and independent of iteration
//! order.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::seed;
use crate::signal::{LabeledDataset, MotionWindow};
use crate::{Error, Result};

/// Knobs for [`expand_dataset`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// Noise scale as a fraction of each channel's standard deviation.
    pub jitter_sigma: f64,
    /// Total warp knots, including the two pinned endpoints.
    pub warp_knots: usize,
    /// Knot displacement scale, as a fraction of the knot spacing.
    pub warp_sigma: f64,
    /// Base seed for the per-copy derived RNGs.
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            jitter_sigma: 0.03,
            warp_knots: 4,
            warp_sigma: 0.2,
            seed: 0x6d6f_7469,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "jitter_sigma must be finite and >= 0, got {}",
                self.jitter_sigma
            )));
        }
        if !(self.warp_sigma >= 0.0 && self.warp_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "warp_sigma must be finite and >= 0, got {}",
                self.warp_sigma
            )));
        }
        if self.warp_sigma > 0.0 && self.warp_knots < 2 {
            return Err(Error::InvalidConfig(
                "warp_knots must be >= 2 (the two endpoints are knots)".into(),
            ));
        }
        Ok(())
    }
}

/// Add zero-mean Gaussian noise, scaled per channel.
///
/// Channel `c` receives noise with sigma `sigma_frac * std(c)`; a constant
/// channel therefore comes back unchanged.
pub fn jitter<R: Rng>(window: &MotionWindow, sigma_frac: f64, rng: &mut R) -> MotionWindow {
    let mut data = window.data.clone();
    for mut row in data.rows_mut() {
        let n = row.len() as f64;
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sigma = sigma_frac * var.sqrt();
        if sigma > 0.0 {
            for v in row.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v += sigma * z;
            }
        }
    }
    MotionWindow {
        data,
        t_start_ms: window.t_start_ms,
    }
}

/// Smooth monotone distortion of a window's time axis.
///
/// A warp map on [0, 1] is built from `knots` control points: endpoints
/// pinned at 0 and 1, interior knots displaced from their uniform positions
/// by `N(0, sigma * spacing)` and redrawn until the sequence stays strictly
/// increasing. Monotone cubic interpolation through the knots gives a smooth
/// map with no fold-overs, and each channel is resampled along it linearly.
/// `sigma == 0` returns an exact copy.
pub fn time_warp<R: Rng>(
    window: &MotionWindow,
    knots: usize,
    sigma: f64,
    rng: &mut R,
) -> MotionWindow {
    if sigma == 0.0 || knots < 3 {
        return window.clone();
    }
    let xs: Vec<f64> = (0..knots).map(|i| i as f64 / (knots - 1) as f64).collect();
    let spacing = 1.0 / (knots - 1) as f64;
    let mut ys = xs.clone();
    // Redraw the interior displacements until strictly increasing; at the
    // default sigma a redraw is needed well under 1% of the time.
    const MARGIN: f64 = 1e-6;
    for _attempt in 0..1000 {
        for i in 1..knots - 1 {
            let z: f64 = rng.sample(StandardNormal);
            ys[i] = xs[i] + sigma * spacing * z;
        }
        let increasing = ys.windows(2).all(|p| p[1] - p[0] > MARGIN);
        let inside = ys[1..knots - 1].iter().all(|&y| y > MARGIN && y < 1.0 - MARGIN);
        if increasing && inside {
            let map = MonotoneCubic::new(&xs, &ys);
            return resample_along(window, &map);
        }
    }
    // Pathological sigma: give up on warping rather than loop forever.
    window.clone()
}

fn resample_along(window: &MotionWindow, map: &MonotoneCubic) -> MotionWindow {
    let len = window.window_len();
    let channels = window.num_channels();
    let scale = (len - 1) as f64;
    let mut data = Array2::zeros((channels, len));
    for k in 0..len {
        let u = k as f64 / scale;
        let src = (map.eval(u) * scale).clamp(0.0, scale);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        let frac = src - i0 as f64;
        for c in 0..channels {
            let a = window.data[[c, i0]];
            let b = window.data[[c, i1]];
            data[[c, k]] = a + frac * (b - a);
        }
    }
    MotionWindow {
        data,
        t_start_ms: window.t_start_ms,
    }
}

/// Monotone piecewise-cubic interpolant (Fritsch-Carlson tangent limiting).
///
/// For strictly increasing knot values the interpolant is monotone on the
/// whole interval, which is what makes the warp fold-over free.
struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ms: Vec<f64>,
}

impl MonotoneCubic {
    fn new(xs: &[f64], ys: &[f64]) -> Self {
        let n = xs.len();
        debug_assert!(n >= 2);
        let deltas: Vec<f64> = (0..n - 1)
            .map(|i| (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]))
            .collect();
        let mut ms = vec![0.0; n];
        ms[0] = deltas[0];
        ms[n - 1] = deltas[n - 2];
        for i in 1..n - 1 {
            if deltas[i - 1] * deltas[i] <= 0.0 {
                ms[i] = 0.0;
            } else {
                ms[i] = 0.5 * (deltas[i - 1] + deltas[i]);
            }
        }
        // Limit tangents so the cubic cannot overshoot between knots.
        for i in 0..n - 1 {
            if deltas[i] == 0.0 {
                ms[i] = 0.0;
                ms[i + 1] = 0.0;
                continue;
            }
            let a = ms[i] / deltas[i];
            let b = ms[i + 1] / deltas[i];
            let s = a * a + b * b;
            if s > 9.0 {
                let tau = 3.0 / s.sqrt();
                ms[i] = tau * a * deltas[i];
                ms[i + 1] = tau * b * deltas[i];
            }
        }
        MonotoneCubic {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            ms,
        }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = match self
            .xs
            .binary_search_by(|probe| probe.partial_cmp(&x).unwrap())
        {
            Ok(i) => return self.ys[i],
            Err(i) => i - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.ms[i] + h01 * self.ys[i + 1] + h11 * h * self.ms[i + 1]
    }
}

/// Append `copies` augmented variants of every window to the dataset.
///
/// Output order is all originals first, then copies grouped by source window.
/// Copy `j` of window `i` uses an RNG derived from `(cfg.seed, i, j)`: the
/// result is byte-stable across runs and does not depend on how the loop is
/// scheduled. Each copy is time-warped first, then jittered, so the noise is
/// not smoothed away by the resampling.
pub fn expand_dataset(
    ds: &LabeledDataset,
    cfg: &AugmentConfig,
    copies: usize,
) -> Result<LabeledDataset> {
    cfg.validate()?;
    let mut windows = ds.windows.clone();
    let mut labels = ds.labels.clone();
    windows.reserve(ds.len() * copies);
    labels.reserve(ds.len() * copies);
    for i in 0..ds.len() {
        for j in 0..copies {
            let mut rng = seed::rng_for(cfg.seed, i as u64, j as u64);
            let warped = time_warp(&ds.windows[i], cfg.warp_knots, cfg.warp_sigma, &mut rng);
            let aug = jitter(&warped, cfg.jitter_sigma, &mut rng);
            windows.push(aug);
            labels.push(ds.labels[i]);
        }
    }
    let mut out = LabeledDataset::new(windows, labels)?;
    out.class_names = ds.class_names.clone();
    Ok(out)
}
