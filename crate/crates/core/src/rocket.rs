//! Randomized convolution features for multivariate windows.
//!
//! The transform slides a fixed bank of 84 short kernels over the signal at
//! several dilations and summarizes each convolution output by the fraction
//! of positions exceeding a learned bias (PPV, "proportion of positive
//! values"). The kernel bank is every way of placing three +2 weights in a
//! length-9 kernel whose other six weights are -1, so every kernel sums to
//! zero and the features ignore constant offsets.
//!
//! Kernels are deterministic; the only fitted state is, per kernel/dilation
//! group, a random subset of input channels to sum over, and per feature a
//! bias drawn from a quantile of the convolution output on one randomly
//! chosen training window. Everything is seeded, so fitting is reproducible.
//!
//! [`conv_naive`] is a direct, obviously-correct convolution kept as a
//! reference implementation; the production path ([`transform`]) uses the
//! two-term decomposition below and is checked against the naive version in
//! the tests.

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

use crate::seed;
use crate::signal::MotionWindow;
use crate::{Error, Result};

/// Kernel length; dilation stretches the 9 taps over `8 * d + 1` samples.
pub const KERNEL_LEN: usize = 9;
/// Number of kernels: C(9,3) placements of the three +2 weights.
pub const NUM_KERNELS: usize = 84;
/// Maximum channels a single group may sum over.
const MAX_COMB_CHANNELS: usize = 9;

/// All C(9,3) = 84 choices of +2 positions, lexicographic.
fn kernel_positions() -> &'static [[u8; 3]; NUM_KERNELS] {
    use std::sync::OnceLock;
    static TABLE: OnceLock<[[u8; 3]; NUM_KERNELS]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut out = [[0u8; 3]; NUM_KERNELS];
        let mut n = 0;
        for i in 0..KERNEL_LEN as u8 {
            for j in i + 1..KERNEL_LEN as u8 {
                for k in j + 1..KERNEL_LEN as u8 {
                    out[n] = [i, j, k];
                    n += 1;
                }
            }
        }
        assert_eq!(n, NUM_KERNELS);
        out
    })
}

/// One kernel/dilation pairing with its channel subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelGroup {
    /// Index into the kernel table.
    pub kernel: u8,
    pub dilation: u32,
    /// Zero-pad the borders (half the groups) or restrict to fully valid
    /// positions.
    pub padding: bool,
    /// Input channels summed before convolution, sorted.
    pub channels: Vec<u16>,
}

/// Fitted transform parameters. Frozen after [`RocketParams::fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct RocketParams {
    pub input_len: usize,
    pub num_channels: usize,
    /// Strictly increasing dilations, 1 up to `(input_len - 1) / 8`.
    pub dilations: Vec<u32>,
    /// Bias slots per kernel at each dilation; features = 84 * sum.
    pub features_per_dilation: Vec<usize>,
    /// One entry per (dilation, kernel), dilation-major.
    pub groups: Vec<KernelGroup>,
    /// One bias per feature, in feature order.
    pub biases: Vec<f64>,
    pub seed: u64,
}

/// The transform output for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Golden-ratio low-discrepancy quantile for feature slot `idx`.
///
/// Successive features probe well-spread quantiles of the convolution
/// output instead of clustering, without needing another RNG stream.
fn slot_quantile(idx: usize) -> f64 {
    const PHI: f64 = 0.618_033_988_749_894_9; // (sqrt(5) - 1) / 2
    ((idx + 1) as f64 * PHI).fract()
}

/// Exponentially spaced dilations from 1 to `(len - 1) / 8`, deduplicated.
fn plan_dilations(input_len: usize) -> Vec<u32> {
    let max_d = ((input_len - 1) / (KERNEL_LEN - 1)).max(1) as f64;
    let max_exp = max_d.log2();
    let mut out: Vec<u32> = Vec::new();
    let draws = 32;
    for j in 0..draws {
        let e = max_exp * j as f64 / (draws - 1) as f64;
        let d = 2f64.powf(e).floor() as u32;
        if out.last() != Some(&d) {
            out.push(d);
        }
    }
    out
}

/// Spread `total` bias slots over the dilations, small dilations first.
fn plan_features(total_slots: usize, num_dilations: usize) -> Vec<usize> {
    let base = total_slots / num_dilations;
    let extra = total_slots % num_dilations;
    (0..num_dilations)
        .map(|i| base + usize::from(i < extra))
        .collect()
}

impl RocketParams {
    /// Fit the transform on training windows.
    ///
    /// `num_features` is rounded down to a multiple of 84. Channel subsets
    /// and bias windows come from RNG streams derived from `(seed, group)`
    /// and `(seed, feature)` respectively, so the result does not depend on
    /// evaluation order.
    pub fn fit(windows: &[MotionWindow], num_features: usize, seed: u64) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::InvalidData("cannot fit on an empty window set".into()))?;
        let input_len = first.window_len();
        let num_channels = first.num_channels();
        if input_len < KERNEL_LEN {
            return Err(Error::InvalidConfig(format!(
                "window length {input_len} shorter than kernel length {KERNEL_LEN}"
            )));
        }
        if windows.iter().any(|w| {
            w.window_len() != input_len || w.num_channels() != num_channels
        }) {
            return Err(Error::ShapeMismatch(
                "all windows must share one shape to fit the transform".into(),
            ));
        }
        if num_features < NUM_KERNELS {
            return Err(Error::InvalidConfig(format!(
                "num_features must be at least {NUM_KERNELS}, got {num_features}"
            )));
        }

        let dilations = plan_dilations(input_len);
        let features_per_dilation = plan_features(num_features / NUM_KERNELS, dilations.len());
        let num_features = NUM_KERNELS * features_per_dilation.iter().sum::<usize>();

        // Channel subsets: sizes are log-uniform in [1, min(C, 9)], so most
        // groups watch a handful of channels and a few watch many.
        let max_comb = num_channels.min(MAX_COMB_CHANNELS);
        let size_exp_limit = ((max_comb + 1) as f64).log2();
        let mut groups = Vec::with_capacity(dilations.len() * NUM_KERNELS);
        for (di, &d) in dilations.iter().enumerate() {
            for k in 0..NUM_KERNELS {
                let g = di * NUM_KERNELS + k;
                let mut rng = seed::rng_for(seed, 0, g as u64);
                let u: f64 = rng.gen();
                let size = (2f64.powf(u * size_exp_limit).floor() as usize).clamp(1, max_comb);
                let mut channels: Vec<u16> = rand::seq::index::sample(&mut rng, num_channels, size)
                    .into_iter()
                    .map(|c| c as u16)
                    .collect();
                channels.sort_unstable();
                groups.push(KernelGroup {
                    kernel: k as u8,
                    dilation: d,
                    padding: g % 2 == 0,
                    channels,
                });
            }
        }

        let mut params = RocketParams {
            input_len,
            num_channels,
            dilations,
            features_per_dilation,
            groups,
            biases: vec![0.0; num_features],
            seed,
        };

        // Biases: each feature slot picks one training window at random and
        // reads a golden-ratio quantile of the group's convolution output on
        // it.
        let mut scratch = vec![0.0f64; input_len];
        let mut idx = 0usize;
        for (di, &fpd) in params.features_per_dilation.clone().iter().enumerate() {
            for k in 0..NUM_KERNELS {
                let group = &params.groups[di * NUM_KERNELS + k];
                for _slot in 0..fpd {
                    let mut rng = seed::rng_for(seed, 1, idx as u64);
                    let w = rng.gen_range(0..windows.len());
                    sum_channels(&windows[w], &group.channels, &mut scratch);
                    let mut y = conv_group(&scratch, group);
                    y.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    params.biases[idx] = lerp_quantile(&y, slot_quantile(idx));
                    idx += 1;
                }
            }
        }
        debug_assert_eq!(idx, num_features);
        Ok(params)
    }

    pub fn num_features(&self) -> usize {
        self.biases.len()
    }

    /// Per-group `(first feature index, slot count)`, in group order. Maps
    /// a feature back to the kernel/dilation/channel subset it came from.
    pub fn feature_layout(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.groups.len());
        let mut idx = 0;
        for (di, &fpd) in self.features_per_dilation.iter().enumerate() {
            for _k in 0..NUM_KERNELS {
                out.push((idx, fpd));
                idx += fpd;
            }
            let _ = di;
        }
        out
    }
}

/// Sum the group's channels into `out` (length = window length).
fn sum_channels(window: &MotionWindow, channels: &[u16], out: &mut [f64]) {
    out.fill(0.0);
    for &c in channels {
        let row = window.data.row(c as usize);
        for (o, v) in out.iter_mut().zip(row.iter()) {
            *o += v;
        }
    }
}

/// Fast convolution for one group: `y = -(sum of all taps) + 3 * (sum of
/// the three +2 taps)`, which equals the full weighted sum because the six
/// remaining weights are -1.
fn conv_group(z: &[f64], group: &KernelGroup) -> Vec<f64> {
    let pos = kernel_positions()[group.kernel as usize];
    let d = group.dilation as usize;
    let len = z.len();
    let span = (KERNEL_LEN - 1) * d;
    if group.padding {
        let mut y = Vec::with_capacity(len);
        let center = (KERNEL_LEN / 2) as isize * d as isize;
        for t in 0..len as isize {
            let mut total = 0.0;
            for j in 0..KERNEL_LEN as isize {
                let i = t + j * d as isize - center;
                if (0..len as isize).contains(&i) {
                    total += z[i as usize];
                }
            }
            let mut beta = 0.0;
            for &b in &pos {
                let i = t + b as isize * d as isize - center;
                if (0..len as isize).contains(&i) {
                    beta += z[i as usize];
                }
            }
            y.push(3.0 * beta - total);
        }
        y
    } else {
        let out_len = len - span;
        let mut y = Vec::with_capacity(out_len);
        for s in 0..out_len {
            let mut total = 0.0;
            for j in 0..KERNEL_LEN {
                total += z[s + j * d];
            }
            let beta = z[s + pos[0] as usize * d]
                + z[s + pos[1] as usize * d]
                + z[s + pos[2] as usize * d];
            y.push(3.0 * beta - total);
        }
        y
    }
}

/// Reference convolution: builds the explicit 9-weight kernel and slides it
/// directly. Slow; exists so the fast path has something to be checked
/// against.
pub fn conv_naive(z: &[f64], kernel: u8, dilation: u32, padding: bool) -> Vec<f64> {
    let pos = kernel_positions()[kernel as usize];
    let mut w = [-1.0f64; KERNEL_LEN];
    for &p in &pos {
        w[p as usize] = 2.0;
    }
    let d = dilation as usize;
    let len = z.len();
    let center = (KERNEL_LEN / 2) as isize * d as isize;
    let ts: Vec<isize> = if padding {
        (0..len as isize).collect()
    } else {
        let span = (KERNEL_LEN - 1) * d;
        (center..(len - span) as isize + center).collect()
    };
    let mut y = Vec::with_capacity(ts.len());
    for t in ts {
        let mut acc = 0.0;
        for (j, &wj) in w.iter().enumerate() {
            let i = t + j as isize * d as isize - center;
            if i >= 0 && (i as usize) < len {
                acc += wj * z[i as usize];
            }
        }
        y.push(acc);
    }
    y
}

/// PPV: fraction of convolution outputs strictly above the bias.
fn ppv(y: &[f64], bias: f64) -> f64 {
    let hits = y.iter().filter(|&&v| v > bias).count();
    hits as f64 / y.len() as f64
}

/// Linear-interpolated quantile of already sorted values.
fn lerp_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    }
}

/// Transform one window into its feature vector.
pub fn transform(params: &RocketParams, window: &MotionWindow) -> Result<FeatureVector> {
    if window.window_len() != params.input_len || window.num_channels() != params.num_channels {
        return Err(Error::ShapeMismatch(format!(
            "window is {}x{}, transform was fitted for {}x{}",
            window.num_channels(),
            window.window_len(),
            params.num_channels,
            params.input_len
        )));
    }
    let mut values = vec![0.0f64; params.num_features()];
    let mut scratch = vec![0.0f64; params.input_len];
    let mut idx = 0usize;
    for (di, &fpd) in params.features_per_dilation.iter().enumerate() {
        for k in 0..NUM_KERNELS {
            let group = &params.groups[di * NUM_KERNELS + k];
            sum_channels(window, &group.channels, &mut scratch);
            let y = conv_group(&scratch, group);
            for _slot in 0..fpd {
                values[idx] = ppv(&y, params.biases[idx]);
                idx += 1;
            }
        }
    }
    Ok(FeatureVector { values })
}

/// Transform many windows in parallel; rows follow input order.
pub fn transform_batch(params: &RocketParams, windows: &[MotionWindow]) -> Result<Array2<f64>> {
    let p = params.num_features();
    let rows: Result<Vec<FeatureVector>> = windows
        .par_iter()
        .map(|w| transform(params, w))
        .collect();
    let rows = rows?;
    let mut out = Array2::zeros((windows.len(), p));
    for (i, fv) in rows.into_iter().enumerate() {
        out.row_mut(i).assign(&ndarray::ArrayView1::from(&fv.values));
    }
    Ok(out)
}
