//! Sensor-stream domain types, uniform-grid assembly, and windowing.
//!
//! Four wireless IMU units report six channels each (three-axis accelerometer
//! in g, three-axis gyroscope in deg/s), giving 24 data channels at a nominal
//! 48 Hz. Units are asynchronous, so [`StreamAssembler`] resamples their
//! frames onto one uniform grid: each channel is linearly interpolated
//! between its two nearest frames, and a channel whose sensor goes silent
//! beyond the gap tolerance repeats its last value with a staleness flag.
//!
//! The grid is then cut into fixed-length windows ([`segment`]), the unit of
//! classification: 24 channels x 96 samples (2 s at 48 Hz) by default.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, NUM_CLASSES};

/// Number of IMU units worn by the performer.
pub const NUM_SENSORS: usize = 4;
/// Channels per unit: ax, ay, az, gx, gy, gz.
pub const CHANNELS_PER_SENSOR: usize = 6;
/// Total channels in the assembled stream.
pub const NUM_CHANNELS: usize = NUM_SENSORS * CHANNELS_PER_SENSOR;
/// Nominal sample rate of the assembled grid.
pub const SAMPLE_RATE_HZ: f64 = 48.0;
/// Default window length in seconds.
pub const WINDOW_SECONDS: f64 = 2.0;

/// One timestamped reading from a single IMU unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "WireFrame", into = "WireFrame")]
pub struct SensorFrame {
    /// Monotone per-sender counter.
    pub seq: u64,
    /// Sender timestamp in milliseconds.
    pub t_ms: f64,
    /// Unit index, 0..3.
    pub sensor_id: u8,
    /// Accelerometer in g.
    pub accel: [f64; 3],
    /// Gyroscope in deg/s.
    pub gyro: [f64; 3],
}

impl SensorFrame {
    /// Check the frame invariants: known sensor id and finite values.
    pub fn validate(&self) -> Result<()> {
        if self.sensor_id as usize >= NUM_SENSORS {
            return Err(Error::InvalidData(format!(
                "unknown sensor_id {} (expected 0..{})",
                self.sensor_id,
                NUM_SENSORS - 1
            )));
        }
        let finite = self.t_ms.is_finite()
            && self.accel.iter().all(|v| v.is_finite())
            && self.gyro.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidData("non-finite value in frame".into()));
        }
        Ok(())
    }

    fn channels(&self) -> [f64; CHANNELS_PER_SENSOR] {
        [
            self.accel[0],
            self.accel[1],
            self.accel[2],
            self.gyro[0],
            self.gyro[1],
            self.gyro[2],
        ]
    }
}

/// Flat on-the-wire form: `{"seq":..,"t_ms":..,"sensor":..,"ax":..,..,"gz":..}`.
#[derive(Serialize, Deserialize)]
struct WireFrame {
    seq: u64,
    t_ms: f64,
    sensor: u8,
    ax: f64,
    ay: f64,
    az: f64,
    gx: f64,
    gy: f64,
    gz: f64,
}

impl From<WireFrame> for SensorFrame {
    fn from(w: WireFrame) -> Self {
        SensorFrame {
            seq: w.seq,
            t_ms: w.t_ms,
            sensor_id: w.sensor,
            accel: [w.ax, w.ay, w.az],
            gyro: [w.gx, w.gy, w.gz],
        }
    }
}

impl From<SensorFrame> for WireFrame {
    fn from(f: SensorFrame) -> Self {
        WireFrame {
            seq: f.seq,
            t_ms: f.t_ms,
            sensor: f.sensor_id,
            ax: f.accel[0],
            ay: f.accel[1],
            az: f.accel[2],
            gx: f.gyro[0],
            gy: f.gyro[1],
            gz: f.gyro[2],
        }
    }
}

/// Fixed ordering of the 24 assembled channels.
///
/// Channel index = `sensor_id * 6 + axis`, axes ordered ax, ay, az, gx, gy,
/// gz. The ordering is arbitrary but frozen so trained models stay portable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelLayout {
    pub sample_rate_hz: f64,
}

impl Default for ChannelLayout {
    fn default() -> Self {
        ChannelLayout {
            sample_rate_hz: SAMPLE_RATE_HZ,
        }
    }
}

impl ChannelLayout {
    pub fn num_channels(&self) -> usize {
        NUM_CHANNELS
    }

    /// Grid spacing in milliseconds.
    pub fn sample_interval_ms(&self) -> f64 {
        1000.0 / self.sample_rate_hz
    }

    pub fn channel_index(sensor_id: u8, axis: usize) -> usize {
        sensor_id as usize * CHANNELS_PER_SENSOR + axis
    }

    /// Human-readable channel name, e.g. `s2.gy`.
    pub fn channel_name(index: usize) -> String {
        const AXES: [&str; 6] = ["ax", "ay", "az", "gx", "gy", "gz"];
        format!("s{}.{}", index / CHANNELS_PER_SENSOR, AXES[index % CHANNELS_PER_SENSOR])
    }
}

/// A fixed-length chunk of the assembled stream: channels x samples.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionWindow {
    /// Channel-major data, shape (num_channels, window_len).
    pub data: Array2<f64>,
    /// Grid timestamp of the first sample.
    pub t_start_ms: f64,
}

impl MotionWindow {
    /// Build a window, rejecting non-finite values.
    pub fn new(data: Array2<f64>, t_start_ms: f64) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite value in window".into()));
        }
        Ok(MotionWindow { data, t_start_ms })
    }

    pub fn num_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn window_len(&self) -> usize {
        self.data.ncols()
    }
}

/// Windows paired with integer class labels 0..6.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub windows: Vec<MotionWindow>,
    pub labels: Vec<i32>,
    pub class_names: Option<Vec<String>>,
}

impl LabeledDataset {
    pub fn new(windows: Vec<MotionWindow>, labels: Vec<i32>) -> Result<Self> {
        if windows.len() != labels.len() {
            return Err(Error::InvalidData(format!(
                "{} windows but {} labels",
                windows.len(),
                labels.len()
            )));
        }
        for &l in &labels {
            if l < 0 || l as usize >= NUM_CLASSES {
                return Err(Error::InvalidData(format!(
                    "label {} outside 0..{}",
                    l,
                    NUM_CLASSES - 1
                )));
            }
        }
        if let Some(first) = windows.first() {
            let shape = first.data.dim();
            if windows.iter().any(|w| w.data.dim() != shape) {
                return Err(Error::ShapeMismatch(
                    "all windows in a dataset must share one shape".into(),
                ));
            }
        }
        Ok(LabeledDataset {
            windows,
            labels,
            class_names: None,
        })
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// Per-class sample counts.
    pub fn class_histogram(&self) -> [usize; NUM_CLASSES] {
        let mut h = [0usize; NUM_CLASSES];
        for &l in &self.labels {
            h[l as usize] += 1;
        }
        h
    }

    /// Select a subset by index, preserving order of `indices`.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            windows: indices.iter().map(|&i| self.windows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
        }
    }
}

/// Assembly tuning knobs.
#[derive(Debug, Clone, Copy)]
pub struct AssembleConfig {
    /// A channel with no future frame within this horizon repeats its last
    /// value and flags the row stale.
    pub gap_tolerance_ms: f64,
    /// Frames older than this relative to their sensor's newest frame are
    /// discarded (counted). Disorder below this bound is re-sorted.
    pub reorder_tolerance_ms: f64,
    /// Grid origin; defaults to the first frame's timestamp.
    pub t0_ms: Option<f64>,
}

impl Default for AssembleConfig {
    fn default() -> Self {
        AssembleConfig {
            gap_tolerance_ms: 250.0,
            reorder_tolerance_ms: 100.0,
            t0_ms: None,
        }
    }
}

/// Counters for frames the assembler refused.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct AssembleStats {
    pub unknown_sensor: u64,
    pub nonfinite: u64,
    pub late_discarded: u64,
    pub frames_accepted: u64,
}

/// One emitted grid row.
#[derive(Debug, Clone)]
pub struct GridRow {
    pub t_ms: f64,
    pub values: [f64; NUM_CHANNELS],
    pub stale: bool,
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    t_ms: f64,
    values: [f64; CHANNELS_PER_SENSOR],
}

/// Single-writer state machine turning per-sensor frames into uniform rows.
///
/// A grid tick `T` is finalized as soon as every sensor seen so far has
/// delivered a frame at `t >= T` and the stream has moved past `T` (so all
/// channels interpolate exactly), or once the stream watermark passes
/// `T + gap_tolerance_ms` (silent sensors then hold their last value and the
/// row is flagged stale). Timeouts are driven by sender timestamps, never
/// wall clock, so a replayed recording assembles identically at any speed.
pub struct StreamAssembler {
    cfg: AssembleConfig,
    interval_ms: f64,
    t0_ms: Option<f64>,
    next_tick: u64,
    watermark: f64,
    buffers: [VecDeque<Sample>; NUM_SENSORS],
    newest: [Option<f64>; NUM_SENSORS],
    last_value: [Option<[f64; CHANNELS_PER_SENSOR]>; NUM_SENSORS],
    stats: AssembleStats,
}

impl StreamAssembler {
    pub fn new(cfg: AssembleConfig) -> Self {
        StreamAssembler {
            t0_ms: cfg.t0_ms,
            cfg,
            interval_ms: 1000.0 / SAMPLE_RATE_HZ,
            next_tick: 0,
            watermark: f64::NEG_INFINITY,
            buffers: Default::default(),
            newest: [None; NUM_SENSORS],
            last_value: [None; NUM_SENSORS],
            stats: AssembleStats::default(),
        }
    }

    pub fn with_sample_rate(cfg: AssembleConfig, sample_rate_hz: f64) -> Self {
        let mut a = Self::new(cfg);
        a.interval_ms = 1000.0 / sample_rate_hz;
        a
    }

    pub fn stats(&self) -> AssembleStats {
        self.stats
    }

    fn tick_time(&self, k: u64) -> f64 {
        // Never accumulate: t_k must be exactly t0 + k * interval.
        self.t0_ms.unwrap_or(0.0) + k as f64 * self.interval_ms
    }

    /// Feed one frame; returns any rows that became final.
    pub fn push(&mut self, frame: &SensorFrame) -> Vec<GridRow> {
        match frame.validate() {
            Ok(()) => {}
            Err(_) => {
                if frame.sensor_id as usize >= NUM_SENSORS {
                    self.stats.unknown_sensor += 1;
                } else {
                    self.stats.nonfinite += 1;
                }
                return Vec::new();
            }
        }
        let s = frame.sensor_id as usize;
        if let Some(newest) = self.newest[s] {
            if frame.t_ms < newest - self.cfg.reorder_tolerance_ms {
                self.stats.late_discarded += 1;
                return Vec::new();
            }
        }
        if self.t0_ms.is_none() {
            self.t0_ms = Some(frame.t_ms);
        }
        let sample = Sample {
            t_ms: frame.t_ms,
            values: frame.channels(),
        };
        let buf = &mut self.buffers[s];
        // Insert keeping the buffer time-sorted; frames usually append.
        let pos = buf
            .iter()
            .rposition(|x| x.t_ms <= sample.t_ms)
            .map(|p| p + 1)
            .unwrap_or(0);
        buf.insert(pos, sample);
        self.newest[s] = Some(self.newest[s].map_or(frame.t_ms, |n| n.max(frame.t_ms)));
        self.watermark = self.watermark.max(frame.t_ms);
        self.stats.frames_accepted += 1;
        self.advance(false)
    }

    /// Flush every tick covered by data seen so far. Call at end of stream.
    pub fn finish(&mut self) -> Vec<GridRow> {
        self.advance(true)
    }

    fn advance(&mut self, flush: bool) -> Vec<GridRow> {
        let mut out = Vec::new();
        if self.t0_ms.is_none() {
            return out;
        }
        loop {
            let t = self.tick_time(self.next_tick);
            if t > self.watermark {
                break;
            }
            let all_bracketed = (0..NUM_SENSORS)
                .all(|s| self.newest[s].map_or(self.last_value[s].is_some(), |n| n >= t));
            let ready = if flush {
                true
            } else if self.watermark >= t + self.cfg.gap_tolerance_ms {
                true
            } else {
                // Wait for strictly later data so frames landing exactly on
                // the tick still get in before it freezes.
                all_bracketed && self.watermark > t
            };
            if !ready {
                break;
            }
            out.push(self.emit_row(t));
            self.next_tick += 1;
        }
        out
    }

    fn emit_row(&mut self, t: f64) -> GridRow {
        let mut values = [0.0f64; NUM_CHANNELS];
        let mut stale = false;
        for s in 0..NUM_SENSORS {
            let buf = &self.buffers[s];
            let prev = buf.iter().rev().find(|x| x.t_ms <= t).copied();
            let next = buf.iter().find(|x| x.t_ms >= t).copied();
            let (vals, this_stale) = match (prev, next) {
                (Some(p), Some(n)) => {
                    let v = if n.t_ms > p.t_ms {
                        let frac = (t - p.t_ms) / (n.t_ms - p.t_ms);
                        let mut v = [0.0; CHANNELS_PER_SENSOR];
                        for c in 0..CHANNELS_PER_SENSOR {
                            v[c] = p.values[c] + frac * (n.values[c] - p.values[c]);
                        }
                        v
                    } else {
                        n.values
                    };
                    (v, false)
                }
                // Startup: the sensor's first frame is still ahead of the
                // grid. Backfill, stale only if it is beyond the tolerance.
                (None, Some(n)) => (n.values, n.t_ms - t > self.cfg.gap_tolerance_ms),
                // Silent sensor: hold the last value.
                (Some(p), None) => (p.values, true),
                (None, None) => match self.last_value[s] {
                    Some(v) => (v, true),
                    None => ([0.0; CHANNELS_PER_SENSOR], true),
                },
            };
            self.last_value[s] = Some(vals);
            for c in 0..CHANNELS_PER_SENSOR {
                values[s * CHANNELS_PER_SENSOR + c] = vals[c];
            }
            stale |= this_stale;
        }
        // Drop samples no longer needed: keep one frame at or before the
        // next tick as the interpolation anchor.
        let next_t = self.tick_time(self.next_tick + 1);
        for buf in &mut self.buffers {
            while buf.len() >= 2 && buf[1].t_ms <= next_t {
                buf.pop_front();
            }
        }
        GridRow { t_ms: t, values, stale }
    }
}

/// A fully assembled uniform stream.
#[derive(Debug, Clone)]
pub struct AssembledStream {
    /// Channel-major samples, shape (NUM_CHANNELS, n).
    pub data: Array2<f64>,
    /// Per-row staleness flags.
    pub stale: Vec<bool>,
    pub t0_ms: f64,
    pub sample_rate_hz: f64,
    pub stats: AssembleStats,
}

impl AssembledStream {
    pub fn num_samples(&self) -> usize {
        self.data.ncols()
    }

    /// Cut this stream into windows; see [`segment`].
    pub fn segment(&self, window_len: usize, hop: usize) -> Result<Vec<MotionWindow>> {
        segment(self, window_len, hop)
    }

    /// Whether window `i` (for the given geometry) covers any stale row.
    pub fn window_stale(&self, i: usize, window_len: usize, hop: usize) -> bool {
        let start = i * hop;
        self.stale[start..start + window_len].iter().any(|&s| s)
    }
}

/// Resample an ordered frame sequence onto the uniform 48 Hz grid.
///
/// Rows land exactly on `t0 + k / 48 s`. Each channel is linearly
/// interpolated between its two nearest frames; a channel with no frame
/// within the gap tolerance repeats its last value and the row is flagged
/// stale. Frames with an unknown sensor id or non-finite values are rejected
/// and counted in the returned stats.
pub fn assemble_stream(
    frames: &[SensorFrame],
    layout: &ChannelLayout,
    cfg: AssembleConfig,
) -> AssembledStream {
    let mut asm = StreamAssembler::with_sample_rate(cfg, layout.sample_rate_hz);
    let mut rows: Vec<GridRow> = Vec::new();
    for f in frames {
        rows.extend(asm.push(f));
    }
    rows.extend(asm.finish());

    let n = rows.len();
    let mut data = Array2::zeros((NUM_CHANNELS, n));
    let mut stale = Vec::with_capacity(n);
    for (k, row) in rows.iter().enumerate() {
        for c in 0..NUM_CHANNELS {
            data[[c, k]] = row.values[c];
        }
        stale.push(row.stale);
    }
    AssembledStream {
        data,
        stale,
        t0_ms: rows.first().map_or(asm.tick_time(0), |r| r.t_ms),
        sample_rate_hz: layout.sample_rate_hz,
        stats: asm.stats(),
    }
}

/// Cut a uniform stream into fixed-length windows.
///
/// Window `i` covers samples `[i*hop, i*hop + window_len)`; a trailing
/// partial window is discarded. A stream shorter than one window yields an
/// empty result.
pub fn segment(stream: &AssembledStream, window_len: usize, hop: usize) -> Result<Vec<MotionWindow>> {
    segment_array(
        &stream.data,
        window_len,
        hop,
        stream.t0_ms,
        stream.sample_rate_hz,
    )
}

/// [`segment`] over a bare channel-major sample matrix.
pub fn segment_array(
    data: &Array2<f64>,
    window_len: usize,
    hop: usize,
    t0_ms: f64,
    sample_rate_hz: f64,
) -> Result<Vec<MotionWindow>> {
    if window_len < 1 {
        return Err(Error::InvalidConfig("window_len must be >= 1".into()));
    }
    if hop < 1 || hop > window_len * 4 {
        return Err(Error::InvalidConfig(format!(
            "hop must be in 1..={} (window_len * 4), got {}",
            window_len * 4,
            hop
        )));
    }
    let n = data.ncols();
    let interval_ms = 1000.0 / sample_rate_hz;
    let mut out = Vec::new();
    let mut start = 0usize;
    while start + window_len <= n {
        let w = data.slice(s![.., start..start + window_len]).to_owned();
        out.push(MotionWindow {
            data: w,
            t_start_ms: t0_ms + start as f64 * interval_ms,
        });
        start += hop;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Dataset + recording files (NDJSON)
// ---------------------------------------------------------------------------

/// One dataset line: `{"label":int,"t_start_ms":num,"window":[[f64;L];C]}`,
/// outer list in channel-layout order.
#[derive(Serialize, Deserialize)]
struct WindowRecord {
    label: i32,
    t_start_ms: f64,
    window: Vec<Vec<f64>>,
}

/// Write a dataset as NDJSON, one window per line.
pub fn save_dataset<P: AsRef<Path>>(ds: &LabeledDataset, path: P) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for (win, &label) in ds.windows.iter().zip(&ds.labels) {
        let rec = WindowRecord {
            label,
            t_start_ms: win.t_start_ms,
            window: win
                .data
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect(),
        };
        serde_json::to_writer(&mut w, &rec)
            .map_err(|e| Error::InvalidData(format!("serialize window: {e}")))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Load an NDJSON dataset; errors name the offending 1-based line.
pub fn load_dataset<P: AsRef<Path>>(path: P) -> Result<LabeledDataset> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut windows = Vec::new();
    let mut labels = Vec::new();
    let mut shape: Option<(usize, usize)> = None;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: WindowRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        if rec.label < 0 || rec.label as usize >= NUM_CLASSES {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("label {} outside 0..{}", rec.label, NUM_CLASSES - 1),
            });
        }
        let channels = rec.window.len();
        let len = rec.window.first().map_or(0, |r| r.len());
        if channels == 0 || len == 0 || rec.window.iter().any(|r| r.len() != len) {
            return Err(Error::Parse {
                line: lineno,
                msg: "window must be a non-empty rectangular channel-major matrix".into(),
            });
        }
        match shape {
            None => shape = Some((channels, len)),
            Some(s) if s != (channels, len) => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!(
                        "window shape ({channels}, {len}) differs from first window {s:?}"
                    ),
                })
            }
            _ => {}
        }
        let flat: Vec<f64> = rec.window.into_iter().flatten().collect();
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: lineno,
                msg: "non-finite value in window".into(),
            });
        }
        let data = Array2::from_shape_vec((channels, len), flat)
            .expect("shape checked above");
        windows.push(MotionWindow {
            data,
            t_start_ms: rec.t_start_ms,
        });
        labels.push(rec.label);
    }
    LabeledDataset::new(windows, labels)
}

/// Write a raw frame recording as NDJSON (stream wire format).
pub fn save_recording<P: AsRef<Path>>(frames: &[SensorFrame], path: P) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for f in frames {
        serde_json::to_writer(&mut w, f)
            .map_err(|e| Error::InvalidData(format!("serialize frame: {e}")))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Load a raw frame recording; errors name the offending 1-based line.
pub fn load_recording<P: AsRef<Path>>(path: P) -> Result<Vec<SensorFrame>> {
    let file = std::fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut frames = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: SensorFrame = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        frames.push(f);
    }
    Ok(frames)
}
