//! Live classification server.
//!
//! Clients connect over TCP and stream NDJSON sensor frames. The server
//! assembles them onto the 48 Hz grid, cuts windows at the configured hop,
//! classifies each window, and emits one trigger per window three ways:
//! echoed as NDJSON to every connected TCP client, as an OSC datagram to an
//! optional UDP target, and as a record in an optional latency log.
//!
//! Four stages run on their own threads, connected by channels:
//!
//! ```text
//! readers -> assembler -> ring -> classifier -> emitter
//! ```
//!
//! The ring between assembly and classification is a small drop-oldest
//! queue, so a slow classifier sheds the stalest windows (counted in
//! [`ServerStats::window_drops`]) instead of stalling ingest.

pub mod latency;
pub mod osc;
pub mod replay;
pub mod ring;

use crate::pipeline::classify;
use crate::ridge::RidgeModel;
use crate::signal::{
    AssembleConfig, AssembleStats, GridRow, MotionWindow, SensorFrame, StreamAssembler,
    NUM_CHANNELS, SAMPLE_RATE_HZ,
};
use crate::{Error, Result};
use crossbeam_channel::{bounded, unbounded, Receiver, RecvTimeoutError, Sender};
use latency::LatencyRecord;
use ndarray::Array2;
use ring::Ring;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::io::{BufRead, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// TCP ingest address; port 0 picks a free port.
    pub listen: SocketAddr,
    /// Where OSC trigger datagrams go; `None` disables OSC output.
    pub osc_target: Option<SocketAddr>,
    pub osc_address: String,
    pub window_seconds: f64,
    /// Spacing between window starts. May exceed the window length (up to
    /// four times) for sparse triggering.
    pub hop_seconds: f64,
    /// OSC datagrams are suppressed while the winning probability is below
    /// this; NDJSON and the latency log always see every window.
    pub probability_floor: f64,
    pub gap_tolerance_ms: f64,
    pub reorder_tolerance_ms: f64,
    /// NDJSON file receiving one latency record per emitted trigger.
    pub latency_log: Option<PathBuf>,
    /// Windows buffered between assembly and classification.
    pub queue_capacity: usize,
}

impl ServerConfig {
    pub fn new(listen: SocketAddr) -> Self {
        ServerConfig {
            listen,
            osc_target: None,
            osc_address: "/motion".into(),
            window_seconds: 2.0,
            hop_seconds: 2.0,
            probability_floor: 0.0,
            gap_tolerance_ms: 250.0,
            reorder_tolerance_ms: 100.0,
            latency_log: None,
            queue_capacity: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.window_seconds.is_finite() && self.window_seconds > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "window_seconds must be positive, got {}",
                self.window_seconds
            )));
        }
        if !(self.hop_seconds.is_finite()
            && self.hop_seconds > 0.0
            && self.hop_seconds <= 4.0 * self.window_seconds)
        {
            return Err(Error::InvalidConfig(format!(
                "hop_seconds must satisfy 0 < hop <= 4 * window ({}), got {}",
                4.0 * self.window_seconds,
                self.hop_seconds
            )));
        }
        if !(self.probability_floor.is_finite() && (0.0..=1.0).contains(&self.probability_floor)) {
            return Err(Error::InvalidConfig(format!(
                "probability_floor must lie in [0, 1], got {}",
                self.probability_floor
            )));
        }
        if !(self.gap_tolerance_ms.is_finite() && self.gap_tolerance_ms >= 0.0)
            || !(self.reorder_tolerance_ms.is_finite() && self.reorder_tolerance_ms >= 0.0)
        {
            return Err(Error::InvalidConfig("tolerances must be >= 0".into()));
        }
        if self.queue_capacity < 1 {
            return Err(Error::InvalidConfig("queue_capacity must be >= 1".into()));
        }
        if self.window_len() < 1 || self.hop_len() < 1 {
            return Err(Error::InvalidConfig(
                "window and hop must cover at least one sample".into(),
            ));
        }
        osc::encode_trigger(&self.osc_address, 0, 0.0)?;
        Ok(())
    }

    pub fn window_len(&self) -> usize {
        (self.window_seconds * SAMPLE_RATE_HZ).round() as usize
    }

    pub fn hop_len(&self) -> usize {
        (self.hop_seconds * SAMPLE_RATE_HZ).round() as usize
    }
}

/// One classified window, in the exact NDJSON field order clients see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerEvent {
    /// Grid timestamp of the window's final sample.
    pub t_ms: f64,
    pub label: i32,
    /// Softmax probabilities, one per class.
    pub probs: Vec<f64>,
    /// Receipt of the frame completing the window to emission.
    pub latency_ms: f64,
    /// Whether any sample in the window was held or backfilled.
    pub stale: bool,
}

impl TriggerEvent {
    /// Probability of the winning class.
    pub fn probability(&self) -> f64 {
        self.probs.get(self.label as usize).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ServerStats {
    pub frames_in: u64,
    pub parse_errors: u64,
    pub clients_seen: u64,
    pub windows_built: u64,
    /// Windows shed because classification fell behind.
    pub window_drops: u64,
    pub classify_errors: u64,
    pub events_emitted: u64,
    pub osc_sent: u64,
    pub assemble: AssembleStats,
}

#[derive(Default)]
struct Counters {
    frames_in: AtomicU64,
    parse_errors: AtomicU64,
    clients_seen: AtomicU64,
    windows_built: AtomicU64,
    classify_errors: AtomicU64,
    events_emitted: AtomicU64,
    osc_sent: AtomicU64,
}

struct QueuedWindow {
    window: MotionWindow,
    end_ms: f64,
    stale: bool,
    /// Receipt time of the frame whose arrival completed the window.
    ready_at: Instant,
}

struct PendingEvent {
    end_ms: f64,
    label: i32,
    probs: Vec<f64>,
    stale: bool,
    ready_at: Instant,
    infer_ms: f64,
}

/// Cuts the assembled row stream into windows at hop boundaries, keeping
/// only rows that can still appear in a future window.
struct WindowCutter {
    window_len: usize,
    hop: usize,
    rows: VecDeque<(GridRow, Instant)>,
    /// Absolute stream index of `rows[0]`.
    base: u64,
    /// Absolute index where the next window starts.
    next_start: u64,
}

impl WindowCutter {
    fn new(window_len: usize, hop: usize) -> Self {
        WindowCutter {
            window_len,
            hop,
            rows: VecDeque::new(),
            base: 0,
            next_start: 0,
        }
    }

    fn prune(&mut self) {
        while self.base < self.next_start && !self.rows.is_empty() {
            self.rows.pop_front();
            self.base += 1;
        }
    }

    fn accept(&mut self, row: GridRow, at: Instant) -> Vec<QueuedWindow> {
        self.rows.push_back((row, at));
        self.prune();
        let mut out = Vec::new();
        while self.base + self.rows.len() as u64 >= self.next_start + self.window_len as u64 {
            let s = (self.next_start - self.base) as usize;
            let mut data = Array2::zeros((NUM_CHANNELS, self.window_len));
            let mut stale = false;
            for (k, (row, _)) in self.rows.iter().skip(s).take(self.window_len).enumerate() {
                for c in 0..NUM_CHANNELS {
                    data[[c, k]] = row.values[c];
                }
                stale |= row.stale;
            }
            let t_start = self.rows[s].0.t_ms;
            let (last_row, last_at) = &self.rows[s + self.window_len - 1];
            let end_ms = last_row.t_ms;
            let ready_at = *last_at;
            if let Ok(window) = MotionWindow::new(data, t_start) {
                out.push(QueuedWindow {
                    window,
                    end_ms,
                    stale,
                    ready_at,
                });
            }
            self.next_start += self.hop as u64;
            self.prune();
        }
        out
    }
}

pub struct ServerHandle {
    local_addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
    counters: Arc<Counters>,
    ring: Arc<Ring<QueuedWindow>>,
    assemble_final: Arc<Mutex<AssembleStats>>,
    events_rx: Receiver<TriggerEvent>,
}

impl ServerHandle {
    /// The bound ingest address (useful when configured with port 0).
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// An in-process tap of the emitted trigger stream. Events are
    /// distributed among receivers, so keep a single one.
    pub fn events(&self) -> Receiver<TriggerEvent> {
        self.events_rx.clone()
    }

    /// A live snapshot; assembly counters settle only after [`stop`](Self::stop).
    pub fn stats(&self) -> ServerStats {
        let c = &self.counters;
        ServerStats {
            frames_in: c.frames_in.load(Ordering::Relaxed),
            parse_errors: c.parse_errors.load(Ordering::Relaxed),
            clients_seen: c.clients_seen.load(Ordering::Relaxed),
            windows_built: c.windows_built.load(Ordering::Relaxed),
            window_drops: self.ring.drops(),
            classify_errors: c.classify_errors.load(Ordering::Relaxed),
            events_emitted: c.events_emitted.load(Ordering::Relaxed),
            osc_sent: c.osc_sent.load(Ordering::Relaxed),
            assemble: *self.assemble_final.lock().unwrap(),
        }
    }

    /// Shut down: stop accepting, flush pending rows through the window
    /// cutter, classify and emit whatever completes, then join all workers.
    /// A partially assembled trailing window is discarded.
    pub fn stop(mut self) -> Result<ServerStats> {
        self.stop.store(true, Ordering::Relaxed);
        for handle in self.threads.drain(..) {
            handle
                .join()
                .map_err(|_| Error::Runtime("server worker panicked".into()))?;
        }
        Ok(self.stats())
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        // If the handle is dropped without stop(), still ask workers to
        // wind down rather than leaving them to spin.
        self.stop.store(true, Ordering::Relaxed);
    }
}

/// Start the server; returns once the ingest socket is bound and all worker
/// threads are running.
pub fn spawn(model: RidgeModel, cfg: ServerConfig) -> Result<ServerHandle> {
    cfg.validate()?;
    let window_len = cfg.window_len();
    let hop = cfg.hop_len();
    if model.rocket.num_channels != NUM_CHANNELS {
        return Err(Error::ShapeMismatch(format!(
            "model expects {} channels, stream has {}",
            model.rocket.num_channels, NUM_CHANNELS
        )));
    }
    if model.rocket.input_len != window_len {
        return Err(Error::InvalidConfig(format!(
            "model was trained on {}-sample windows but window_seconds {} gives {}",
            model.rocket.input_len, cfg.window_seconds, window_len
        )));
    }

    let listener = TcpListener::bind(cfg.listen)?;
    listener.set_nonblocking(true)?;
    let local_addr = listener.local_addr()?;

    let udp = match cfg.osc_target {
        Some(target) => {
            let bind: SocketAddr = if target.is_ipv6() {
                "[::]:0".parse().unwrap()
            } else {
                "0.0.0.0:0".parse().unwrap()
            };
            Some((UdpSocket::bind(bind)?, target))
        }
        None => None,
    };
    let log_writer = match &cfg.latency_log {
        Some(path) => Some(std::io::BufWriter::new(std::fs::File::create(path)?)),
        None => None,
    };

    let stop = Arc::new(AtomicBool::new(false));
    let counters = Arc::new(Counters::default());
    let writers: Arc<Mutex<Vec<TcpStream>>> = Arc::new(Mutex::new(Vec::new()));
    let ring: Arc<Ring<QueuedWindow>> = Arc::new(Ring::new(cfg.queue_capacity));
    let assemble_final = Arc::new(Mutex::new(AssembleStats::default()));

    let (frame_tx, frame_rx) = bounded::<(SensorFrame, Instant)>(4096);
    let (pending_tx, pending_rx) = bounded::<PendingEvent>(16);
    let (tap_tx, tap_rx) = unbounded::<TriggerEvent>();

    let mut threads = Vec::with_capacity(4);

    {
        let stop = Arc::clone(&stop);
        let counters = Arc::clone(&counters);
        let writers = Arc::clone(&writers);
        threads.push(
            std::thread::Builder::new()
                .name("mr-accept".into())
                .spawn(move || accept_loop(listener, frame_tx, stop, counters, writers))
                .map_err(|e| Error::Runtime(e.to_string()))?,
        );
    }
    {
        let counters = Arc::clone(&counters);
        let ring = Arc::clone(&ring);
        let assemble_final = Arc::clone(&assemble_final);
        let asm_cfg = AssembleConfig {
            gap_tolerance_ms: cfg.gap_tolerance_ms,
            reorder_tolerance_ms: cfg.reorder_tolerance_ms,
            t0_ms: None,
        };
        threads.push(
            std::thread::Builder::new()
                .name("mr-assemble".into())
                .spawn(move || {
                    assemble_loop(frame_rx, asm_cfg, window_len, hop, ring, counters, assemble_final)
                })
                .map_err(|e| Error::Runtime(e.to_string()))?,
        );
    }
    {
        let counters = Arc::clone(&counters);
        let ring = Arc::clone(&ring);
        threads.push(
            std::thread::Builder::new()
                .name("mr-classify".into())
                .spawn(move || classify_loop(ring, model, pending_tx, counters))
                .map_err(|e| Error::Runtime(e.to_string()))?,
        );
    }
    {
        let counters = Arc::clone(&counters);
        let writers = Arc::clone(&writers);
        let osc_address = cfg.osc_address.clone();
        let probability_floor = cfg.probability_floor;
        threads.push(
            std::thread::Builder::new()
                .name("mr-emit".into())
                .spawn(move || {
                    emit_loop(
                        pending_rx,
                        writers,
                        udp,
                        osc_address,
                        probability_floor,
                        log_writer,
                        tap_tx,
                        counters,
                    )
                })
                .map_err(|e| Error::Runtime(e.to_string()))?,
        );
    }

    Ok(ServerHandle {
        local_addr,
        stop,
        threads,
        counters,
        ring,
        assemble_final,
        events_rx: tap_rx,
    })
}

fn accept_loop(
    listener: TcpListener,
    frame_tx: Sender<(SensorFrame, Instant)>,
    stop: Arc<AtomicBool>,
    counters: Arc<Counters>,
    writers: Arc<Mutex<Vec<TcpStream>>>,
) {
    let mut readers: Vec<JoinHandle<()>> = Vec::new();
    while !stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, _)) => {
                counters.clients_seen.fetch_add(1, Ordering::Relaxed);
                stream.set_nodelay(true).ok();
                if let Ok(writer) = stream.try_clone() {
                    writers.lock().unwrap().push(writer);
                }
                let tx = frame_tx.clone();
                let stop = Arc::clone(&stop);
                let counters = Arc::clone(&counters);
                if let Ok(handle) = std::thread::Builder::new()
                    .name("mr-reader".into())
                    .spawn(move || reader_loop(stream, tx, stop, counters))
                {
                    readers.push(handle);
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(_) => std::thread::sleep(Duration::from_millis(10)),
        }
    }
    // Release our frame sender first; the assembler only sees disconnect
    // after every reader is gone too.
    drop(frame_tx);
    for handle in readers {
        handle.join().ok();
    }
}

fn reader_loop(
    stream: TcpStream,
    tx: Sender<(SensorFrame, Instant)>,
    stop: Arc<AtomicBool>,
    counters: Arc<Counters>,
) {
    stream.set_read_timeout(Some(Duration::from_millis(50))).ok();
    let mut reader = std::io::BufReader::new(stream);
    // Bytes of a line still in flight; timeouts must not discard them.
    let mut buf: Vec<u8> = Vec::new();
    loop {
        if stop.load(Ordering::Relaxed) {
            return;
        }
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => break,
            Ok(_) => {
                if buf.ends_with(b"\n") {
                    handle_line(&buf, &tx, &counters);
                    buf.clear();
                }
            }
            Err(e)
                if matches!(
                    e.kind(),
                    ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::Interrupted
                ) =>
            {
                continue
            }
            Err(_) => return,
        }
    }
    if !buf.is_empty() {
        handle_line(&buf, &tx, &counters);
    }
}

fn handle_line(raw: &[u8], tx: &Sender<(SensorFrame, Instant)>, counters: &Counters) {
    let Ok(text) = std::str::from_utf8(raw) else {
        counters.parse_errors.fetch_add(1, Ordering::Relaxed);
        return;
    };
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return;
    }
    match serde_json::from_str::<SensorFrame>(trimmed) {
        Ok(frame) => {
            tx.send((frame, Instant::now())).ok();
        }
        Err(_) => {
            counters.parse_errors.fetch_add(1, Ordering::Relaxed);
        }
    }
}

fn assemble_loop(
    frame_rx: Receiver<(SensorFrame, Instant)>,
    asm_cfg: AssembleConfig,
    window_len: usize,
    hop: usize,
    ring: Arc<Ring<QueuedWindow>>,
    counters: Arc<Counters>,
    assemble_final: Arc<Mutex<AssembleStats>>,
) {
    let mut asm = StreamAssembler::with_sample_rate(asm_cfg, SAMPLE_RATE_HZ);
    let mut cutter = WindowCutter::new(window_len, hop);
    let enqueue = |q: QueuedWindow, counters: &Counters, ring: &Ring<QueuedWindow>| {
        counters.windows_built.fetch_add(1, Ordering::Relaxed);
        ring.push(q);
    };
    loop {
        match frame_rx.recv_timeout(Duration::from_millis(100)) {
            Ok((frame, at)) => {
                counters.frames_in.fetch_add(1, Ordering::Relaxed);
                for row in asm.push(&frame) {
                    for q in cutter.accept(row, at) {
                        enqueue(q, &counters, &ring);
                    }
                }
            }
            Err(RecvTimeoutError::Timeout) => continue,
            Err(RecvTimeoutError::Disconnected) => break,
        }
    }
    let now = Instant::now();
    for row in asm.finish() {
        for q in cutter.accept(row, now) {
            enqueue(q, &counters, &ring);
        }
    }
    *assemble_final.lock().unwrap() = asm.stats();
    ring.close();
}

fn classify_loop(
    ring: Arc<Ring<QueuedWindow>>,
    model: RidgeModel,
    pending_tx: Sender<PendingEvent>,
    counters: Arc<Counters>,
) {
    while let Some(q) = ring.pop() {
        match classify(&model, &q.window) {
            Ok(pred) => {
                let ev = PendingEvent {
                    end_ms: q.end_ms,
                    label: pred.label,
                    probs: pred.probs,
                    stale: q.stale,
                    ready_at: q.ready_at,
                    infer_ms: pred.infer_micros as f64 / 1000.0,
                };
                if pending_tx.send(ev).is_err() {
                    break;
                }
            }
            Err(_) => {
                counters.classify_errors.fetch_add(1, Ordering::Relaxed);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn emit_loop(
    pending_rx: Receiver<PendingEvent>,
    writers: Arc<Mutex<Vec<TcpStream>>>,
    udp: Option<(UdpSocket, SocketAddr)>,
    osc_address: String,
    probability_floor: f64,
    mut log_writer: Option<std::io::BufWriter<std::fs::File>>,
    tap_tx: Sender<TriggerEvent>,
    counters: Arc<Counters>,
) {
    for pending in pending_rx.iter() {
        let latency_ms = pending.ready_at.elapsed().as_secs_f64() * 1000.0;
        let event = TriggerEvent {
            t_ms: pending.end_ms,
            label: pending.label,
            probs: pending.probs,
            latency_ms,
            stale: pending.stale,
        };
        if let Ok(mut line) = serde_json::to_string(&event) {
            line.push('\n');
            let mut ws = writers.lock().unwrap();
            ws.retain_mut(|w| w.write_all(line.as_bytes()).is_ok());
        }
        counters.events_emitted.fetch_add(1, Ordering::Relaxed);
        if let Some((sock, target)) = &udp {
            if event.probability() >= probability_floor {
                if let Ok(msg) =
                    osc::encode_trigger(&osc_address, event.label, event.probability() as f32)
                {
                    // Datagrams are sent whole; shutdown can never leave a
                    // partial message on the wire.
                    if sock.send_to(&msg, target).is_ok() {
                        counters.osc_sent.fetch_add(1, Ordering::Relaxed);
                    }
                }
            }
        }
        if let Some(w) = log_writer.as_mut() {
            latency::append_record(
                w,
                &LatencyRecord {
                    t_ms: event.t_ms,
                    latency_ms,
                    infer_ms: pending.infer_ms,
                },
            )
            .ok();
        }
        tap_tx.send(event).ok();
    }
    if let Some(mut w) = log_writer {
        w.flush().ok();
    }
}
