//! Replay a recorded frame stream into a live server.
//!
//! Pacing uses an absolute schedule anchored at the first frame, so sleep
//! jitter never accumulates: frame k is sent once `(t_k - t_0) / speed` of
//! wall time has elapsed. An infinite speed sends everything back to back.

use crate::signal::SensorFrame;
use crate::{Error, Result};
use std::io::Write;
use std::net::{SocketAddr, TcpStream};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayReport {
    pub frames_sent: usize,
    pub wall_seconds: f64,
}

pub fn replay_frames(frames: &[SensorFrame], target: SocketAddr, speed: f64) -> Result<ReplayReport> {
    if !(speed > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "replay speed must be positive, got {speed}"
        )));
    }
    if frames.is_empty() {
        return Err(Error::InvalidData("nothing to replay: no frames".into()));
    }
    let stream = TcpStream::connect(target)?;
    stream.set_nodelay(true).ok();
    let mut writer = std::io::BufWriter::new(stream);
    let t0 = frames[0].t_ms;
    let start = Instant::now();
    for frame in frames {
        if speed.is_finite() {
            let due = Duration::from_secs_f64(((frame.t_ms - t0) / 1000.0 / speed).max(0.0));
            let elapsed = start.elapsed();
            if due > elapsed {
                std::thread::sleep(due - elapsed);
            }
        }
        serde_json::to_writer(&mut writer, frame).map_err(|e| Error::Runtime(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    let wall = start.elapsed().as_secs_f64();
    // Half-close so the server sees EOF promptly instead of waiting on an
    // idle socket.
    if let Ok(stream) = writer.into_inner() {
        stream.shutdown(std::net::Shutdown::Write).ok();
    }
    Ok(ReplayReport {
        frames_sent: frames.len(),
        wall_seconds: wall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::BufRead;
    use std::net::TcpListener;

    fn little_recording() -> Vec<SensorFrame> {
        (0..16)
            .map(|i| SensorFrame {
                seq: i as u64,
                t_ms: 20.0 * i as f64,
                sensor_id: (i % 4) as u8,
                accel: [0.1 * i as f64, 0.0, 1.0],
                gyro: [0.0, -1.0, 2.0],
            })
            .collect()
    }

    fn collect_lines(listener: TcpListener) -> std::thread::JoinHandle<Vec<String>> {
        std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let reader = std::io::BufReader::new(stream);
            reader.lines().map(|l| l.unwrap()).collect()
        })
    }

    #[test]
    fn frames_arrive_intact_and_in_order() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = collect_lines(listener);
        let frames = little_recording();
        let report = replay_frames(&frames, addr, f64::INFINITY).unwrap();
        assert_eq!(report.frames_sent, 16);
        let lines = server.join().unwrap();
        assert_eq!(lines.len(), 16);
        for (line, frame) in lines.iter().zip(&frames) {
            let parsed: SensorFrame = serde_json::from_str(line).unwrap();
            assert_eq!(&parsed, frame);
        }
    }

    #[test]
    fn finite_speed_stretches_wall_time() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = collect_lines(listener);
        // 300 ms of data at 3x => at least ~100 ms of wall time.
        let frames = little_recording();
        let report = replay_frames(&frames, addr, 3.0).unwrap();
        assert!(
            report.wall_seconds >= 0.095,
            "finished too fast: {}",
            report.wall_seconds
        );
        assert!(report.wall_seconds < 1.0);
        server.join().unwrap();
    }

    #[test]
    fn infinite_speed_does_not_sleep() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = collect_lines(listener);
        let report = replay_frames(&little_recording(), addr, f64::INFINITY).unwrap();
        assert!(report.wall_seconds < 0.25);
        server.join().unwrap();
    }

    #[test]
    fn rejects_bad_speed() {
        let addr: SocketAddr = "127.0.0.1:1".parse().unwrap();
        assert!(replay_frames(&little_recording(), addr, 0.0).is_err());
        assert!(replay_frames(&little_recording(), addr, -2.0).is_err());
        assert!(replay_frames(&little_recording(), addr, f64::NAN).is_err());
    }
}
