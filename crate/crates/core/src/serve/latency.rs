//! Latency log records and their offline summary.
//!
//! The server appends one NDJSON record per emitted trigger. `t_ms` is the
//! data-time window end, `latency_ms` spans receipt of the frame that
//! completed the window to the moment the trigger left the process, and
//! `infer_ms` is the feature-transform-plus-classify portion alone.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyRecord {
    pub t_ms: f64,
    pub latency_ms: f64,
    pub infer_ms: f64,
}

pub fn append_record<W: Write>(w: &mut W, rec: &LatencyRecord) -> Result<()> {
    serde_json::to_writer(&mut *w, rec).map_err(|e| Error::Runtime(e.to_string()))?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Nearest-rank percentile over an ascending slice: the smallest value with
/// at least `p` percent of the data at or below it.
pub fn percentile_nearest_rank(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    assert!((0.0..=100.0).contains(&p));
    if p == 0.0 {
        return sorted[0];
    }
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.min(sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: usize,
    pub emit_p50_ms: f64,
    pub emit_p95_ms: f64,
    pub emit_max_ms: f64,
    pub infer_p50_ms: f64,
    pub infer_p95_ms: f64,
}

pub fn summarize(records: &[LatencyRecord]) -> Result<LatencySummary> {
    if records.is_empty() {
        return Err(Error::InvalidData("latency log holds no records".into()));
    }
    let mut emit: Vec<f64> = records.iter().map(|r| r.latency_ms).collect();
    let mut infer: Vec<f64> = records.iter().map(|r| r.infer_ms).collect();
    emit.sort_by(f64::total_cmp);
    infer.sort_by(f64::total_cmp);
    Ok(LatencySummary {
        count: records.len(),
        emit_p50_ms: percentile_nearest_rank(&emit, 50.0),
        emit_p95_ms: percentile_nearest_rank(&emit, 95.0),
        emit_max_ms: *emit.last().unwrap(),
        infer_p50_ms: percentile_nearest_rank(&infer, 50.0),
        infer_p95_ms: percentile_nearest_rank(&infer, 95.0),
    })
}

pub fn read_log(path: &Path) -> Result<Vec<LatencyRecord>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LatencyRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Summarize a latency log written by a previous serve run.
pub fn measure_latency(path: &Path) -> Result<LatencySummary> {
    summarize(&read_log(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_matches_hand_values() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0];
        assert_eq!(percentile_nearest_rank(&xs, 50.0), 5.0);
        assert_eq!(percentile_nearest_rank(&xs, 95.0), 10.0);
        assert_eq!(percentile_nearest_rank(&xs, 100.0), 10.0);
        assert_eq!(percentile_nearest_rank(&xs, 0.0), 1.0);
        // 5 values: p50 -> ceil(2.5) = rank 3.
        assert_eq!(percentile_nearest_rank(&[1.0, 2.0, 3.0, 4.0, 5.0], 50.0), 3.0);
        assert_eq!(percentile_nearest_rank(&[7.0], 95.0), 7.0);
    }

    #[test]
    fn summary_roundtrips_through_a_log_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("latency.ndjson");
        let mut f = std::fs::File::create(&path).unwrap();
        for i in 0..20 {
            append_record(
                &mut f,
                &LatencyRecord {
                    t_ms: 2000.0 * (i + 1) as f64,
                    latency_ms: 1.0 + i as f64,
                    infer_ms: 0.5 + 0.1 * i as f64,
                },
            )
            .unwrap();
        }
        drop(f);
        let summary = measure_latency(&path).unwrap();
        assert_eq!(summary.count, 20);
        assert_eq!(summary.emit_p50_ms, 10.0);
        assert_eq!(summary.emit_p95_ms, 19.0);
        assert_eq!(summary.emit_max_ms, 20.0);
        assert!((summary.infer_p50_ms - 1.4).abs() < 1e-12);
        assert!((summary.infer_p95_ms - 2.3).abs() < 1e-12);
    }

    #[test]
    fn empty_log_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.ndjson");
        std::fs::write(&path, "").unwrap();
        assert!(measure_latency(&path).is_err());
    }

    #[test]
    fn malformed_line_reports_its_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ndjson");
        std::fs::write(
            &path,
            "{\"t_ms\":1.0,\"latency_ms\":2.0,\"infer_ms\":0.1}\nnot json\n",
        )
        .unwrap();
        match measure_latency(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
