//! Packet-record parsing, 10-second segmentation and per-segment features.
//!
//! The canonical trace format is a UTF-8 CSV with header
//! `ts,src_ip,src_port,dst_ip,dst_port,proto,len`; gzip input is accepted
//! when the filename ends in `.gz`. Each segment is reduced to the
//! inter-arrival times and sizes of its first [`FEATURE_STEPS`] packets.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Matrix;

/// Segment length in seconds.
pub const SEGMENT_SECONDS: f64 = 10.0;
/// Time steps per feature matrix: enough packets to cover the first couple
/// of seconds of a flow at typical rates.
pub const FEATURE_STEPS: usize = 16;

pub const TRACE_HEADER: &str = "ts,src_ip,src_port,dst_ip,dst_port,proto,len";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: malformed record ({reason})")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: timestamp is not finite")]
    NonFiniteTimestamp { line: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Proto {
    Tcp,
    Udp,
    Other,
}

impl Proto {
    pub fn as_str(&self) -> &'static str {
        match self {
            Proto::Tcp => "TCP",
            Proto::Udp => "UDP",
            Proto::Other => "OTHER",
        }
    }
}

/// One observed packet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub ts: f64,
    pub src_ip: String,
    pub src_port: u16,
    pub dst_ip: String,
    pub dst_port: u16,
    pub proto: Proto,
    pub len: u32,
}

/// A 10-second window of packets with a unique identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub segment_id: String,
    pub window_start: f64,
    pub packets: Vec<PacketRecord>,
}

/// Per-segment input: inter-arrival row `t` and size row `l`, both
/// [`FEATURE_STEPS`] long, zero-padded past the packet count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub t: Vec<f64>,
    pub l: Vec<f64>,
}

impl FeatureMatrix {
    pub fn zeros(n_steps: usize) -> Self {
        FeatureMatrix { t: vec![0.0; n_steps], l: vec![0.0; n_steps] }
    }

    pub fn n_steps(&self) -> usize {
        self.t.len()
    }

    /// View as an (n_steps x 2) matrix, one row per time step.
    pub fn to_matrix(&self) -> Matrix {
        let mut data = Vec::with_capacity(self.t.len() * 2);
        for (t, l) in self.t.iter().zip(&self.l) {
            data.push(*t);
            data.push(*l);
        }
        Matrix::from_vec(self.t.len(), 2, data)
    }
}

/// Per-row min/max fitted on training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub t_min: f64,
    pub t_max: f64,
    pub l_min: f64,
    pub l_max: f64,
}

fn parse_line(line: &str, lineno: usize) -> Result<PacketRecord, IngestError> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 7 {
        return Err(IngestError::MalformedLine {
            line: lineno,
            reason: format!("expected 7 fields, got {}", fields.len()),
        });
    }
    let bad = |what: &str| IngestError::MalformedLine { line: lineno, reason: what.to_string() };
    let ts: f64 = fields[0].trim().parse().map_err(|_| bad("bad ts"))?;
    if !ts.is_finite() {
        return Err(IngestError::NonFiniteTimestamp { line: lineno });
    }
    if ts < 0.0 {
        return Err(bad("negative ts"));
    }
    let src_port: u16 = fields[2].trim().parse().map_err(|_| bad("bad src_port"))?;
    let dst_port: u16 = fields[4].trim().parse().map_err(|_| bad("bad dst_port"))?;
    let proto = match fields[5].trim() {
        "TCP" => Proto::Tcp,
        "UDP" => Proto::Udp,
        "OTHER" => Proto::Other,
        other => return Err(bad(&format!("unknown proto {other:?}"))),
    };
    let len: u32 = fields[6].trim().parse().map_err(|_| bad("bad len"))?;
    if len > 65535 {
        return Err(bad("len exceeds 65535"));
    }
    Ok(PacketRecord {
        ts,
        src_ip: fields[1].trim().to_string(),
        src_port,
        dst_ip: fields[3].trim().to_string(),
        dst_port,
        proto,
        len,
    })
}

/// Parse the canonical packet CSV from any reader. Records come back in
/// file order; the first bad line aborts with its line number.
pub fn parse_packets<R: Read>(reader: R) -> Result<Vec<PacketRecord>, IngestError> {
    let buf = BufReader::new(reader);
    let mut records = Vec::new();
    let mut lines = buf.lines();
    let header = match lines.next() {
        Some(h) => h?,
        None => {
            return Err(IngestError::MalformedLine { line: 1, reason: "missing header".into() })
        }
    };
    if header.trim_end() != TRACE_HEADER {
        return Err(IngestError::MalformedLine {
            line: 1,
            reason: format!("bad header {header:?}"),
        });
    }
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        records.push(parse_line(&line, idx + 2)?);
    }
    Ok(records)
}

/// Parse a trace file; `.gz` suffix selects gzip decompression.
pub fn parse_packets_file(path: &Path) -> Result<Vec<PacketRecord>, IngestError> {
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        parse_packets(GzDecoder::new(file))
    } else {
        parse_packets(file)
    }
}

/// Cut a packet stream into fixed-width wall-clock windows. The anchor is
/// the first timestamp rounded down to a window multiple, so boundaries sit
/// at 0, 10, 20, ... seconds. Empty interior windows are emitted as empty
/// segments and every packet lands in exactly one segment.
pub fn segment_stream(packets: &[PacketRecord], window: f64) -> Vec<Segment> {
    assert!(window > 0.0, "window must be positive");
    if packets.is_empty() {
        return Vec::new();
    }
    let mut sorted: Vec<PacketRecord>;
    let packets = if packets.windows(2).all(|w| w[0].ts <= w[1].ts) {
        packets
    } else {
        sorted = packets.to_vec();
        sorted.sort_by(|a, b| a.ts.total_cmp(&b.ts));
        &sorted
    };

    let anchor = (packets[0].ts / window).floor() * window;
    let last = packets[packets.len() - 1].ts;
    let n_windows = ((last - anchor) / window).floor() as usize + 1;
    let mut segments: Vec<Segment> = (0..n_windows)
        .map(|k| Segment {
            segment_id: format!("seg-{k:05}"),
            window_start: anchor + window * k as f64,
            packets: Vec::new(),
        })
        .collect();
    for p in packets {
        let mut k = ((p.ts - anchor) / window).floor() as usize;
        // Float division can land exactly on the right edge; fold back.
        if k >= n_windows {
            k = n_windows - 1;
        }
        if p.ts < segments[k].window_start {
            k -= 1;
        } else if k + 1 < n_windows && p.ts >= segments[k + 1].window_start {
            k += 1;
        }
        segments[k].packets.push(p.clone());
    }
    segments
}

/// Inter-arrival and size rows for the first `n_steps` packets of a segment.
/// The first packet has no predecessor inside the segment, so t[0] = 0.
pub fn extract_features(seg: &Segment, n_steps: usize) -> FeatureMatrix {
    let mut fm = FeatureMatrix::zeros(n_steps);
    let used = seg.packets.len().min(n_steps);
    for j in 0..used {
        fm.t[j] = if j == 0 { 0.0 } else { seg.packets[j].ts - seg.packets[j - 1].ts };
        fm.l[j] = f64::from(seg.packets[j].len);
    }
    fm
}

/// Global per-row min/max over a training set.
pub fn fit_normalization(train: &[FeatureMatrix]) -> Result<NormalizationStats, IngestError> {
    if train.is_empty() {
        return Err(IngestError::EmptyTrainingSet);
    }
    let mut s = NormalizationStats {
        t_min: f64::INFINITY,
        t_max: f64::NEG_INFINITY,
        l_min: f64::INFINITY,
        l_max: f64::NEG_INFINITY,
    };
    for fm in train {
        for &v in &fm.t {
            s.t_min = s.t_min.min(v);
            s.t_max = s.t_max.max(v);
        }
        for &v in &fm.l {
            s.l_min = s.l_min.min(v);
            s.l_max = s.l_max.max(v);
        }
    }
    Ok(s)
}

fn scale(v: f64, min: f64, max: f64) -> f64 {
    if max == min {
        return 0.0;
    }
    ((v - min) / (max - min)).clamp(0.0, 1.0)
}

/// Min-max map into [0,1]; out-of-range test values clamp rather than fail
/// because attack traffic legitimately exceeds training ranges.
pub fn apply_normalization(x: &FeatureMatrix, s: &NormalizationStats) -> FeatureMatrix {
    FeatureMatrix {
        t: x.t.iter().map(|&v| scale(v, s.t_min, s.t_max)).collect(),
        l: x.l.iter().map(|&v| scale(v, s.l_min, s.l_max)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkt(ts: f64, len: u32) -> PacketRecord {
        PacketRecord {
            ts,
            src_ip: "10.0.0.2".into(),
            src_port: 5501,
            dst_ip: "10.0.0.1".into(),
            dst_port: 80,
            proto: Proto::Tcp,
            len,
        }
    }

    #[test]
    fn parse_single_record() {
        let csv = format!("{TRACE_HEADER}\n0.000,10.0.0.2,5501,10.0.0.1,80,TCP,60\n");
        let recs = parse_packets(csv.as_bytes()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].ts, 0.0);
        assert_eq!(recs[0].len, 60);
        assert_eq!(recs[0].proto, Proto::Tcp);
    }

    #[test]
    fn parse_empty_body() {
        let csv = format!("{TRACE_HEADER}\n");
        assert!(parse_packets(csv.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn parse_malformed_line_reports_line_number() {
        let csv = format!("{TRACE_HEADER}\nabc,1,2\n");
        match parse_packets(csv.as_bytes()) {
            Err(IngestError::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected MalformedLine, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_non_finite_timestamp() {
        let csv = format!("{TRACE_HEADER}\nNaN,10.0.0.2,5501,10.0.0.1,80,TCP,60\n");
        assert!(matches!(
            parse_packets(csv.as_bytes()),
            Err(IngestError::NonFiniteTimestamp { line: 2 })
        ));
    }

    #[test]
    fn parse_gzip_roundtrip() {
        use flate2::write::GzEncoder;
        use flate2::Compression;
        use std::io::Write;
        let csv = format!("{TRACE_HEADER}\n1.5,10.0.0.2,5501,10.0.0.1,80,UDP,120\n");
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(csv.as_bytes()).unwrap();
        let gz = enc.finish().unwrap();
        let dir = std::env::temp_dir().join("tfd-ingest-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("trace.csv.gz");
        std::fs::write(&path, gz).unwrap();
        let recs = parse_packets_file(&path).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].proto, Proto::Udp);
    }

    #[test]
    fn segment_boundary_arithmetic() {
        let packets = vec![pkt(0.5, 60), pkt(9.9, 60), pkt(10.1, 60)];
        let segs = segment_stream(&packets, 10.0);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].packets.len(), 2);
        assert_eq!(segs[1].packets.len(), 1);
    }

    #[test]
    fn segment_unsorted_input_is_sorted_internally() {
        let packets = vec![pkt(10.1, 60), pkt(0.5, 60), pkt(9.9, 60)];
        let segs = segment_stream(&packets, 10.0);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].packets.len(), 2);
        assert!(segs[0].packets[0].ts <= segs[0].packets[1].ts);
    }

    #[test]
    fn two_spread_packets_make_three_segments() {
        let packets = vec![pkt(0.0, 60), pkt(25.0, 60)];
        let segs = segment_stream(&packets, 10.0);
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[0].packets.len(), 1);
        assert!(segs[1].packets.is_empty());
        assert_eq!(segs[2].packets.len(), 1);
    }

    #[test]
    fn continuous_hour_traffic_segments() {
        // 360 minutes of one packet per second starting at t = 0.
        let packets: Vec<PacketRecord> = (0..21600).map(|s| pkt(s as f64, 100)).collect();
        let segs = segment_stream(&packets, 10.0);
        assert_eq!(segs.len(), 2160);
        assert!(segs.iter().all(|s| s.packets.len() == 10));
    }

    #[test]
    fn segment_ids_are_unique() {
        let packets: Vec<PacketRecord> = (0..100).map(|s| pkt(s as f64, 100)).collect();
        let segs = segment_stream(&packets, 10.0);
        let mut ids: Vec<&str> = segs.iter().map(|s| s.segment_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), segs.len());
    }

    #[test]
    fn features_hand_example() {
        let seg = Segment {
            segment_id: "s".into(),
            window_start: 0.0,
            packets: vec![pkt(0.0, 60), pkt(0.1, 1500), pkt(0.35, 40)],
        };
        let fm = extract_features(&seg, 16);
        assert_eq!(fm.t[0], 0.0);
        assert!((fm.t[1] - 0.1).abs() < 1e-12);
        assert!((fm.t[2] - 0.25).abs() < 1e-12);
        assert_eq!(&fm.t[3..], &[0.0; 13]);
        assert_eq!(fm.l[0], 60.0);
        assert_eq!(fm.l[1], 1500.0);
        assert_eq!(fm.l[2], 40.0);
        assert_eq!(&fm.l[3..], &[0.0; 13]);
    }

    #[test]
    fn features_empty_segment_all_zero() {
        let seg = Segment { segment_id: "s".into(), window_start: 0.0, packets: vec![] };
        let fm = extract_features(&seg, 16);
        assert_eq!(fm.t, vec![0.0; 16]);
        assert_eq!(fm.l, vec![0.0; 16]);
    }

    #[test]
    fn features_truncate_to_first_16() {
        let packets: Vec<PacketRecord> = (0..20).map(|i| pkt(i as f64 * 0.1, 100 + i)).collect();
        let seg = Segment { segment_id: "s".into(), window_start: 0.0, packets };
        let fm = extract_features(&seg, 16);
        assert_eq!(fm.n_steps(), 16);
        assert_eq!(fm.l[15], 115.0);
        assert!(fm.t.iter().skip(1).all(|&v| (v - 0.1).abs() < 1e-12));
    }

    #[test]
    fn interarrival_sum_telescopes() {
        let packets: Vec<PacketRecord> =
            [0.0, 0.3, 0.9, 2.0, 2.2].iter().map(|&t| pkt(t, 10)).collect();
        let seg = Segment { segment_id: "s".into(), window_start: 0.0, packets };
        let fm = extract_features(&seg, 16);
        let sum: f64 = fm.t.iter().sum();
        assert!((sum - 2.2).abs() < 1e-12);
    }

    #[test]
    fn normalization_single_matrix() {
        let fm = FeatureMatrix { t: vec![0.0, 2.0], l: vec![0.0, 1500.0] };
        let s = fit_normalization(&[fm]).unwrap();
        assert_eq!((s.t_min, s.t_max, s.l_min, s.l_max), (0.0, 2.0, 0.0, 1500.0));
    }

    #[test]
    fn normalization_degenerate_all_zero() {
        let fm = FeatureMatrix::zeros(4);
        let s = fit_normalization(&[fm.clone()]).unwrap();
        assert_eq!((s.t_min, s.t_max, s.l_min, s.l_max), (0.0, 0.0, 0.0, 0.0));
        let out = apply_normalization(&fm, &s);
        assert!(out.t.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalization_two_matrices_elementwise() {
        let a = FeatureMatrix { t: vec![0.5, 2.0], l: vec![100.0, 400.0] };
        let b = FeatureMatrix { t: vec![0.1, 1.0], l: vec![600.0, 40.0] };
        let s = fit_normalization(&[a, b]).unwrap();
        assert_eq!((s.t_min, s.t_max, s.l_min, s.l_max), (0.1, 2.0, 40.0, 600.0));
    }

    #[test]
    fn normalization_empty_training_set() {
        assert!(matches!(fit_normalization(&[]), Err(IngestError::EmptyTrainingSet)));
    }

    #[test]
    fn apply_normalization_endpoints_and_clamp() {
        let s = NormalizationStats { t_min: 0.0, t_max: 2.0, l_min: 100.0, l_max: 200.0 };
        let x = FeatureMatrix { t: vec![0.0, 2.0, 0.1, 5.0], l: vec![100.0, 200.0, 150.0, 999.0] };
        let out = apply_normalization(&x, &s);
        assert_eq!(out.t[0], 0.0);
        assert_eq!(out.t[1], 1.0);
        assert!((out.t[2] - 0.05).abs() < 1e-12);
        assert_eq!(out.t[3], 1.0); // clamped
        assert_eq!(out.l[3], 1.0); // clamped
    }

    #[test]
    fn apply_normalization_idempotent_after_refit() {
        let x = FeatureMatrix { t: vec![0.0, 1.0, 0.25], l: vec![0.0, 1.0, 0.5] };
        let s = fit_normalization(std::slice::from_ref(&x)).unwrap();
        let y = apply_normalization(&x, &s);
        assert_eq!(x, y);
    }
}
