//! Synthetic traffic workbench: seeded normal and pulse-attack generators,
//! sleep stripping, dataset composition and the named attack presets.
//!
//! Everything is a pure function of its config and seed, so a fixed seed
//! reproduces every dataset bit for bit.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{segment_stream, PacketRecord, Proto, Segment, SEGMENT_SECONDS};
use crate::seed::stream_rng;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("need {needed} attack segments but only {available} available")]
    InsufficientAttackSegments { needed: usize, available: usize },
    #[error("unknown preset {0:?}")]
    BadPreset(String),
}

/// Endpoint template stamped onto generated packets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrcTemplate {
    pub src_ip: String,
    pub src_port: u16,
    pub dst_ip: String,
    pub dst_port: u16,
    pub proto: Proto,
}

impl SrcTemplate {
    pub fn client(i: usize) -> Self {
        SrcTemplate {
            src_ip: format!("10.0.0.{}", 2 + i),
            src_port: 5000 + i as u16,
            dst_ip: "10.0.0.1".into(),
            dst_port: 80,
            proto: Proto::Tcp,
        }
    }

    pub fn attacker() -> Self {
        SrcTemplate {
            src_ip: "10.0.1.66".into(),
            src_port: 31337,
            dst_ip: "10.0.0.1".into(),
            dst_port: 80,
            proto: Proto::Tcp,
        }
    }

    fn stamp(&self, ts: f64, len: u32) -> PacketRecord {
        PacketRecord {
            ts,
            src_ip: self.src_ip.clone(),
            src_port: self.src_port,
            dst_ip: self.dst_ip.clone(),
            dst_port: self.dst_port,
            proto: self.proto,
            len,
        }
    }
}

/// Poisson client traffic toward one server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalTrafficConfig {
    pub mean_rate: f64,
    pub pkt_len_range: (u32, u32),
    pub n_clients: usize,
}

impl Default for NormalTrafficConfig {
    fn default() -> Self {
        NormalTrafficConfig { mean_rate: 4.5, pkt_len_range: (64, 1500), n_clients: 4 }
    }
}

/// Pulse attack model: bursts of `peak_rate` packets/s lasting `pulse_len`
/// seconds at the start of each one-second slot, on/off phases of
/// `on_duration`/`off_duration` seconds repeating with implied period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseAttackConfig {
    pub peak_rate: f64,
    pub pulse_len: f64,
    /// Slot period in seconds; the per-second slotting fixes this at 1.
    pub period: f64,
    pub on_duration: f64,
    pub off_duration: f64,
    pub attack_pkt_len: u32,
    /// Fractional jitter applied to within-burst offsets (0 = exact spacing).
    pub burst_jitter: f64,
    /// Half-width of uniform packet-size jitter in bytes (0 = fixed size).
    pub pkt_len_jitter: u32,
    pub src: SrcTemplate,
}

impl Default for PulseAttackConfig {
    fn default() -> Self {
        PulseAttackConfig {
            peak_rate: 50.0,
            pulse_len: 0.1,
            period: 1.0,
            on_duration: 50.0,
            off_duration: 100.0,
            attack_pkt_len: 60,
            burst_jitter: 0.0,
            pkt_len_jitter: 0,
            src: SrcTemplate::attacker(),
        }
    }
}

impl PulseAttackConfig {
    fn validate(&self) -> Result<(), SynthError> {
        if self.pulse_len <= 0.0 || self.pulse_len > 1.0 {
            return Err(SynthError::InvalidConfig(format!(
                "pulse_len {} incompatible with per-second slotting (need 0 < L <= 1)",
                self.pulse_len
            )));
        }
        if self.pulse_len > self.period {
            return Err(SynthError::InvalidConfig("pulse_len exceeds period".into()));
        }
        if self.peak_rate <= 0.0 {
            return Err(SynthError::InvalidConfig("peak_rate must be positive".into()));
        }
        if self.on_duration < 0.0 || self.off_duration < 0.0 {
            return Err(SynthError::InvalidConfig("phase durations must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.burst_jitter) {
            return Err(SynthError::InvalidConfig("burst_jitter must be in [0,1)".into()));
        }
        Ok(())
    }
}

/// Slow-read style traffic: sparse single packets with long jittered gaps,
/// for attacks that do not use the pulse shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowReadConfig {
    pub mean_gap: f64,
    pub gap_jitter: f64,
    pub pkt_len: u32,
    pub pkt_len_jitter: u32,
    pub src: SrcTemplate,
}

/// How an attack preset produces traffic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AttackProfile {
    Pulse(PulseAttackConfig),
    SlowRead(SlowReadConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Normal,
    Attack,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Attack => "attack",
        }
    }
}

/// Segments with labels and the composition bookkeeping.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub name: String,
    pub segments: Vec<(Segment, Label)>,
    pub n_normal: usize,
    pub n_attack: usize,
}

impl LabeledDataset {
    pub fn anomaly_ratio(&self) -> f64 {
        let total = self.n_normal + self.n_attack;
        if total == 0 {
            0.0
        } else {
            self.n_attack as f64 / total as f64
        }
    }
}

/// Poisson arrivals at `mean_rate` with i.i.d. uniform packet lengths and
/// round-robin client templates.
pub fn gen_normal(cfg: &NormalTrafficConfig, duration: f64, seed: u64) -> Vec<PacketRecord> {
    assert!(cfg.mean_rate > 0.0, "mean_rate must be positive");
    assert!(cfg.pkt_len_range.0 <= cfg.pkt_len_range.1, "bad pkt_len_range");
    let mut rng = stream_rng(seed, "synth-normal");
    let clients: Vec<SrcTemplate> = (0..cfg.n_clients.max(1)).map(SrcTemplate::client).collect();
    let mut records = Vec::new();
    let mut t = 0.0_f64;
    let mut i = 0usize;
    loop {
        let u: f64 = rng.random::<f64>();
        t += -(1.0 - u).ln() / cfg.mean_rate;
        if t >= duration {
            break;
        }
        let len = if cfg.pkt_len_range.0 == cfg.pkt_len_range.1 {
            cfg.pkt_len_range.0
        } else {
            rng.random_range(cfg.pkt_len_range.0..=cfg.pkt_len_range.1)
        };
        records.push(clients[i % clients.len()].stamp(t, len));
        i += 1;
    }
    records
}

/// Pulse train per the (R, L, T) model: each complete active second carries
/// floor(R*L) packets evenly spaced over its first L seconds; off-phases are
/// silent. Jitter fields perturb offsets/sizes while preserving the count.
pub fn gen_pulse_attack(
    cfg: &PulseAttackConfig,
    duration: f64,
    seed: u64,
) -> Result<Vec<PacketRecord>, SynthError> {
    cfg.validate()?;
    let mut rng = stream_rng(seed, "synth-pulse");
    let per_burst = (cfg.peak_rate * cfg.pulse_len).floor() as usize;
    let cycle = cfg.on_duration + cfg.off_duration;
    let mut records = Vec::new();
    let complete_secs = duration.floor() as u64;
    for s in 0..complete_secs {
        let slot = s as f64;
        let active = if cycle <= 0.0 {
            true
        } else {
            let phase = slot % cycle;
            phase < cfg.on_duration
        };
        if !active {
            continue;
        }
        let spacing = cfg.pulse_len / per_burst.max(1) as f64;
        for j in 0..per_burst {
            let mut off = j as f64 * spacing;
            if cfg.burst_jitter > 0.0 {
                let jit: f64 = rng.random_range(-0.5..0.5) * cfg.burst_jitter * spacing;
                off = (off + jit).clamp(0.0, cfg.pulse_len - spacing * 1e-3);
            }
            let len = if cfg.pkt_len_jitter == 0 {
                cfg.attack_pkt_len
            } else {
                let lo = cfg.attack_pkt_len.saturating_sub(cfg.pkt_len_jitter);
                rng.random_range(lo..=cfg.attack_pkt_len + cfg.pkt_len_jitter)
            };
            records.push(cfg.src.stamp(slot + off, len));
        }
    }
    records.sort_by(|a, b| a.ts.total_cmp(&b.ts));
    Ok(records)
}

/// Sparse long-gap arrivals for slow-read attacks.
pub fn gen_slow_read(cfg: &SlowReadConfig, duration: f64, seed: u64) -> Vec<PacketRecord> {
    let mut rng = stream_rng(seed, "synth-slowread");
    let mut records = Vec::new();
    let mut t = 0.0_f64;
    loop {
        let jit: f64 = rng.random_range(-1.0..1.0) * cfg.gap_jitter;
        t += (cfg.mean_gap + jit).max(0.01);
        if t >= duration {
            break;
        }
        let len = if cfg.pkt_len_jitter == 0 {
            cfg.pkt_len
        } else {
            let lo = cfg.pkt_len.saturating_sub(cfg.pkt_len_jitter);
            rng.random_range(lo..=cfg.pkt_len + cfg.pkt_len_jitter)
        };
        records.push(cfg.src.stamp(t, len));
    }
    records
}

/// Remove off-phase intervals and re-base timestamps so the attack phases
/// are contiguous, mirroring capture post-processing that excludes the
/// dormant period.
pub fn strip_sleep(records: &[PacketRecord], cfg: &PulseAttackConfig) -> Vec<PacketRecord> {
    if cfg.off_duration <= 0.0 {
        return records.to_vec();
    }
    let cycle = cfg.on_duration + cfg.off_duration;
    records
        .iter()
        .filter_map(|p| {
            let k = (p.ts / cycle).floor();
            let phase = p.ts - k * cycle;
            if phase < cfg.on_duration {
                let mut q = p.clone();
                q.ts = k * cfg.on_duration + phase;
                Some(q)
            } else {
                None
            }
        })
        .collect()
}

/// Weave `n_attack` sampled attack segments (without replacement) into the
/// normal sequence at uniformly random positions. Inputs are kept verbatim;
/// labels are attached, never reassigned.
pub fn compose_dataset(
    name: &str,
    normal_segs: &[Segment],
    attack_segs: &[Segment],
    n_attack: usize,
    seed: u64,
) -> Result<LabeledDataset, SynthError> {
    if n_attack > attack_segs.len() {
        return Err(SynthError::InsufficientAttackSegments {
            needed: n_attack,
            available: attack_segs.len(),
        });
    }
    let mut rng = stream_rng(seed, "compose");
    let mut idx: Vec<usize> = (0..attack_segs.len()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(n_attack);

    let mut segments: Vec<(Segment, Label)> =
        normal_segs.iter().map(|s| (s.clone(), Label::Normal)).collect();
    for i in idx {
        let pos = rng.random_range(0..=segments.len());
        segments.insert(pos, (attack_segs[i].clone(), Label::Attack));
    }
    Ok(LabeledDataset {
        name: name.to_string(),
        segments,
        n_normal: normal_segs.len(),
        n_attack,
    })
}

/// Disjoint seeded partition with |train| = round(ratio * n).
pub fn split_train_valid(
    segments: &[Segment],
    ratio: f64,
    seed: u64,
) -> (Vec<Segment>, Vec<Segment>) {
    assert!(ratio > 0.0 && ratio < 1.0, "ratio must be in (0,1)");
    let mut idx: Vec<usize> = (0..segments.len()).collect();
    let mut rng = stream_rng(seed, "split");
    idx.shuffle(&mut rng);
    let n_train = (ratio * segments.len() as f64).round() as usize;
    let train = idx[..n_train].iter().map(|&i| segments[i].clone()).collect();
    let valid = idx[n_train..].iter().map(|&i| segments[i].clone()).collect();
    (train, valid)
}

/// Generate a named attack's traffic, already sleep-stripped and cut into
/// 10-second segments.
pub fn gen_attack_segments(
    profile: &AttackProfile,
    net_duration: f64,
    seed: u64,
) -> Result<Vec<Segment>, SynthError> {
    let records = match profile {
        AttackProfile::Pulse(cfg) => {
            let cycle = cfg.on_duration + cfg.off_duration;
            let raw_duration = if cfg.on_duration > 0.0 && cfg.off_duration > 0.0 {
                net_duration * cycle / cfg.on_duration
            } else {
                net_duration
            };
            let raw = gen_pulse_attack(cfg, raw_duration, seed)?;
            strip_sleep(&raw, cfg)
        }
        AttackProfile::SlowRead(cfg) => gen_slow_read(cfg, net_duration, seed),
    };
    Ok(segment_stream(&records, SEGMENT_SECONDS))
}

/// The six named attack presets, as parameter sets over the pulse/slow-read
/// abstractions rather than protocol emulations.
pub const PRESET_NAMES: [&str; 6] =
    ["pwnloris", "hping", "torshammer", "slowloris", "httpbog", "slowhttptest"];

pub fn attack_preset(name: &str) -> Result<AttackProfile, SynthError> {
    let base = name.strip_suffix("-like").unwrap_or(name);
    let pulse = |peak: f64, len_s: f64, pkt: u32, bj: f64, lj: u32| {
        AttackProfile::Pulse(PulseAttackConfig {
            peak_rate: peak,
            pulse_len: len_s,
            attack_pkt_len: pkt,
            burst_jitter: bj,
            pkt_len_jitter: lj,
            ..PulseAttackConfig::default()
        })
    };
    match base {
        "pwnloris" => Ok(pulse(50.0, 0.1, 220, 0.0, 0)),
        // Fixed-size SYN bursts in the first 0.1 s of each second.
        "hping" => Ok(pulse(50.0, 0.1, 60, 0.0, 0)),
        "torshammer" => Ok(pulse(40.0, 0.15, 560, 0.3, 40)),
        "slowloris" => Ok(pulse(30.0, 0.2, 180, 0.4, 16)),
        "httpbog" => Ok(pulse(25.0, 0.3, 320, 0.5, 64)),
        "slowhttptest" => Ok(AttackProfile::SlowRead(SlowReadConfig {
            mean_gap: 2.5,
            gap_jitter: 1.5,
            pkt_len: 90,
            pkt_len_jitter: 24,
            src: SrcTemplate::attacker(),
        })),
        other => Err(SynthError::BadPreset(other.to_string())),
    }
}
