//! Training, steady-state threshold calibration, and the dual-threshold
//! detector.
//!
//! Both reconstructors train on normal traffic only. The anomaly threshold
//! for each is the mean validation error over the steady-state epoch window
//! (71..=100 by default), averaged over five re-seeded training runs. A
//! segment is flagged when either reconstruction error reaches its
//! threshold.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::FeatureMatrix;
use crate::nn::{Matrix, NnError};
use crate::reconstructor::{
    init_freq, init_time, FreqReconstructor, ReconstructorModel, TimeReconstructor,
};
use crate::seed::{derive_seed, stream_rng};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("calibration needs {needed} training runs, got {got}")]
    InsufficientRuns { needed: usize, got: usize },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Training hyperparameters. Learning rates follow the recorded training
/// procedure; they are deliberately conservative and can be raised for
/// small synthetic runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_time: f64,
    pub lr_freq: f64,
    pub calib_epoch_lo: usize,
    pub calib_epoch_hi: usize,
    pub calib_runs: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            epochs: 100,
            batch_size: 16,
            lr_time: 0.000_05,
            lr_freq: 0.000_01,
            calib_epoch_lo: 71,
            calib_epoch_hi: 100,
            calib_runs: 5,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |msg: &str| Err(PipelineError::InvalidHyperparams(msg.to_string()));
        if self.epochs == 0 || self.batch_size == 0 || self.calib_runs == 0 {
            return fail("epochs, batch_size and calib_runs must be positive");
        }
        if self.calib_epoch_lo < 1 || self.calib_epoch_lo > self.calib_epoch_hi {
            return fail("calibration window must satisfy 1 <= lo <= hi");
        }
        if self.epochs < self.calib_epoch_hi {
            return fail("epochs must cover the calibration window");
        }
        if self.lr_time <= 0.0 || self.lr_freq <= 0.0 {
            return fail("learning rates must be positive");
        }
        Ok(())
    }
}

/// Calibrated reconstruction-error thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub r_t: f64,
    pub r_f: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Attack,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Triggered {
    Time,
    Freq,
    Both,
    None,
}

/// Per-segment verdict with both reconstruction errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub segment_id: String,
    pub r_t: f64,
    pub r_f: f64,
    pub verdict: Verdict,
    pub triggered: Triggered,
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub train_loss: Vec<f64>,
    pub valid_error: Vec<f64>,
    pub epoch_seconds: Vec<f64>,
}

/// Train one reconstructor for `hp.epochs` full passes with seeded
/// per-epoch shuffles and batch-mean gradient steps; the last partial batch
/// is kept. Validation error is recorded after every epoch.
pub fn train<M: ReconstructorModel>(
    model: &mut M,
    train_set: &[Matrix],
    valid_set: &[Matrix],
    hp: &Hyperparams,
    lr: f64,
) -> Result<TrainingTrace, PipelineError> {
    if train_set.is_empty() {
        return Err(PipelineError::EmptyTrainingSet);
    }
    let mut optimizer = model.new_optimizer(lr);
    let mut trace = TrainingTrace {
        train_loss: Vec::with_capacity(hp.epochs),
        valid_error: Vec::with_capacity(hp.epochs),
        epoch_seconds: Vec::with_capacity(hp.epochs),
    };
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..hp.epochs {
        let started = Instant::now();
        let mut rng = stream_rng(hp.seed, &format!("shuffle-{epoch}"));
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        for batch in order.chunks(hp.batch_size) {
            // Per-sample losses and gradients in a deterministic order;
            // samples are independent so they may be computed in parallel.
            let results: Vec<(f64, Vec<Matrix>)> = batch
                .par_iter()
                .map(|&i| model.loss_and_grads(&train_set[i]))
                .collect::<Result<_, _>>()?;
            let scale = 1.0 / batch.len() as f64;
            let mut iter = results.into_iter();
            let (first_loss, mut acc) = iter.next().expect("non-empty batch");
            let mut batch_loss = first_loss;
            for (loss, grads) in iter {
                batch_loss += loss;
                for (a, g) in acc.iter_mut().zip(&grads) {
                    a.add_assign(g);
                }
            }
            epoch_loss += batch_loss;
            let mut params = model.params_mut();
            for (p, mut g) in params.iter_mut().zip(acc.into_iter()) {
                g.scale(scale);
                p.grad = g;
            }
            optimizer.step(&mut params);
        }
        trace.train_loss.push(epoch_loss / train_set.len() as f64);
        trace.valid_error.push(mean_error(model, valid_set)?);
        trace.epoch_seconds.push(started.elapsed().as_secs_f64());
    }
    Ok(trace)
}

/// Mean reconstruction error of a set under the model's scoring loss.
pub fn mean_error<M: ReconstructorModel>(model: &M, set: &[Matrix]) -> Result<f64, PipelineError> {
    if set.is_empty() {
        return Ok(0.0);
    }
    let scores: Vec<f64> = set.par_iter().map(|x| model.score(x)).collect::<Result<_, _>>()?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Steady-state threshold: per run, the mean validation error over epochs
/// [calib_epoch_lo, calib_epoch_hi] inclusive; the final threshold is the
/// mean across runs.
pub fn calibrate_threshold(
    traces: &[TrainingTrace],
    hp: &Hyperparams,
) -> Result<f64, PipelineError> {
    if traces.len() < hp.calib_runs {
        return Err(PipelineError::InsufficientRuns {
            needed: hp.calib_runs,
            got: traces.len(),
        });
    }
    let lo = hp.calib_epoch_lo - 1; // epochs are 1-indexed in the window spec
    let hi = hp.calib_epoch_hi;
    let mut sum = 0.0;
    for trace in traces {
        let window = &trace.valid_error[lo..hi];
        sum += window.iter().sum::<f64>() / window.len() as f64;
    }
    Ok(sum / traces.len() as f64)
}

/// Trained model pair with calibrated thresholds and calibration traces.
pub struct CalibratedModels {
    pub time: TimeReconstructor,
    pub freq: FreqReconstructor,
    pub thresholds: Thresholds,
    pub time_traces: Vec<TrainingTrace>,
    pub freq_traces: Vec<TrainingTrace>,
}

/// Run the full calibration protocol: `hp.calib_runs` re-seeded trainings
/// per model (seeds `calib-run-i`; init and shuffle vary, the data split is
/// shared), thresholds from the steady-state windows, and the first run's
/// parameters as the working model.
pub fn train_and_calibrate(
    train_set: &[Matrix],
    valid_set: &[Matrix],
    hp: &Hyperparams,
) -> Result<CalibratedModels, PipelineError> {
    if train_set.is_empty() {
        return Err(PipelineError::EmptyTrainingSet);
    }
    let run_seeds: Vec<u64> =
        (0..hp.calib_runs).map(|i| derive_seed(hp.seed, &format!("calib-run-{i}"))).collect();

    // The runs are independent; run them in parallel and reduce in order.
    let time_runs: Vec<(TimeReconstructor, TrainingTrace)> = run_seeds
        .par_iter()
        .map(|&s| {
            let run_hp = Hyperparams { seed: s, ..*hp };
            let mut model = init_time(s);
            let trace = train(&mut model, train_set, valid_set, &run_hp, hp.lr_time)?;
            Ok::<_, PipelineError>((model, trace))
        })
        .collect::<Result<_, _>>()?;
    let freq_runs: Vec<(FreqReconstructor, TrainingTrace)> = run_seeds
        .par_iter()
        .map(|&s| {
            let run_hp = Hyperparams { seed: s, ..*hp };
            let mut model = init_freq(s);
            let trace = train(&mut model, train_set, valid_set, &run_hp, hp.lr_freq)?;
            Ok::<_, PipelineError>((model, trace))
        })
        .collect::<Result<_, _>>()?;

    let time_traces: Vec<TrainingTrace> = time_runs.iter().map(|(_, t)| t.clone()).collect();
    let freq_traces: Vec<TrainingTrace> = freq_runs.iter().map(|(_, t)| t.clone()).collect();
    let thresholds = Thresholds {
        r_t: calibrate_threshold(&time_traces, hp)?,
        r_f: calibrate_threshold(&freq_traces, hp)?,
    };
    let time = time_runs.into_iter().next().expect("calib_runs >= 1").0;
    let freq = freq_runs.into_iter().next().expect("calib_runs >= 1").0;
    Ok(CalibratedModels { time, freq, thresholds, time_traces, freq_traces })
}

/// Decide one normalized segment: attack when either reconstruction error
/// reaches its threshold (inclusive).
pub fn detect(
    segment_id: &str,
    x: &FeatureMatrix,
    time: &TimeReconstructor,
    freq: &FreqReconstructor,
    th: &Thresholds,
) -> Result<DetectionResult, PipelineError> {
    let m = x.to_matrix();
    let r_t = time.score(&m)?;
    let r_f = freq.score(&m)?;
    let over_t = r_t >= th.r_t;
    let over_f = r_f >= th.r_f;
    let (verdict, triggered) = match (over_t, over_f) {
        (true, true) => (Verdict::Attack, Triggered::Both),
        (true, false) => (Verdict::Attack, Triggered::Time),
        (false, true) => (Verdict::Attack, Triggered::Freq),
        (false, false) => (Verdict::Normal, Triggered::None),
    };
    Ok(DetectionResult { segment_id: segment_id.to_string(), r_t, r_f, verdict, triggered })
}

/// Order-preserving map of [`detect`] over many segments.
pub fn detect_batch(
    segments: &[(String, FeatureMatrix)],
    time: &TimeReconstructor,
    freq: &FreqReconstructor,
    th: &Thresholds,
) -> Result<Vec<DetectionResult>, PipelineError> {
    segments
        .par_iter()
        .map(|(id, x)| detect(id, x, time, freq, th))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_features(n: usize, seed: u64) -> Vec<Matrix> {
        let mut rng = stream_rng(seed, "toy");
        (0..n)
            .map(|_| {
                let mut m = Matrix::zeros(16, 2);
                for v in m.as_mut_slice() {
                    *v = rng.random_range(0.0..0.4);
                }
                m
            })
            .collect()
    }

    #[test]
    fn hyperparams_defaults_are_valid() {
        let hp = Hyperparams::default();
        assert!(hp.validate().is_ok());
        assert_eq!(hp.epochs, 100);
        assert_eq!(hp.batch_size, 16);
        assert_eq!(hp.calib_epoch_lo, 71);
        assert_eq!(hp.calib_runs, 5);
    }

    #[test]
    fn train_empty_set_errors() {
        let hp = Hyperparams { epochs: 1, calib_epoch_hi: 1, calib_epoch_lo: 1, ..Default::default() };
        let mut model = init_time(1);
        assert!(matches!(
            train(&mut model, &[], &[], &hp, 0.01),
            Err(PipelineError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn train_is_deterministic() {
        let hp = Hyperparams {
            epochs: 3,
            calib_epoch_hi: 3,
            calib_epoch_lo: 1,
            seed: 5,
            ..Default::default()
        };
        let data = toy_features(24, 1);
        let valid = toy_features(8, 2);
        let run = || {
            let mut model = init_freq(hp.seed);
            let trace = train(&mut model, &data, &valid, &hp, 0.001).unwrap();
            (trace.train_loss, trace.valid_error, model.params()[0].value.clone())
        };
        let (l1, v1, p1) = run();
        let (l2, v2, p2) = run();
        assert_eq!(l1, l2);
        assert_eq!(v1, v2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn calibration_window_mean() {
        let hp = Hyperparams { calib_runs: 5, ..Default::default() };
        let mk = |v: f64| TrainingTrace {
            train_loss: vec![0.0; 100],
            valid_error: (0..100).map(|e| if e >= 70 { v } else { 9.9 }).collect(),
            epoch_seconds: vec![0.0; 100],
        };
        let traces: Vec<TrainingTrace> =
            [0.017, 0.018, 0.017, 0.018, 0.017].iter().map(|&v| mk(v)).collect();
        let th = calibrate_threshold(&traces, &hp).unwrap();
        assert!((th - 0.0174).abs() < 1e-12);
    }

    #[test]
    fn calibration_constant_error_returns_it() {
        let hp = Hyperparams { calib_runs: 1, ..Default::default() };
        let trace = TrainingTrace {
            train_loss: vec![0.0; 100],
            valid_error: vec![0.42; 100],
            epoch_seconds: vec![0.0; 100],
        };
        assert_eq!(calibrate_threshold(&[trace], &hp).unwrap(), 0.42);
    }

    #[test]
    fn calibration_insufficient_runs() {
        let hp = Hyperparams { calib_runs: 5, ..Default::default() };
        assert!(matches!(
            calibrate_threshold(&[], &hp),
            Err(PipelineError::InsufficientRuns { needed: 5, got: 0 })
        ));
    }

    #[test]
    fn calibration_is_order_invariant() {
        let hp = Hyperparams { calib_runs: 3, ..Default::default() };
        let mk = |v: f64| TrainingTrace {
            train_loss: vec![0.0; 100],
            valid_error: vec![v; 100],
            epoch_seconds: vec![0.0; 100],
        };
        let a = calibrate_threshold(&[mk(0.1), mk(0.2), mk(0.3)], &hp).unwrap();
        let b = calibrate_threshold(&[mk(0.3), mk(0.1), mk(0.2)], &hp).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn detect_or_rule_semantics() {
        let time = init_time(1);
        let freq = init_freq(1);
        let x = FeatureMatrix::zeros(16);
        let m = x.to_matrix();
        let r_t = time.score(&m).unwrap();
        let r_f = freq.score(&m).unwrap();

        // Thresholds above both scores: normal.
        let th = Thresholds { r_t: r_t + 1.0, r_f: r_f + 1.0 };
        let res = detect("s", &x, &time, &freq, &th).unwrap();
        assert_eq!(res.verdict, Verdict::Normal);
        assert_eq!(res.triggered, Triggered::None);

        // Boundary is inclusive: r_t == R_t flags attack.
        let th = Thresholds { r_t, r_f: r_f + 1.0 };
        let res = detect("s", &x, &time, &freq, &th).unwrap();
        assert_eq!(res.verdict, Verdict::Attack);
        assert_eq!(res.triggered, Triggered::Time);

        // Only the frequency side over threshold.
        let th = Thresholds { r_t: r_t + 1.0, r_f: r_f / 2.0 };
        let res = detect("s", &x, &time, &freq, &th).unwrap();
        assert_eq!(res.verdict, Verdict::Attack);
        assert_eq!(res.triggered, Triggered::Freq);
    }

    #[test]
    fn detect_batch_matches_elementwise_detect() {
        let time = init_time(2);
        let freq = init_freq(2);
        let th = Thresholds { r_t: 0.05, r_f: 0.6 };
        let segs: Vec<(String, FeatureMatrix)> = (0..8)
            .map(|i| {
                let mut fm = FeatureMatrix::zeros(16);
                fm.t[1] = 0.1 * i as f64 / 8.0;
                fm.l[1] = 0.5;
                (format!("seg-{i}"), fm)
            })
            .collect();
        let batch = detect_batch(&segs, &time, &freq, &th).unwrap();
        assert_eq!(batch.len(), 8);
        for (one, (id, fm)) in batch.iter().zip(&segs) {
            let single = detect(id, fm, &time, &freq, &th).unwrap();
            assert_eq!(one, &single);
        }
        assert!(detect_batch(&[], &time, &freq, &th).unwrap().is_empty());
    }

    #[test]
    fn training_reduces_loss_on_small_set() {
        // Small smoke check that the optimizer actually descends; the full
        // convergence contract runs in the acceptance suite.
        let hp = Hyperparams {
            epochs: 12,
            calib_epoch_hi: 12,
            calib_epoch_lo: 10,
            batch_size: 8,
            seed: 3,
            ..Default::default()
        };
        let data = toy_features(32, 9);
        let valid = toy_features(8, 10);
        let mut model = init_freq(hp.seed);
        let trace = train(&mut model, &data, &valid, &hp, 0.02).unwrap();
        let first = trace.train_loss[0];
        let last = *trace.train_loss.last().unwrap();
        assert!(last < first, "loss should decrease: {first} -> {last}");
    }
}
