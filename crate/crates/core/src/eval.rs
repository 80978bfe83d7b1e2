//! Detection quality evaluation: confusion-matrix metrics, repeated
//! re-seeded evaluation runs, and tabular/JSON reporting.
//!
//! Attack segments are the positive class. Degenerate 0/0 ratios come back
//! as 0 with a flag rather than an error, since desk-scale runs can produce
//! empty prediction classes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{apply_normalization, extract_features, fit_normalization, FEATURE_STEPS};
use crate::pipeline::{detect_batch, train_and_calibrate, Hyperparams, PipelineError, Verdict};
use crate::seed::derive_seed;
use crate::synth::{split_train_valid, LabeledDataset, Label};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions and labels differ in length: {preds} vs {labels}")]
    LengthMismatch { preds: usize, labels: usize },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Ingest(#[from] crate::ingest::IngestError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub fpr: f64,
    pub f1: f64,
    /// True when any ratio had a 0/0 denominator and was reported as 0.
    pub degenerate: bool,
}

/// Count the four confusion cells; attack = positive.
pub fn confusion(preds: &[Verdict], labels: &[Label]) -> Result<ConfusionMatrix, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), labels: labels.len() });
    }
    let mut cm = ConfusionMatrix { tp: 0, fn_: 0, fp: 0, tn: 0 };
    for (p, l) in preds.iter().zip(labels) {
        match (p, l) {
            (Verdict::Attack, Label::Attack) => cm.tp += 1,
            (Verdict::Normal, Label::Attack) => cm.fn_ += 1,
            (Verdict::Attack, Label::Normal) => cm.fp += 1,
            (Verdict::Normal, Label::Normal) => cm.tn += 1,
        }
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy, precision, recall, false-positive rate and F1.
pub fn metrics(cm: &ConfusionMatrix) -> Metrics {
    let mut degenerate = false;
    let accuracy = ratio(cm.tp + cm.tn, cm.tp + cm.tn + cm.fp + cm.fn_, &mut degenerate);
    let precision = ratio(cm.tp, cm.tp + cm.fp, &mut degenerate);
    let recall = ratio(cm.tp, cm.tp + cm.fn_, &mut degenerate);
    let fpr = ratio(cm.fp, cm.fp + cm.tn, &mut degenerate);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        degenerate = true;
        0.0
    };
    Metrics { accuracy, precision, recall, fpr, f1, degenerate }
}

/// One evaluation run: its seed, confusion cells and metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunResult {
    pub seed: u64,
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
    pub metrics: Metrics,
}

/// A dataset's evaluation: per-run values plus the arithmetic mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetReport {
    pub dataset: String,
    pub runs: Vec<RunResult>,
    pub mean: MeanMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub accuracy: f64,
    pub recall: f64,
    pub precision: f64,
    pub fpr: f64,
    pub f1: f64,
}

impl MeanMetrics {
    fn from_runs(runs: &[RunResult]) -> Self {
        let n = runs.len().max(1) as f64;
        MeanMetrics {
            accuracy: runs.iter().map(|r| r.metrics.accuracy).sum::<f64>() / n,
            recall: runs.iter().map(|r| r.metrics.recall).sum::<f64>() / n,
            precision: runs.iter().map(|r| r.metrics.precision).sum::<f64>() / n,
            fpr: runs.iter().map(|r| r.metrics.fpr).sum::<f64>() / n,
            f1: runs.iter().map(|r| r.metrics.f1).sum::<f64>() / n,
        }
    }
}

/// Train, calibrate and detect on a labeled dataset under one run seed.
pub fn evaluate_once(dataset: &LabeledDataset, hp: &Hyperparams) -> Result<RunResult, EvalError> {
    let normal_segs: Vec<_> = dataset
        .segments
        .iter()
        .filter(|(_, l)| *l == Label::Normal)
        .map(|(s, _)| s.clone())
        .collect();
    let (train_segs, valid_segs) = split_train_valid(&normal_segs, 0.7, hp.seed);
    let train_feats: Vec<_> =
        train_segs.iter().map(|s| extract_features(s, FEATURE_STEPS)).collect();
    let stats = fit_normalization(&train_feats)?;
    let train_set: Vec<_> =
        train_feats.iter().map(|f| apply_normalization(f, &stats).to_matrix()).collect();
    let valid_set: Vec<_> = valid_segs
        .iter()
        .map(|s| apply_normalization(&extract_features(s, FEATURE_STEPS), &stats).to_matrix())
        .collect();

    let calibrated = train_and_calibrate(&train_set, &valid_set, hp)?;

    let inputs: Vec<(String, crate::ingest::FeatureMatrix)> = dataset
        .segments
        .iter()
        .map(|(s, _)| {
            (
                s.segment_id.clone(),
                apply_normalization(&extract_features(s, FEATURE_STEPS), &stats),
            )
        })
        .collect();
    let results =
        detect_batch(&inputs, &calibrated.time, &calibrated.freq, &calibrated.thresholds)?;
    let preds: Vec<Verdict> = results.iter().map(|r| r.verdict).collect();
    let labels: Vec<Label> = dataset.segments.iter().map(|(_, l)| *l).collect();
    let cm = confusion(&preds, &labels)?;
    Ok(RunResult {
        seed: hp.seed,
        tp: cm.tp,
        fn_: cm.fn_,
        fp: cm.fp,
        tn: cm.tn,
        metrics: metrics(&cm),
    })
}

/// `k` independent re-seeded evaluation runs (training + calibration +
/// detection each), averaged.
pub fn evaluate_runs(
    dataset: &LabeledDataset,
    hp: &Hyperparams,
    k: usize,
) -> Result<DatasetReport, EvalError> {
    let seeds: Vec<u64> = (0..k).map(|i| derive_seed(hp.seed, &format!("eval-run-{i}"))).collect();
    let runs: Vec<RunResult> = seeds
        .par_iter()
        .map(|&s| evaluate_once(dataset, &Hyperparams { seed: s, ..*hp }))
        .collect::<Result<_, _>>()?;
    let mean = MeanMetrics::from_runs(&runs);
    Ok(DatasetReport { dataset: dataset.name.clone(), runs, mean })
}

/// Fixed column order for the report table.
pub const REPORT_COLUMNS: [&str; 5] = ["Accuracy", "Recall", "Precision", "FAR", "F1"];

/// Render one row per dataset plus an Average row.
pub fn render_table(reports: &[DatasetReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>9} {:>9} {:>9} {:>9} {:>9}\n",
        "Dataset",
        REPORT_COLUMNS[0],
        REPORT_COLUMNS[1],
        REPORT_COLUMNS[2],
        REPORT_COLUMNS[3],
        REPORT_COLUMNS[4]
    ));
    let mut avg = [0.0_f64; 5];
    for r in reports {
        out.push_str(&format!(
            "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}\n",
            r.dataset, r.mean.accuracy, r.mean.recall, r.mean.precision, r.mean.fpr, r.mean.f1
        ));
        avg[0] += r.mean.accuracy;
        avg[1] += r.mean.recall;
        avg[2] += r.mean.precision;
        avg[3] += r.mean.fpr;
        avg[4] += r.mean.f1;
    }
    let n = reports.len().max(1) as f64;
    out.push_str(&format!(
        "{:<16} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>9.4}\n",
        "Average",
        avg[0] / n,
        avg[1] / n,
        avg[2] / n,
        avg[3] / n,
        avg[4] / n
    ));
    out
}
