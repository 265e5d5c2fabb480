//! Reconstruction-loss anomaly detection.
//!
//! Per-record loss is the mean squared error across features. The threshold
//! is the nearest-rank `(100 - A)`-th percentile of a reference loss set,
//! and a record is flagged when its loss is strictly greater.
//!
//! Accuracy is `(TP + TN) / total`. The original detection procedure writes
//! accuracy as `TP / (TP + FP)`, which is just precision again; that form is
//! not reproduced.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config, dimension, Error, Result};
use crate::matrix::Matrix;
use crate::predictor::Predictor;
use crate::telemetry::WindowedDataset;

/// Non-negative, finite per-record losses.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossVector(Vec<f64>);

impl LossVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Input(format!("loss {i} is {v}, expected finite and >= 0")));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Concatenation of two loss sets.
    pub fn pooled(&self, other: &LossVector) -> LossVector {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        LossVector(v)
    }
}

/// Operator-supplied expected anomaly percentage, strictly inside (0, 100).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnomalyRatio(f64);

impl AnomalyRatio {
    pub fn new(percent: f64) -> Result<Self> {
        if !(percent > 0.0 && percent < 100.0) {
            return Err(config(format!("anomaly ratio {percent} must lie in (0, 100)")));
        }
        Ok(Self(percent))
    }

    pub fn percent(self) -> f64 {
        self.0
    }
}

/// Mean over features of the squared error, one value per row.
pub fn pointwise_loss(predicted: &Matrix, truth: &Matrix) -> Result<LossVector> {
    if predicted.rows() != truth.rows() || predicted.cols() != truth.cols() {
        return Err(dimension(format!(
            "predicted is {}x{}, truth is {}x{}",
            predicted.rows(),
            predicted.cols(),
            truth.rows(),
            truth.cols()
        )));
    }
    let losses = (0..truth.rows())
        .map(|r| row_mse(predicted.row(r), truth.row(r)))
        .collect();
    LossVector::new(losses)
}

#[inline]
fn row_mse(p: &[f64], t: &[f64]) -> f64 {
    let sum: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
    sum / t.len().max(1) as f64
}

/// Nearest-rank percentile at `100 - A`: the sorted value at 1-based rank
/// `ceil((100 - A) / 100 * N)`, clamped to `[1, N]`.
pub fn percentile_threshold(losses: &LossVector, ratio: AnomalyRatio) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::Input("cannot take a percentile of no losses".into()));
    }
    let mut values = losses.0.clone();
    let n = values.len();
    // Multiply before dividing so exact ranks stay exact.
    let exact = (100.0 - ratio.percent()) * n as f64 / 100.0;
    let rank = (libm::ceil(exact - 1e-9) as usize).clamp(1, n);
    let (_, nth, _) = values.select_nth_unstable_by(rank - 1, f64::total_cmp);
    Ok(*nth)
}

/// `loss > threshold`, per record.
pub fn flag(losses: &LossVector, threshold: f64) -> Vec<bool> {
    losses.0.iter().map(|&l| l > threshold).collect()
}

/// Ratios that had a zero denominator and were reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Undefined {
    pub precision: bool,
    pub recall: bool,
    pub f_score: bool,
}

/// Confusion counts and the ratios derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Metrics {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: usize,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    /// The anomaly ratio used to set the threshold, when known.
    pub anomaly_ratio: Option<f64>,
    pub undefined: Undefined,
}

impl Metrics {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn from_counts(tp: usize, tn: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                (0.0, true)
            } else {
                (num as f64 / den as f64, false)
            }
        };
        let total = tp + tn + fp + fn_;
        let (accuracy, _) = ratio(tp + tn, total);
        let (precision, p_undef) = ratio(tp, tp + fp);
        let (recall, r_undef) = ratio(tp, tp + fn_);
        let (f_score, f_undef) = if precision + recall > 0.0 {
            (2.0 * precision * recall / (precision + recall), false)
        } else {
            (0.0, true)
        };
        Self {
            tp,
            tn,
            fp,
            fn_,
            accuracy,
            precision,
            recall,
            f_score,
            anomaly_ratio: None,
            undefined: Undefined {
                precision: p_undef,
                recall: r_undef,
                f_score: f_undef,
            },
        }
    }
}

/// Scores predicted labels against ground truth.
pub fn evaluate(predicted: &[bool], truth: &[bool]) -> Result<Metrics> {
    if predicted.len() != truth.len() {
        return Err(dimension(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Input("cannot evaluate empty label vectors".into()));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for (&p, &g) in predicted.iter().zip(truth) {
        match (p, g) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(Metrics::from_counts(tp, tn, fp, fn_))
}

/// Which losses the percentile threshold is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ThresholdSource {
    /// The supplied training losses.
    #[default]
    Train,
    /// Training and evaluation losses together.
    Pooled,
    /// The evaluation losses alone.
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectConfig {
    pub anomaly_ratio: AnomalyRatio,
    pub threshold_source: ThresholdSource,
}

/// Per-record losses for every record covered by a window target.
///
/// Records covered by several windows get the mean of their losses.
/// Returns the covered record indices (ascending) and their losses.
pub fn record_losses<P: Predictor + ?Sized>(
    predictor: &P,
    data: &WindowedDataset,
) -> Result<(Vec<usize>, LossVector)> {
    let shape = predictor.shape();
    shape.check(data)?;
    let n = data.data().rows();
    let d = shape.features;
    let mut sum = vec![0.0; n];
    let mut count = vec![0u32; n];
    let mut out = vec![0.0; shape.output_len()];
    for i in 0..data.len() {
        predictor.predict_into(data.input(i), &mut out);
        let target = data.target(i);
        let base = data.target_start(i);
        for (r, (p, t)) in out.chunks_exact(d).zip(target.chunks_exact(d)).enumerate() {
            sum[base + r] += row_mse(p, t);
            count[base + r] += 1;
        }
    }
    let mut indices = Vec::new();
    let mut losses = Vec::new();
    for (i, (&s, &c)) in sum.iter().zip(&count).enumerate() {
        if c > 0 {
            indices.push(i);
            losses.push(s / c as f64);
        }
    }
    Ok((indices, LossVector::new(losses)?))
}

/// Outcome of one detection pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Record index (into the evaluation data) of each entry below.
    pub indices: Vec<usize>,
    pub losses: LossVector,
    pub threshold: f64,
    pub predicted: Vec<bool>,
    pub ground_truth: Option<Vec<bool>>,
    pub metrics: Option<Metrics>,
}

/// Scores `eval` with `predictor`, thresholds, flags and (when labels are
/// given) evaluates.
///
/// `labels` is indexed by record of the evaluation data, not by window.
pub fn detect<P: Predictor + ?Sized>(
    predictor: &P,
    eval: &WindowedDataset,
    labels: Option<&[bool]>,
    train_losses: &LossVector,
    cfg: &DetectConfig,
) -> Result<DetectionResult> {
    let (indices, losses) = record_losses(predictor, eval)?;
    let threshold = match cfg.threshold_source {
        ThresholdSource::Train => {
            if train_losses.is_empty() {
                return Err(Error::Input("training losses are empty".into()));
            }
            percentile_threshold(train_losses, cfg.anomaly_ratio)?
        }
        ThresholdSource::Pooled => percentile_threshold(&train_losses.pooled(&losses), cfg.anomaly_ratio)?,
        ThresholdSource::Eval => percentile_threshold(&losses, cfg.anomaly_ratio)?,
    };
    finish(indices, losses, threshold, labels, eval.data().rows(), cfg.anomaly_ratio)
}

pub(crate) fn finish(
    indices: Vec<usize>,
    losses: LossVector,
    threshold: f64,
    labels: Option<&[bool]>,
    records: usize,
    ratio: AnomalyRatio,
) -> Result<DetectionResult> {
    let predicted = flag(&losses, threshold);
    let (ground_truth, metrics) = match labels {
        Some(labels) => {
            if labels.len() != records {
                return Err(dimension(format!(
                    "{} labels for {records} evaluation records",
                    labels.len()
                )));
            }
            let truth: Vec<bool> = indices.iter().map(|&i| labels[i]).collect();
            let mut m = evaluate(&predicted, &truth)?;
            m.anomaly_ratio = Some(ratio.percent());
            (Some(truth), Some(m))
        }
        None => (None, None),
    };
    Ok(DetectionResult {
        indices,
        losses,
        threshold,
        predicted,
        ground_truth,
        metrics,
    })
}
