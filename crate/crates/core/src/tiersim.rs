//! Onboard / edge / cloud placement and a logical-clock stream simulator.
//!
//! Elapsed time follows `t(B) = a + c·N + b·N/B` for `N` stream items in
//! batches of `B`: a fixed run overhead, a per-item compute cost scaled by
//! the tier, and a per-batch overhead. Measured batch sweeps are fitted with
//! the two-parameter form `t = a′ + b′/B`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::detect::{self, AnomalyRatio, DetectionResult, LossVector, Metrics};
use crate::error::{config, Error, Result};
use crate::predictor::Predictor;
use crate::telemetry::WindowedDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum TierName {
    Onboard,
    Edge,
    Cloud,
}

impl TierName {
    pub const ALL: [TierName; 3] = [TierName::Onboard, TierName::Edge, TierName::Cloud];

    pub fn as_str(self) -> &'static str {
        match self {
            TierName::Onboard => "onboard",
            TierName::Edge => "edge",
            TierName::Cloud => "cloud",
        }
    }

    pub fn parse(s: &str) -> Option<TierName> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl core::fmt::Display for TierName {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ModelClass {
    Small,
    Medium,
    Large,
}

/// An execution location.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tier {
    pub name: TierName,
    /// Relative per-item processing cost.
    pub compute_factor: f64,
    /// Latency for shipping a batch's results to the next tier.
    pub link_latency_ms: f64,
    pub model_class: ModelClass,
}

impl Tier {
    pub fn link_latency_s(&self) -> f64 {
        self.link_latency_ms / 1000.0
    }
}

/// The three tiers, ordered onboard → edge → cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TierSet {
    tiers: [Tier; 3],
}

impl TierSet {
    /// Validates that cost falls from onboard to cloud and latencies are
    /// non-negative.
    pub fn new(onboard: Tier, edge: Tier, cloud: Tier) -> Result<Self> {
        for (tier, name) in [(&onboard, TierName::Onboard), (&edge, TierName::Edge), (&cloud, TierName::Cloud)] {
            if tier.name != name {
                return Err(config(format!("tier {} given in the {name} slot", tier.name)));
            }
            if !(tier.compute_factor > 0.0 && tier.compute_factor.is_finite()) {
                return Err(config(format!("{name} compute factor must be positive")));
            }
            if !(tier.link_latency_ms >= 0.0 && tier.link_latency_ms.is_finite()) {
                return Err(config(format!("{name} link latency must be non-negative")));
            }
        }
        if !(cloud.compute_factor <= edge.compute_factor && edge.compute_factor <= onboard.compute_factor) {
            return Err(config("compute factors must satisfy cloud <= edge <= onboard"));
        }
        Ok(Self {
            tiers: [onboard, edge, cloud],
        })
    }

    pub fn get(&self, name: TierName) -> &Tier {
        &self.tiers[name as usize]
    }
}

impl Default for TierSet {
    fn default() -> Self {
        Self {
            tiers: [
                Tier {
                    name: TierName::Onboard,
                    compute_factor: 4.0,
                    link_latency_ms: 5.0,
                    model_class: ModelClass::Small,
                },
                Tier {
                    name: TierName::Edge,
                    compute_factor: 1.5,
                    link_latency_ms: 20.0,
                    model_class: ModelClass::Medium,
                },
                Tier {
                    name: TierName::Cloud,
                    compute_factor: 1.0,
                    link_latency_ms: 60.0,
                    model_class: ModelClass::Large,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskClass {
    Inference,
    Detection,
    Forecasting,
    Finetuning,
}

impl TaskClass {
    pub const ALL: [TaskClass; 4] = [
        TaskClass::Inference,
        TaskClass::Detection,
        TaskClass::Forecasting,
        TaskClass::Finetuning,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskClass::Inference => "inference",
            TaskClass::Detection => "detection",
            TaskClass::Forecasting => "forecasting",
            TaskClass::Finetuning => "finetuning",
        }
    }

    pub fn parse(s: &str) -> Option<TaskClass> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

/// Task class → tier assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlacementPolicy(pub BTreeMap<TaskClass, TierName>);

impl PlacementPolicy {
    pub fn empty() -> Self {
        Self(BTreeMap::new())
    }
}

impl Default for PlacementPolicy {
    /// Basic inference onboard, real-time detection at the edge, forecasting
    /// and fine-tuning in the cloud.
    fn default() -> Self {
        Self(BTreeMap::from([
            (TaskClass::Inference, TierName::Onboard),
            (TaskClass::Detection, TierName::Edge),
            (TaskClass::Forecasting, TierName::Cloud),
            (TaskClass::Finetuning, TierName::Cloud),
        ]))
    }
}

pub fn place(task: TaskClass, policy: &PlacementPolicy, tiers: &TierSet) -> Result<Tier> {
    policy
        .0
        .get(&task)
        .map(|&name| *tiers.get(name))
        .ok_or_else(|| config(format!("placement policy has no tier for {}", task.as_str())))
}

/// Cost coefficients, all in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LatencyModel {
    /// Fixed per-run overhead.
    pub a: f64,
    /// Per-batch overhead.
    pub b: f64,
    /// Per-item cost at compute factor 1.
    pub c: f64,
}

impl LatencyModel {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        if [a, b, c].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(config(format!("latency coefficients ({a}, {b}, {c}) must be finite and >= 0")));
        }
        Ok(Self { a, b, c })
    }

    /// Continuous elapsed time `a + c·N + b·N/B`.
    pub fn analytic_elapsed(&self, items: usize, batch_size: usize) -> f64 {
        let n = items as f64;
        self.a + self.c * n + self.b * n / batch_size as f64
    }

    /// Splits a fitted curve measured on `tier` with `items` stream items.
    ///
    /// The fixed offset `a′` is attributed to per-item compute (`a = 0`),
    /// and the tier's link latency is carved out of the per-batch overhead,
    /// so simulating `items` on `tier` reproduces the fitted curve.
    pub fn calibrate(fit: &LatencyFit, items: usize, tier: &Tier) -> Result<Self> {
        if items == 0 {
            return Err(config("calibration needs a positive item count"));
        }
        let n = items as f64;
        let b = fit.b_prime / n - tier.link_latency_s();
        Self::new(0.0, b.max(0.0), fit.a_prime.max(0.0) / (n * tier.compute_factor))
    }
}

/// Least-squares fit of `t = a′ + b′/B`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyFit {
    pub a_prime: f64,
    pub b_prime: f64,
    /// `(B, observed, fitted)` per input point.
    pub points: Vec<(usize, f64, f64)>,
}

impl LatencyFit {
    pub fn predict(&self, batch_size: usize) -> f64 {
        self.a_prime + self.b_prime / batch_size as f64
    }

    /// Fitted minus observed, per point.
    pub fn residuals(&self) -> Vec<f64> {
        self.points.iter().map(|&(_, obs, fit)| fit - obs).collect()
    }

    pub fn max_relative_residual(&self) -> f64 {
        self.points
            .iter()
            .map(|&(_, obs, fit)| libm::fabs(fit - obs) / libm::fabs(obs))
            .fold(0.0, f64::max)
    }
}

pub fn fit_latency_model(table: &[(usize, f64)]) -> Result<LatencyFit> {
    if table.iter().any(|&(b, t)| b == 0 || !t.is_finite()) {
        return Err(Error::Fit("batch sizes must be positive and times finite".into()));
    }
    let n = table.len() as f64;
    let xs: Vec<f64> = table.iter().map(|&(b, _)| 1.0 / b as f64).collect();
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_t = table.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x) * (x - mean_x)).sum();
    let sxt: f64 = xs.iter().zip(table).map(|(x, p)| (x - mean_x) * (p.1 - mean_t)).sum();
    let distinct = {
        let mut bs: Vec<usize> = table.iter().map(|p| p.0).collect();
        bs.sort_unstable();
        bs.dedup();
        bs.len()
    };
    if distinct < 2 || sxx <= 0.0 {
        return Err(Error::Fit("need at least two distinct batch sizes".into()));
    }
    let b_prime = sxt / sxx;
    let a_prime = mean_t - b_prime * mean_x;
    let points = table
        .iter()
        .map(|&(b, t)| (b, t, a_prime + b_prime / b as f64))
        .collect();
    Ok(LatencyFit {
        a_prime,
        b_prime,
        points,
    })
}

/// Scores windows with a fixed threshold.
#[derive(Debug, Clone, Copy)]
pub struct StreamDetector<'a, P: ?Sized> {
    pub predictor: &'a P,
    pub threshold: f64,
    pub anomaly_ratio: AnomalyRatio,
}

/// Mission identity attached to reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissionMeta {
    pub mission_id: String,
    pub tier: TierName,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StreamStats {
    pub batch_size: usize,
    /// Stream items (evaluation windows).
    pub items: usize,
    /// Records covered by the windows.
    pub records: usize,
    pub elapsed_s: f64,
    pub metrics: Option<Metrics>,
}

/// Summary of flagged records for one mission.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnomalyReport {
    pub mission_id: String,
    pub tier: TierName,
    /// Inclusive record index ranges, sorted and disjoint.
    pub ranges: Vec<(usize, usize)>,
    pub threshold: f64,
    pub metrics: Option<Metrics>,
    /// Logical time in seconds.
    pub timestamp_s: f64,
}

/// Compresses flagged records into inclusive ranges. A run continues only
/// while record indices are consecutive.
pub fn flag_ranges(indices: &[usize], flags: &[bool]) -> Vec<(usize, usize)> {
    let mut ranges: Vec<(usize, usize)> = Vec::new();
    let mut prev: Option<usize> = None;
    for (&i, &f) in indices.iter().zip(flags) {
        if f {
            match ranges.last_mut() {
                Some(last) if prev == Some(i.wrapping_sub(1)) && last.1 + 1 == i => last.1 = i,
                _ => ranges.push((i, i)),
            }
        }
        prev = if f { Some(i) } else { None };
    }
    ranges
}

pub fn emit_report(detection: &DetectionResult, mission: &MissionMeta, timestamp_s: f64) -> AnomalyReport {
    AnomalyReport {
        mission_id: mission.mission_id.clone(),
        tier: mission.tier,
        ranges: flag_ranges(&detection.indices, &detection.predicted),
        threshold: detection.threshold,
        metrics: detection.metrics,
        timestamp_s,
    }
}

/// Streams `data` through `detector` in batches of `batch_size` windows on
/// `tier`.
///
/// The clock starts at `a`; each batch advances it by
/// `b + c·items·compute_factor + link latency`. Losses accumulate across
/// batches so detection output does not depend on the batch size. One
/// report is emitted per contiguous flagged run, stamped with the clock at
/// the end of the batch that completed the run.
pub fn simulate_stream<P: Predictor + ?Sized>(
    data: &WindowedDataset,
    labels: Option<&[bool]>,
    detector: &StreamDetector<'_, P>,
    tier: &Tier,
    batch_size: usize,
    model: &LatencyModel,
    mission: &MissionMeta,
) -> Result<(StreamStats, Vec<AnomalyReport>)> {
    if batch_size == 0 {
        return Err(config("batch size must be positive"));
    }
    let shape = detector.predictor.shape();
    shape.check(data)?;
    let d = shape.features;
    let n_records = data.data().rows();
    let mut sum = vec![0.0; n_records];
    let mut count = vec![0u32; n_records];
    let mut done_at = vec![0.0; n_records];
    let mut out = vec![0.0; shape.output_len()];
    let mut clock = model.a;
    let window_ids: Vec<usize> = (0..data.len()).collect();
    for batch in window_ids.chunks(batch_size) {
        clock += model.b + model.c * batch.len() as f64 * tier.compute_factor + tier.link_latency_s();
        for &w in batch {
            detector.predictor.predict_into(data.input(w), &mut out);
            let base = data.target_start(w);
            for (r, (p, t)) in out.chunks_exact(d).zip(data.target(w).chunks_exact(d)).enumerate() {
                let e: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / d as f64;
                sum[base + r] += e;
                count[base + r] += 1;
                done_at[base + r] = clock;
            }
        }
    }
    let mut indices = Vec::new();
    let mut losses = Vec::new();
    for i in 0..n_records {
        if count[i] > 0 {
            indices.push(i);
            losses.push(sum[i] / count[i] as f64);
        }
    }
    let records = indices.len();
    let result = detect::finish(
        indices,
        LossVector::new(losses)?,
        detector.threshold,
        labels,
        n_records,
        detector.anomaly_ratio,
    )?;
    let reports = flag_ranges(&result.indices, &result.predicted)
        .into_iter()
        .map(|range| AnomalyReport {
            mission_id: mission.mission_id.clone(),
            tier: mission.tier,
            ranges: vec![range],
            threshold: result.threshold,
            metrics: result.metrics,
            timestamp_s: done_at[range.1],
        })
        .collect();
    let stats = StreamStats {
        batch_size,
        items: data.len(),
        records,
        elapsed_s: clock,
        metrics: result.metrics,
    };
    Ok((stats, reports))
}

/// One [`simulate_stream`] run per batch size.
pub fn run_batch_experiment<P: Predictor + ?Sized>(
    data: &WindowedDataset,
    labels: Option<&[bool]>,
    detector: &StreamDetector<'_, P>,
    tier: &Tier,
    batch_sizes: &[usize],
    model: &LatencyModel,
    mission: &MissionMeta,
) -> Result<Vec<StreamStats>> {
    if batch_sizes.is_empty() {
        return Err(config("batch size list is empty"));
    }
    batch_sizes
        .iter()
        .map(|&b| simulate_stream(data, labels, detector, tier, b, model, mission).map(|(s, _)| s))
        .collect()
}
