//! Sensor telemetry: records, cleaning, scaling, splitting and windowing.
//!
//! A [`TelemetrySeries`] holds one mission's combined gyro/accelerometer
//! samples in timestamp order. Missing float cells are stored as NaN
//! ([`MISSING`]) until [`impute_missing`] fills them.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{config, dimension, Error, Result};
use crate::matrix::Matrix;

/// Sentinel for a missing float cell.
pub const MISSING: f64 = f64::NAN;

/// Standard deviations below this are treated as zero when scaling.
pub const STD_EPSILON: f64 = 1e-12;

/// Column of a sensor record that can be used as a model feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Feature {
    Gyro0,
    Gyro1,
    Gyro2,
    GyroIntegralDt,
    AccelTimestampRelative,
    Accel0,
    Accel1,
    Accel2,
    AccelIntegralDt,
    AccelClipping,
}

impl Feature {
    /// All feature columns, in CSV order.
    pub const ALL: [Feature; 10] = [
        Feature::Gyro0,
        Feature::Gyro1,
        Feature::Gyro2,
        Feature::GyroIntegralDt,
        Feature::AccelTimestampRelative,
        Feature::Accel0,
        Feature::Accel1,
        Feature::Accel2,
        Feature::AccelIntegralDt,
        Feature::AccelClipping,
    ];

    /// The six gyro and accelerometer axes modeled by default.
    pub const MODELED: [Feature; 6] = [
        Feature::Gyro0,
        Feature::Gyro1,
        Feature::Gyro2,
        Feature::Accel0,
        Feature::Accel1,
        Feature::Accel2,
    ];

    pub const FLOAT: [Feature; 6] = Self::MODELED;

    pub fn name(self) -> &'static str {
        match self {
            Feature::Gyro0 => "gyro_rad_0",
            Feature::Gyro1 => "gyro_rad_1",
            Feature::Gyro2 => "gyro_rad_2",
            Feature::GyroIntegralDt => "gyro_integral_dt",
            Feature::AccelTimestampRelative => "accelerometer_timestamp_relative",
            Feature::Accel0 => "accelerometer_m_s2_0",
            Feature::Accel1 => "accelerometer_m_s2_1",
            Feature::Accel2 => "accelerometer_m_s2_2",
            Feature::AccelIntegralDt => "accelerometer_integral_dt",
            Feature::AccelClipping => "accelerometer_clipping",
        }
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Whether the column holds a real-valued sensor reading (as opposed to
    /// integer interval/flag metadata).
    pub fn is_float(self) -> bool {
        Self::FLOAT.contains(&self)
    }
}

impl core::fmt::Display for Feature {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// One row of the sensor export.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SensorRecord {
    /// Microseconds since boot.
    pub timestamp: i64,
    /// Angular rate, rad/s.
    pub gyro: [f64; 3],
    pub gyro_integral_dt: i64,
    pub accel_timestamp_relative: i64,
    /// Specific force, m/s².
    pub accel: [f64; 3],
    pub accel_integral_dt: i64,
    pub accel_clipping: u32,
}

impl SensorRecord {
    pub fn value(&self, feature: Feature) -> f64 {
        match feature {
            Feature::Gyro0 => self.gyro[0],
            Feature::Gyro1 => self.gyro[1],
            Feature::Gyro2 => self.gyro[2],
            Feature::GyroIntegralDt => self.gyro_integral_dt as f64,
            Feature::AccelTimestampRelative => self.accel_timestamp_relative as f64,
            Feature::Accel0 => self.accel[0],
            Feature::Accel1 => self.accel[1],
            Feature::Accel2 => self.accel[2],
            Feature::AccelIntegralDt => self.accel_integral_dt as f64,
            Feature::AccelClipping => self.accel_clipping as f64,
        }
    }

    /// Overwrites a float column. Integer columns are rejected.
    pub fn set_value(&mut self, feature: Feature, value: f64) -> Result<()> {
        let slot = match feature {
            Feature::Gyro0 => &mut self.gyro[0],
            Feature::Gyro1 => &mut self.gyro[1],
            Feature::Gyro2 => &mut self.gyro[2],
            Feature::Accel0 => &mut self.accel[0],
            Feature::Accel1 => &mut self.accel[1],
            Feature::Accel2 => &mut self.accel[2],
            other => {
                return Err(config(format!(
                    "column {other} is integer-valued and cannot be rewritten"
                )))
            }
        };
        *slot = value;
        Ok(())
    }

    pub fn has_missing(&self) -> bool {
        self.gyro.iter().chain(&self.accel).any(|v| v.is_nan())
    }

    /// Checks the record-level invariants (positive integration intervals,
    /// finite readings).
    pub fn validate(&self) -> Result<()> {
        if self.gyro_integral_dt <= 0 || self.accel_integral_dt <= 0 {
            return Err(Error::Input(format!(
                "record at {} has a non-positive integration interval",
                self.timestamp
            )));
        }
        if !self.gyro.iter().chain(&self.accel).all(|v| v.is_finite()) {
            return Err(Error::Input(format!(
                "record at {} has a non-finite reading",
                self.timestamp
            )));
        }
        Ok(())
    }
}

/// Timestamp-ordered telemetry of one mission.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TelemetrySeries {
    records: Vec<SensorRecord>,
    features: Vec<Feature>,
}

impl TelemetrySeries {
    /// Builds a series over the default modeled features.
    pub fn new(records: Vec<SensorRecord>) -> Result<Self> {
        Self::with_features(records, Feature::MODELED.to_vec())
    }

    pub fn with_features(records: Vec<SensorRecord>, features: Vec<Feature>) -> Result<Self> {
        if features.is_empty() {
            return Err(config("at least one modeling feature is required"));
        }
        for (i, f) in features.iter().enumerate() {
            if features[..i].contains(f) {
                return Err(config(format!("feature {f} listed twice")));
            }
        }
        for (index, pair) in records.windows(2).enumerate() {
            if pair[1].timestamp <= pair[0].timestamp {
                return Err(Error::Ordering {
                    index: index + 1,
                    previous: pair[0].timestamp,
                    current: pair[1].timestamp,
                });
            }
        }
        Ok(Self { records, features })
    }

    /// The default six modeled axes plus one extra metadata column.
    pub fn modeled_with_extra(records: Vec<SensorRecord>, extra: Feature) -> Result<Self> {
        let mut features = Feature::MODELED.to_vec();
        features.push(extra);
        Self::with_features(records, features)
    }

    pub fn records(&self) -> &[SensorRecord] {
        &self.records
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_records(self) -> Vec<SensorRecord> {
        self.records
    }

    pub(crate) fn records_mut(&mut self) -> &mut [SensorRecord] {
        &mut self.records
    }

    /// Contiguous sub-series sharing the feature selection.
    pub fn slice(&self, range: core::ops::Range<usize>) -> TelemetrySeries {
        TelemetrySeries {
            records: self.records[range].to_vec(),
            features: self.features.clone(),
        }
    }

    pub fn column(&self, feature: Feature) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(move |r| r.value(feature))
    }

    /// N×D matrix of the modeling features.
    pub fn feature_matrix(&self) -> Matrix {
        let cols = self.features.len();
        let mut m = Matrix::zeros(self.records.len(), cols);
        for (r, rec) in self.records.iter().enumerate() {
            for (c, f) in self.features.iter().enumerate() {
                m.set(r, c, rec.value(*f));
            }
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        self.records.iter().try_for_each(SensorRecord::validate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImputePolicy {
    ForwardFill,
    /// Interpolates linearly in time between the nearest known neighbours.
    /// Leading gaps take the first known value, trailing gaps the last.
    Linear,
}

/// Fills every missing float cell.
pub fn impute_missing(series: &TelemetrySeries, policy: ImputePolicy) -> Result<TelemetrySeries> {
    let mut out = series.clone();
    let times: Vec<i64> = series.records.iter().map(|r| r.timestamp).collect();
    for feature in Feature::FLOAT {
        let mut column: Vec<f64> = series.column(feature).collect();
        if !column.iter().any(|v| v.is_nan()) {
            continue;
        }
        match policy {
            ImputePolicy::ForwardFill => forward_fill(&mut column, feature)?,
            ImputePolicy::Linear => linear_fill(&mut column, &times, feature)?,
        }
        for (rec, v) in out.records.iter_mut().zip(column) {
            rec.set_value(feature, v)?;
        }
    }
    Ok(out)
}

fn forward_fill(column: &mut [f64], feature: Feature) -> Result<()> {
    if column.first().is_some_and(|v| v.is_nan()) {
        return Err(Error::Impute(format!(
            "{feature} is missing in the first record and has no predecessor"
        )));
    }
    for i in 1..column.len() {
        if column[i].is_nan() {
            column[i] = column[i - 1];
        }
    }
    Ok(())
}

fn linear_fill(column: &mut [f64], times: &[i64], feature: Feature) -> Result<()> {
    let known: Vec<usize> = (0..column.len()).filter(|&i| !column[i].is_nan()).collect();
    let (Some(&first), Some(&last)) = (known.first(), known.last()) else {
        return Err(Error::Impute(format!("{feature} has no known values")));
    };
    let head = column[first];
    column[..first].iter_mut().for_each(|v| *v = head);
    let tail = column[last];
    column[last + 1..].iter_mut().for_each(|v| *v = tail);
    for pair in known.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        if hi == lo + 1 {
            continue;
        }
        let (t0, t1) = (times[lo] as f64, times[hi] as f64);
        let (v0, v1) = (column[lo], column[hi]);
        for i in lo + 1..hi {
            let w = (times[i] as f64 - t0) / (t1 - t0);
            column[i] = v0 + w * (v1 - v0);
        }
    }
    Ok(())
}

/// Per-feature scaling parameters (population statistics).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Fits mean and population standard deviation per column.
    pub fn fit(data: &Matrix) -> Result<Self> {
        if data.rows() == 0 {
            return Err(Error::Input("cannot fit normalization on an empty series".into()));
        }
        let n = data.rows() as f64;
        let mut mean = Vec::with_capacity(data.cols());
        let mut std = Vec::with_capacity(data.cols());
        for c in 0..data.cols() {
            let m = data.column(c).sum::<f64>() / n;
            let var = data.column(c).map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            mean.push(m);
            std.push(libm::sqrt(var));
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, data: &Matrix) -> Result<()> {
        if data.cols() != self.dim() {
            return Err(dimension(format!(
                "normalization fitted on {} features, data has {}",
                self.dim(),
                data.cols()
            )));
        }
        Ok(())
    }

    /// Z-scores each column; near-constant columns map to zero.
    pub fn apply(&self, data: &Matrix) -> Result<Matrix> {
        self.check(data)?;
        let mut out = data.clone();
        for r in 0..data.rows() {
            for c in 0..data.cols() {
                out.set(r, c, self.scale(c, data.get(r, c)));
            }
        }
        Ok(out)
    }

    pub fn invert(&self, data: &Matrix) -> Result<Matrix> {
        self.check(data)?;
        let mut out = data.clone();
        for r in 0..data.rows() {
            for c in 0..data.cols() {
                let s = if self.std[c] < STD_EPSILON { 0.0 } else { self.std[c] };
                out.set(r, c, data.get(r, c) * s + self.mean[c]);
            }
        }
        Ok(out)
    }

    #[inline]
    fn scale(&self, col: usize, x: f64) -> f64 {
        if self.std[col] < STD_EPSILON {
            0.0
        } else {
            (x - self.mean[col]) / self.std[col]
        }
    }
}

pub fn fit_normalize(series: &TelemetrySeries) -> Result<NormStats> {
    NormStats::fit(&series.feature_matrix())
}

/// Z-scores the modeling features in place of the raw readings.
///
/// Only float columns can be rewritten; use [`NormStats::apply`] on the
/// feature matrix when the selection includes integer metadata.
pub fn apply_normalize(series: &TelemetrySeries, stats: &NormStats) -> Result<TelemetrySeries> {
    let scaled = stats.apply(&series.feature_matrix())?;
    let mut out = series.clone();
    for (r, rec) in out.records.iter_mut().enumerate() {
        for (c, f) in series.features.iter().enumerate() {
            rec.set_value(*f, scaled.get(r, c))?;
        }
    }
    Ok(out)
}

/// Train/validation/test proportions.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        for (name, r) in [("train", train), ("val", val), ("test", test)] {
            if !(r > 0.0 && r < 1.0) {
                return Err(config(format!("{name} ratio {r} must lie in (0, 1)")));
            }
        }
        if libm::fabs(train + val + test - 1.0) > 1e-9 {
            return Err(config(format!(
                "split ratios sum to {}, expected 1",
                train + val + test
            )));
        }
        Ok(Self { train, val, test })
    }

    /// Split sizes for `n` records: validation and test take
    /// `floor(n * ratio)`, the remainder goes to training.
    pub fn sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        let floor = |r: f64| libm::floor(n as f64 * r + 1e-9) as usize;
        let val = floor(self.val);
        let test = floor(self.test);
        let train = n.saturating_sub(val + test);
        if train == 0 || val == 0 || test == 0 {
            return Err(config(format!(
                "splitting {n} records as ({}, {}, {}) leaves an empty subset ({train}, {val}, {test})",
                self.train, self.val, self.test
            )));
        }
        Ok((train, val, test))
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub train: TelemetrySeries,
    pub val: TelemetrySeries,
    pub test: TelemetrySeries,
}

/// Contiguous, time-ordered split.
pub fn split(series: &TelemetrySeries, spec: &SplitSpec) -> Result<SplitResult> {
    if series.len() < 3 {
        return Err(Error::Sizing {
            required: 3,
            actual: series.len(),
        });
    }
    let (train, val, _) = spec.sizes(series.len())?;
    Ok(SplitResult {
        train: series.slice(0..train),
        val: series.slice(train..train + val),
        test: series.slice(train + val..series.len()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum WindowMode {
    /// Target is the input window itself.
    Reconstruction,
    /// Target is the `horizon` rows following the window.
    Forecast { horizon: usize },
}

impl WindowMode {
    fn lookahead(self) -> usize {
        match self {
            WindowMode::Reconstruction => 0,
            WindowMode::Forecast { horizon } => horizon,
        }
    }
}

/// Sliding windows over a feature matrix.
///
/// Windows are stored as start offsets into the shared matrix; inputs and
/// targets are contiguous row-major slices of it.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    data: Matrix,
    seq_len: usize,
    stride: usize,
    mode: WindowMode,
    starts: Vec<usize>,
}

impl WindowedDataset {
    pub fn new(data: Matrix, seq_len: usize, stride: usize, mode: WindowMode) -> Result<Self> {
        if seq_len == 0 || stride == 0 {
            return Err(config("sequence length and stride must be positive"));
        }
        if let WindowMode::Forecast { horizon: 0 } = mode {
            return Err(config("forecast horizon must be positive"));
        }
        let required = seq_len + mode.lookahead();
        let n = data.rows();
        if n < required {
            return Err(Error::Sizing {
                required,
                actual: n,
            });
        }
        let count = (n - required) / stride + 1;
        let starts = (0..count).map(|k| k * stride).collect();
        Ok(Self {
            data,
            seq_len,
            stride,
            mode,
            starts,
        })
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn mode(&self) -> WindowMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    /// Number of rows in each target.
    pub fn target_rows(&self) -> usize {
        match self.mode {
            WindowMode::Reconstruction => self.seq_len,
            WindowMode::Forecast { horizon } => horizon,
        }
    }

    /// Record index of the first target row of window `i`.
    pub fn target_start(&self, i: usize) -> usize {
        match self.mode {
            WindowMode::Reconstruction => self.starts[i],
            WindowMode::Forecast { .. } => self.starts[i] + self.seq_len,
        }
    }

    pub fn input(&self, i: usize) -> &[f64] {
        self.data.row_block(self.starts[i], self.seq_len)
    }

    pub fn target(&self, i: usize) -> &[f64] {
        self.data
            .row_block(self.target_start(i), self.target_rows())
    }
}

/// Windows the modeling features of a series.
pub fn window(
    series: &TelemetrySeries,
    seq_len: usize,
    stride: usize,
    mode: WindowMode,
) -> Result<WindowedDataset> {
    WindowedDataset::new(series.feature_matrix(), seq_len, stride, mode)
}
