//! Labeled anomaly injection.
//!
//! Every scheme takes a clean series and returns a [`LabeledSeries`] whose
//! labels mark exactly the rewritten records. All randomness comes from a
//! seeded ChaCha stream, so output is a pure function of
//! `(input, parameters, seed)`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{config, Error, Result};
use crate::telemetry::{Feature, TelemetrySeries};

/// Scheme name and parameters that reproduce an injection.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InjectionMeta {
    pub scheme: String,
    pub params: Vec<(String, String)>,
    pub seed: Option<u64>,
}

impl InjectionMeta {
    fn new(scheme: &str, seed: Option<u64>) -> Self {
        Self {
            scheme: scheme.into(),
            params: Vec::new(),
            seed,
        }
    }

    fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.push((key.into(), value.to_string()));
        self
    }

    fn perturb(self, spec: &PerturbSpec) -> Self {
        let this = self.param("feature", spec.feature);
        match spec.mode {
            PerturbMode::SetValue(v) => this.param("mode", "set-value").param("value", v),
            PerturbMode::OffsetSigma(k) => this.param("mode", "offset-sigma").param("k", k),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// A series with per-record ground-truth anomaly labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    pub series: TelemetrySeries,
    pub labels: Vec<bool>,
    pub meta: InjectionMeta,
}

impl LabeledSeries {
    pub fn new(series: TelemetrySeries, labels: Vec<bool>, meta: InjectionMeta) -> Result<Self> {
        if labels.len() != series.len() {
            return Err(Error::Dimension(format!(
                "{} labels for {} records",
                labels.len(),
                series.len()
            )));
        }
        Ok(Self {
            series,
            labels,
            meta,
        })
    }

    pub fn anomaly_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// Percentage of records labeled anomalous.
    pub fn anomaly_percent(&self) -> f64 {
        if self.labels.is_empty() {
            0.0
        } else {
            100.0 * self.anomaly_count() as f64 / self.labels.len() as f64
        }
    }

    pub fn slice(&self, range: core::ops::Range<usize>) -> LabeledSeries {
        LabeledSeries {
            series: self.series.slice(range.clone()),
            labels: self.labels[range].to_vec(),
            meta: self.meta.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PerturbMode {
    /// Overwrite with a fixed value.
    SetValue(f64),
    /// Overwrite with `mean + k * std` of the clean column.
    OffsetSigma(f64),
}

/// How an anomalous reading is produced.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PerturbSpec {
    pub feature: Feature,
    pub mode: PerturbMode,
}

impl Default for PerturbSpec {
    fn default() -> Self {
        Self {
            feature: Feature::Accel2,
            mode: PerturbMode::OffsetSigma(6.0),
        }
    }
}

impl PerturbSpec {
    fn validate(&self) -> Result<()> {
        if !self.feature.is_float() {
            return Err(config(format!(
                "cannot perturb integer column {}",
                self.feature
            )));
        }
        let value = match self.mode {
            PerturbMode::SetValue(v) | PerturbMode::OffsetSigma(v) => v,
        };
        if !value.is_finite() {
            return Err(config("perturbation parameter must be finite"));
        }
        Ok(())
    }

    /// The replacement value for this series.
    pub fn target_value(&self, series: &TelemetrySeries) -> f64 {
        match self.mode {
            PerturbMode::SetValue(v) => v,
            PerturbMode::OffsetSigma(k) => {
                let n = series.len().max(1) as f64;
                let mean = series.column(self.feature).sum::<f64>() / n;
                let var = series
                    .column(self.feature)
                    .map(|x| (x - mean) * (x - mean))
                    .sum::<f64>()
                    / n;
                mean + k * libm::sqrt(var)
            }
        }
    }
}

fn rewrite(
    series: &TelemetrySeries,
    feature: Feature,
    value: f64,
    labels: Vec<bool>,
    meta: InjectionMeta,
) -> Result<LabeledSeries> {
    let mut out = series.clone();
    for (rec, &hit) in out.records_mut().iter_mut().zip(&labels) {
        if hit {
            rec.set_value(feature, value)?;
        }
    }
    LabeledSeries::new(out, labels, meta)
}

/// Marks records at 1-based positions `n, 2n, 3n, …`.
pub fn inject_every_nth(series: &TelemetrySeries, n: usize, spec: &PerturbSpec) -> Result<LabeledSeries> {
    if n < 2 {
        return Err(config(format!("every-nth period must be at least 2, got {n}")));
    }
    spec.validate()?;
    let labels = (0..series.len()).map(|i| (i + 1) % n == 0).collect();
    let meta = InjectionMeta::new("every-nth", None).param("n", n).perturb(spec);
    rewrite(series, spec.feature, spec.target_value(series), labels, meta)
}

/// Perturbs exactly `round(fraction * N)` distinct records chosen uniformly.
pub fn inject_random(
    series: &TelemetrySeries,
    fraction: f64,
    spec: &PerturbSpec,
    seed: u64,
) -> Result<LabeledSeries> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(config(format!("fraction {fraction} must lie in (0, 1)")));
    }
    spec.validate()?;
    let n = series.len();
    let count = libm::round(fraction * n as f64) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = vec![false; n];
    for i in rand::seq::index::sample(&mut rng, n, count) {
        labels[i] = true;
    }
    let meta = InjectionMeta::new("random", Some(seed))
        .param("fraction", fraction)
        .perturb(spec);
    rewrite(series, spec.feature, spec.target_value(series), labels, meta)
}

/// Perturbs each record independently with probability `probability`.
pub fn inject_bernoulli(
    series: &TelemetrySeries,
    probability: f64,
    spec: &PerturbSpec,
    seed: u64,
) -> Result<LabeledSeries> {
    if !(probability > 0.0 && probability < 1.0) {
        return Err(config(format!("probability {probability} must lie in (0, 1)")));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = (0..series.len())
        .map(|_| rng.random_bool(probability))
        .collect();
    let meta = InjectionMeta::new("bernoulli", Some(seed))
        .param("probability", probability)
        .perturb(spec);
    rewrite(series, spec.feature, spec.target_value(series), labels, meta)
}

/// Which records a fixed-value injection rewrites.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    EveryNth(usize),
    /// Records flagged in an existing label vector.
    Mask(Vec<bool>),
}

/// Sets `feature` to `target_value` on the selected records.
///
/// Labels follow the selection even where the old value already equals the
/// target.
pub fn inject_variance(
    series: &TelemetrySeries,
    feature: Feature,
    target_value: f64,
    selection: &Selection,
) -> Result<LabeledSeries> {
    let spec = PerturbSpec {
        feature,
        mode: PerturbMode::SetValue(target_value),
    };
    spec.validate()?;
    let (labels, meta) = match selection {
        Selection::EveryNth(n) => {
            if *n == 0 {
                return Err(config("every-nth period must be positive"));
            }
            let labels: Vec<bool> = (0..series.len()).map(|i| (i + 1) % n == 0).collect();
            (labels, InjectionMeta::new("variance", None).param("n", n))
        }
        Selection::Mask(mask) => {
            if mask.len() != series.len() {
                return Err(Error::Dimension(format!(
                    "selection mask has {} entries for {} records",
                    mask.len(),
                    series.len()
                )));
            }
            (mask.clone(), InjectionMeta::new("variance", None).param("selection", "mask"))
        }
    };
    if !labels.iter().any(|&l| l) {
        return Err(config("variance injection selected no records"));
    }
    rewrite(series, feature, target_value, labels, meta.perturb(&spec))
}

/// Runs [`inject_variance`] once per target value and scores each result
/// with `score`, returning one `(target, score)` row per value.
pub fn variance_sweep<T, F>(
    series: &TelemetrySeries,
    feature: Feature,
    targets: &[f64],
    selection: &Selection,
    mut score: F,
) -> Result<Vec<(f64, T)>>
where
    F: FnMut(&LabeledSeries) -> Result<T>,
{
    targets
        .iter()
        .map(|&t| {
            let labeled = inject_variance(series, feature, t, selection)?;
            Ok((t, score(&labeled)?))
        })
        .collect()
}

/// Places anomalies with gaps drawn from `Poisson(lambda) + 1`.
pub fn inject_poisson(
    series: &TelemetrySeries,
    lambda: f64,
    spec: &PerturbSpec,
    seed: u64,
) -> Result<LabeledSeries> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(config(format!("poisson rate {lambda} must be positive")));
    }
    spec.validate()?;
    let labels = poisson_positions(series.len(), lambda, seed)?;
    let meta = InjectionMeta::new("poisson", Some(seed))
        .param("lambda", lambda)
        .perturb(spec);
    rewrite(series, spec.feature, spec.target_value(series), labels, meta)
}

fn poisson_positions(n: usize, lambda: f64, seed: u64) -> Result<Vec<bool>> {
    let dist = Poisson::new(lambda).map_err(|e| config(format!("poisson rate {lambda}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = vec![false; n];
    // First anomaly at gap - 1 (0-based), then one gap after each.
    let mut next = 0usize;
    loop {
        let gap: f64 = dist.sample(&mut rng);
        next += gap as usize + 1;
        if next > n {
            break;
        }
        labels[next - 1] = true;
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::SensorRecord;

    fn series(n: usize) -> TelemetrySeries {
        let records = (0..n)
            .map(|i| {
                let x = i as f64;
                SensorRecord {
                    timestamp: 212_000 + 4000 * i as i64,
                    gyro: [libm::sin(x * 0.1), 0.0, 0.0],
                    gyro_integral_dt: 4000,
                    accel_timestamp_relative: 0,
                    accel: [0.0, 0.0, -9.8 + 0.01 * libm::cos(x * 0.3)],
                    accel_integral_dt: 4000,
                    accel_clipping: 0,
                }
            })
            .collect();
        TelemetrySeries::new(records).unwrap()
    }

    #[test]
    fn every_nth_positions() {
        let out = inject_every_nth(&series(10), 5, &PerturbSpec::default()).unwrap();
        let hits: Vec<usize> = (0..10).filter(|&i| out.labels[i]).map(|i| i + 1).collect();
        assert_eq!(hits, vec![5, 10]);
    }

    #[test]
    fn every_nth_fifth_of_records() {
        let out = inject_every_nth(&series(1000), 5, &PerturbSpec::default()).unwrap();
        assert_eq!(out.anomaly_count(), 200);
        assert_eq!(out.anomaly_percent(), 20.0);
    }

    #[test]
    fn every_nth_longer_than_series() {
        let out = inject_every_nth(&series(4), 5, &PerturbSpec::default()).unwrap();
        assert!(out.labels.iter().all(|l| !l));
        assert_eq!(out.series, series(4));
    }

    #[test]
    fn every_nth_rejects_bad_config() {
        assert!(matches!(
            inject_every_nth(&series(4), 1, &PerturbSpec::default()),
            Err(Error::Config(_))
        ));
        let spec = PerturbSpec {
            feature: Feature::AccelClipping,
            mode: PerturbMode::SetValue(1.0),
        };
        assert!(matches!(
            inject_every_nth(&series(4), 2, &spec),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn offset_sigma_value() {
        let s = series(100);
        let spec = PerturbSpec::default();
        let v = spec.target_value(&s);
        let out = inject_every_nth(&s, 5, &spec).unwrap();
        assert_eq!(out.series.records()[4].accel[2], v);
        let col: Vec<f64> = s.column(Feature::Accel2).collect();
        let mean = col.iter().sum::<f64>() / 100.0;
        let std = libm::sqrt(col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 100.0);
        assert!((v - (mean + 6.0 * std)).abs() < 1e-12);
        assert!(col.iter().all(|&x| x < v));
    }

    #[test]
    fn random_exact_count_and_determinism() {
        let s = series(4);
        let a = inject_random(&s, 0.5, &PerturbSpec::default(), 7).unwrap();
        assert_eq!(a.anomaly_count(), 2);
        let b = inject_random(&s, 0.5, &PerturbSpec::default(), 7).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            inject_random(&s, 1.0, &PerturbSpec::default(), 7),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn random_selection_is_uniform() {
        let s = series(100);
        let mut hits = [0usize; 100];
        for seed in 0..1000 {
            let out = inject_random(&s, 0.2, &PerturbSpec::default(), seed).unwrap();
            for (h, &l) in hits.iter_mut().zip(&out.labels) {
                *h += l as usize;
            }
        }
        for h in hits {
            let freq = h as f64 / 1000.0;
            assert!((freq - 0.2).abs() <= 0.05, "frequency {freq}");
        }
    }

    #[test]
    fn bernoulli_is_seeded() {
        let s = series(500);
        let a = inject_bernoulli(&s, 0.2, &PerturbSpec::default(), 3).unwrap();
        let b = inject_bernoulli(&s, 0.2, &PerturbSpec::default(), 3).unwrap();
        assert_eq!(a, b);
        assert!((a.anomaly_percent() - 20.0).abs() < 6.0);
    }

    #[test]
    fn variance_sets_target() {
        let s = series(20);
        let out = inject_variance(&s, Feature::Accel2, -8.5, &Selection::EveryNth(5)).unwrap();
        for (rec, &l) in out.series.records().iter().zip(&out.labels) {
            if l {
                assert_eq!(rec.accel[2], -8.5);
            }
        }
        assert_eq!(out.anomaly_count(), 4);
    }

    #[test]
    fn variance_labels_follow_selection() {
        let s = series(5);
        let current = s.records()[2].gyro[0];
        let mask = vec![false, false, true, false, false];
        let out = inject_variance(&s, Feature::Gyro0, current, &Selection::Mask(mask)).unwrap();
        assert!(out.labels[2]);
        assert_eq!(out.series, s);
    }

    #[test]
    fn variance_empty_selection_rejected() {
        let s = series(4);
        assert!(matches!(
            inject_variance(&s, Feature::Accel2, -8.5, &Selection::EveryNth(5)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            inject_variance(&s, Feature::Accel2, -8.5, &Selection::Mask(vec![false; 4])),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn variance_sweep_rows() {
        let s = series(20);
        let rows = variance_sweep(&s, Feature::Accel2, &[-8.0, -8.5, -9.0], &Selection::EveryNth(5), |l| {
            Ok(l.anomaly_count())
        })
        .unwrap();
        assert_eq!(rows, vec![(-8.0, 4), (-8.5, 4), (-9.0, 4)]);
    }

    #[test]
    fn poisson_determinism_and_edges() {
        let s = series(300);
        let a = inject_poisson(&s, 2.0, &PerturbSpec::default(), 11).unwrap();
        let b = inject_poisson(&s, 2.0, &PerturbSpec::default(), 11).unwrap();
        assert_eq!(a, b);
        let empty = inject_poisson(&series(0), 2.0, &PerturbSpec::default(), 1).unwrap();
        assert!(empty.labels.is_empty());
        assert!(matches!(
            inject_poisson(&s, 0.0, &PerturbSpec::default(), 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn poisson_density() {
        let n = 21_579;
        let s = series(n);
        for seed in 0..5 {
            let out = inject_poisson(&s, 2.0, &PerturbSpec::default(), seed).unwrap();
            let expected = n as f64 / 3.0;
            let bound = 3.0 * libm::sqrt(n as f64);
            assert!((out.anomaly_count() as f64 - expected).abs() <= bound);
        }
    }

    #[test]
    fn meta_records_parameters() {
        let out = inject_poisson(&series(10), 2.0, &PerturbSpec::default(), 9).unwrap();
        assert_eq!(out.meta.scheme, "poisson");
        assert_eq!(out.meta.seed, Some(9));
        assert_eq!(out.meta.get("lambda"), Some("2"));
        assert_eq!(out.meta.get("feature"), Some("accelerometer_m_s2_2"));
    }
}
