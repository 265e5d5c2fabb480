//! Flat `key=value` run configuration.
//!
//! Blank lines and `#` comments are ignored; unknown keys are errors. Every
//! value can also be overridden from the command line, and [`RunConfig::render`]
//! echoes the effective configuration in a fixed key order.

use std::fmt::Display;
use std::str::FromStr;

use skyguard_core::detect::{AnomalyRatio, ThresholdSource};
use skyguard_core::forecast::PredictorConfig;
use skyguard_core::inject::{PerturbMode, PerturbSpec};
use skyguard_core::telemetry::{Feature, ImputePolicy, SplitSpec, WindowMode};
use skyguard_core::tiersim::{PlacementPolicy, TaskClass, Tier, TierName, TierSet};

use crate::error::{config, Result};

/// Published batch-size timings (seconds) used to calibrate the simulator.
pub const REFERENCE_TIMINGS: [(usize, f64); 6] =
    [(4, 61.92), (8, 34.30), (16, 18.22), (32, 12.72), (64, 10.90), (128, 9.08)];

/// Test-set size the reference timings were measured on.
pub const REFERENCE_RECORDS: usize = 21_579;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InjectScheme {
    EveryNth,
    Random,
    Bernoulli,
    Poisson,
}

impl InjectScheme {
    fn as_str(self) -> &'static str {
        match self {
            InjectScheme::EveryNth => "every-nth",
            InjectScheme::Random => "random",
            InjectScheme::Bernoulli => "bernoulli",
            InjectScheme::Poisson => "poisson",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub mission_id: String,
    pub synth_records: usize,
    pub synth_noise: f64,
    pub impute: ImputePolicy,
    pub split: SplitSpec,
    pub forecast: bool,
    pub seq_len: usize,
    pub horizon: usize,
    pub model_dim: usize,
    pub fcn_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub train_stride: usize,
    pub eval_stride: usize,
    pub anomaly_ratio: f64,
    pub threshold_source: ThresholdSource,
    pub inject_scheme: InjectScheme,
    pub inject_n: usize,
    pub inject_fraction: f64,
    pub inject_lambda: f64,
    pub inject_feature: Feature,
    pub inject_sigma: f64,
    pub inject_value: Option<f64>,
    pub variance_targets: Vec<f64>,
    pub batches: Vec<usize>,
    pub latency_table: Vec<(usize, f64)>,
    pub latency_records: usize,
    pub policy: PlacementPolicy,
    pub tiers: [(f64, f64); 3],
    pub packets_context: usize,
    pub packets_timeout: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TierSet::default();
        let tier = |n| {
            let x: &Tier = t.get(n);
            (x.compute_factor, x.link_latency_ms)
        };
        Self {
            seed: 0,
            mission_id: "mission-0".into(),
            synth_records: 20_000,
            synth_noise: 0.1,
            impute: ImputePolicy::Linear,
            split: SplitSpec::default(),
            forecast: false,
            seq_len: 16,
            horizon: 1,
            model_dim: 64,
            fcn_dim: 32,
            epochs: 5,
            learning_rate: 0.02,
            batch_size: 32,
            train_stride: 4,
            eval_stride: 1,
            anomaly_ratio: 20.0,
            threshold_source: ThresholdSource::Train,
            inject_scheme: InjectScheme::EveryNth,
            inject_n: 5,
            inject_fraction: 0.2,
            inject_lambda: 2.0,
            inject_feature: Feature::Accel2,
            inject_sigma: 6.0,
            inject_value: None,
            variance_targets: vec![0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 8.0],
            batches: vec![4, 8, 16, 32, 64, 128],
            latency_table: REFERENCE_TIMINGS.to_vec(),
            latency_records: REFERENCE_RECORDS,
            policy: PlacementPolicy::default(),
            tiers: [tier(TierName::Onboard), tier(TierName::Edge), tier(TierName::Cloud)],
            packets_context: 2,
            packets_timeout: 60.0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| config(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    let items: Vec<T> = value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(config(format!("{key}: empty list")));
    }
    Ok(items)
}

fn list<T: Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

const TASKS: [(&str, TaskClass); 4] = [
    ("policy.inference", TaskClass::Inference),
    ("policy.detection", TaskClass::Detection),
    ("policy.forecasting", TaskClass::Forecasting),
    ("policy.finetuning", TaskClass::Finetuning),
];

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config(format!("line {}: expected key=value", i + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| config(format!("line {}: {}", i + 1, e.to_string().trim_start_matches("config: "))))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "mission_id" => self.mission_id = value.to_string(),
            "synth.records" => self.synth_records = parse(key, value)?,
            "synth.noise" => self.synth_noise = parse(key, value)?,
            "impute" => {
                self.impute = match value {
                    "linear" => ImputePolicy::Linear,
                    "ffill" => ImputePolicy::ForwardFill,
                    _ => return Err(config("impute: expected linear or ffill")),
                }
            }
            "split" => match parse_list::<f64>(key, value)?.as_slice() {
                &[a, b, c] => self.split = SplitSpec::new(a, b, c)?,
                _ => return Err(config("split: expected three ratios")),
            },
            "mode" => {
                self.forecast = match value {
                    "reconstruction" => false,
                    "forecast" => true,
                    _ => return Err(config("mode: expected reconstruction or forecast")),
                }
            }
            "seq_len" => self.seq_len = parse(key, value)?,
            "horizon" => self.horizon = parse(key, value)?,
            "model_dim" => self.model_dim = parse(key, value)?,
            "fcn_dim" => self.fcn_dim = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "learning_rate" => self.learning_rate = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "train_stride" => self.train_stride = parse(key, value)?,
            "eval_stride" => self.eval_stride = parse(key, value)?,
            "anomaly_ratio" => self.anomaly_ratio = parse(key, value)?,
            "threshold_source" => {
                self.threshold_source = match value {
                    "train" => ThresholdSource::Train,
                    "pooled" => ThresholdSource::Pooled,
                    "eval" => ThresholdSource::Eval,
                    _ => return Err(config("threshold_source: expected train, pooled or eval")),
                }
            }
            "inject.scheme" => {
                self.inject_scheme = [
                    InjectScheme::EveryNth,
                    InjectScheme::Random,
                    InjectScheme::Bernoulli,
                    InjectScheme::Poisson,
                ]
                .into_iter()
                .find(|s| s.as_str() == value)
                .ok_or_else(|| config("inject.scheme: expected every-nth, random, bernoulli or poisson"))?
            }
            "inject.n" => self.inject_n = parse(key, value)?,
            "inject.fraction" => self.inject_fraction = parse(key, value)?,
            "inject.lambda" => self.inject_lambda = parse(key, value)?,
            "inject.feature" => {
                self.inject_feature =
                    Feature::from_name(value).ok_or_else(|| config(format!("inject.feature: unknown column {value:?}")))?
            }
            "inject.sigma" => self.inject_sigma = parse(key, value)?,
            "inject.value" => {
                self.inject_value = if value.is_empty() { None } else { Some(parse(key, value)?) }
            }
            "variance.targets" => self.variance_targets = parse_list(key, value)?,
            "batches" => self.batches = parse_list(key, value)?,
            "latency.table" => {
                self.latency_table = value
                    .split(',')
                    .map(|pair| {
                        let (b, t) = pair
                            .split_once(':')
                            .ok_or_else(|| config("latency.table: expected batch:seconds pairs"))?;
                        Ok((parse(key, b)?, parse(key, t)?))
                    })
                    .collect::<Result<_>>()?
            }
            "latency.records" => self.latency_records = parse(key, value)?,
            "packets.context" => self.packets_context = parse(key, value)?,
            "packets.timeout" => self.packets_timeout = parse(key, value)?,
            _ => {
                if let Some(&(_, task)) = TASKS.iter().find(|(k, _)| *k == key) {
                    let tier = TierName::parse(value)
                        .ok_or_else(|| config(format!("{key}: expected onboard, edge or cloud")))?;
                    self.policy.0.insert(task, tier);
                } else if let Some((tier, field)) = key.strip_prefix("tier.").and_then(|r| r.split_once('.')) {
                    let slot = TierName::parse(tier).ok_or_else(|| config(format!("unknown tier in {key}")))? as usize;
                    match field {
                        "factor" => self.tiers[slot].0 = parse(key, value)?,
                        "latency_ms" => self.tiers[slot].1 = parse(key, value)?,
                        _ => return Err(config(format!("unknown key {key:?}"))),
                    }
                } else {
                    return Err(config(format!("unknown key {key:?}")));
                }
            }
        }
        Ok(())
    }

    /// `(key, value)` pairs in canonical order; parsing the rendered text
    /// gives back an equal config.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut e: Vec<(String, String)> = Vec::new();
        let mut put = |k: &str, v: String| e.push((k.to_string(), v));
        put("seed", self.seed.to_string());
        put("mission_id", self.mission_id.clone());
        put("synth.records", self.synth_records.to_string());
        put("synth.noise", self.synth_noise.to_string());
        put(
            "impute",
            match self.impute {
                ImputePolicy::Linear => "linear",
                ImputePolicy::ForwardFill => "ffill",
            }
            .into(),
        );
        put("split", list(&[self.split.train, self.split.val, self.split.test]));
        put("mode", if self.forecast { "forecast" } else { "reconstruction" }.into());
        put("seq_len", self.seq_len.to_string());
        put("horizon", self.horizon.to_string());
        put("model_dim", self.model_dim.to_string());
        put("fcn_dim", self.fcn_dim.to_string());
        put("epochs", self.epochs.to_string());
        put("learning_rate", self.learning_rate.to_string());
        put("batch_size", self.batch_size.to_string());
        put("train_stride", self.train_stride.to_string());
        put("eval_stride", self.eval_stride.to_string());
        put("anomaly_ratio", self.anomaly_ratio.to_string());
        put(
            "threshold_source",
            match self.threshold_source {
                ThresholdSource::Train => "train",
                ThresholdSource::Pooled => "pooled",
                ThresholdSource::Eval => "eval",
            }
            .into(),
        );
        put("inject.scheme", self.inject_scheme.as_str().into());
        put("inject.n", self.inject_n.to_string());
        put("inject.fraction", self.inject_fraction.to_string());
        put("inject.lambda", self.inject_lambda.to_string());
        put("inject.feature", self.inject_feature.name().into());
        put("inject.sigma", self.inject_sigma.to_string());
        put("inject.value", self.inject_value.map(|v| v.to_string()).unwrap_or_default());
        put("variance.targets", list(&self.variance_targets));
        put("batches", list(&self.batches));
        put(
            "latency.table",
            self.latency_table
                .iter()
                .map(|(b, t)| format!("{b}:{t}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        put("latency.records", self.latency_records.to_string());
        for (key, task) in TASKS {
            let tier = self.policy.0.get(&task).map(|t| t.as_str()).unwrap_or("");
            put(key, tier.into());
        }
        for name in TierName::ALL {
            let (factor, latency) = self.tiers[name as usize];
            put(&format!("tier.{name}.factor"), factor.to_string());
            put(&format!("tier.{name}.latency_ms"), latency.to_string());
        }
        put("packets.context", self.packets_context.to_string());
        put("packets.timeout", self.packets_timeout.to_string());
        e
    }

    pub fn render(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn predictor(&self) -> Result<PredictorConfig> {
        let cfg = PredictorConfig {
            seq_len: self.seq_len,
            horizon: if self.forecast { self.horizon } else { self.seq_len },
            model_dim: self.model_dim,
            fcn_dim: self.fcn_dim,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn window_mode(&self) -> WindowMode {
        if self.forecast {
            WindowMode::Forecast { horizon: self.horizon }
        } else {
            WindowMode::Reconstruction
        }
    }

    pub fn ratio(&self) -> Result<AnomalyRatio> {
        Ok(AnomalyRatio::new(self.anomaly_ratio)?)
    }

    pub fn perturb(&self) -> PerturbSpec {
        PerturbSpec {
            feature: self.inject_feature,
            mode: match self.inject_value {
                Some(v) => PerturbMode::SetValue(v),
                None => PerturbMode::OffsetSigma(self.inject_sigma),
            },
        }
    }

    pub fn tier_set(&self) -> Result<TierSet> {
        let defaults = TierSet::default();
        let tier = |name: TierName| {
            let (compute_factor, link_latency_ms) = self.tiers[name as usize];
            Tier {
                compute_factor,
                link_latency_ms,
                ..*defaults.get(name)
            }
        };
        Ok(TierSet::new(tier(TierName::Onboard), tier(TierName::Edge), tier(TierName::Cloud))?)
    }
}
