//! The end-to-end recipes shared by the CLI and the integration tests.
//!
//! Detection experiments train on the clean training split, take the
//! threshold from losses on the injected training split, and score the
//! injected test split. Record indices in results refer to the whole
//! mission.

use std::ops::Range;

use skyguard_core::detect::{self, percentile_threshold, record_losses, DetectConfig, DetectionResult, LossVector};
use skyguard_core::forecast::{init_predictor, train};
use skyguard_core::inject::{self, LabeledSeries};
use skyguard_core::synth::{generate_mission, MissionSpec};
use skyguard_core::telemetry::{apply_normalize, fit_normalize, impute_missing, window, TelemetrySeries, WindowedDataset};
use skyguard_core::tiersim::{
    fit_latency_model, place, run_batch_experiment, simulate_stream, AnomalyReport, LatencyFit, LatencyModel,
    MissionMeta, StreamDetector, StreamStats, TaskClass, Tier,
};

use crate::config::{InjectScheme, RunConfig};
use crate::error::{config, Result};
use crate::formats::Checkpoint;

pub fn synthetic_mission(cfg: &RunConfig) -> Result<TelemetrySeries> {
    Ok(generate_mission(&MissionSpec {
        records: cfg.synth_records,
        seed: cfg.seed,
        noise: cfg.synth_noise,
        ..MissionSpec::default()
    })?)
}

/// Imputes missing readings and checks every record.
pub fn ingest(series: &TelemetrySeries, cfg: &RunConfig) -> Result<TelemetrySeries> {
    let out = impute_missing(series, cfg.impute)?;
    out.validate()?;
    Ok(out)
}

pub fn inject(series: &TelemetrySeries, cfg: &RunConfig) -> Result<LabeledSeries> {
    let spec = cfg.perturb();
    Ok(match cfg.inject_scheme {
        InjectScheme::EveryNth => inject::inject_every_nth(series, cfg.inject_n, &spec)?,
        InjectScheme::Random => inject::inject_random(series, cfg.inject_fraction, &spec, cfg.seed)?,
        InjectScheme::Bernoulli => inject::inject_bernoulli(series, cfg.inject_fraction, &spec, cfg.seed)?,
        InjectScheme::Poisson => inject::inject_poisson(series, cfg.inject_lambda, &spec, cfg.seed)?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segments {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

pub fn segments(n: usize, cfg: &RunConfig) -> Result<Segments> {
    let (tr, va, _) = cfg.split.sizes(n)?;
    Ok(Segments {
        train: 0..tr,
        val: tr..tr + va,
        test: tr + va..n,
    })
}

/// Normalizes with the checkpoint's statistics and windows in its mode.
pub fn windows(ck: &Checkpoint, series: &TelemetrySeries, stride: usize) -> Result<WindowedDataset> {
    if series.features() != ck.columns.as_slice() {
        return Err(config("series columns do not match the checkpoint"));
    }
    let normalized = apply_normalize(series, &ck.norm)?;
    Ok(window(&normalized, ck.model.config.seq_len, stride, ck.mode)?)
}

/// Fits normalization on the training split of `clean` and trains there,
/// validating on the validation split.
pub fn train_model(clean: &TelemetrySeries, cfg: &RunConfig) -> Result<Checkpoint> {
    let seg = segments(clean.len(), cfg)?;
    let train_part = clean.slice(seg.train);
    let norm = fit_normalize(&train_part)?;
    let model = init_predictor(cfg.predictor()?, clean.features().len())?;
    let mut ck = Checkpoint {
        mode: cfg.window_mode(),
        columns: clean.features().to_vec(),
        norm,
        model,
    };
    let tr = windows(&ck, &train_part, cfg.train_stride)?;
    let va = windows(&ck, &clean.slice(seg.val), cfg.train_stride)?;
    ck.model = train(&ck.model, &tr, &va)?;
    Ok(ck)
}

fn shift(mut d: DetectionResult, offset: usize) -> DetectionResult {
    for i in &mut d.indices {
        *i += offset;
    }
    d
}

/// Scores `eval` with a threshold drawn from `reference` losses (per the
/// configured source). `labels` are indexed by `eval` record; `offset` is
/// added to the reported indices.
pub fn detect_series(
    ck: &Checkpoint,
    reference: &TelemetrySeries,
    eval: &TelemetrySeries,
    labels: Option<&[bool]>,
    offset: usize,
    cfg: &RunConfig,
) -> Result<DetectionResult> {
    let (_, ref_losses) = record_losses(&ck.model, &windows(ck, reference, cfg.eval_stride)?)?;
    let eval_windows = windows(ck, eval, cfg.eval_stride)?;
    let dc = DetectConfig {
        anomaly_ratio: cfg.ratio()?,
        threshold_source: cfg.threshold_source,
    };
    Ok(shift(detect::detect(&ck.model, &eval_windows, labels, &ref_losses, &dc)?, offset))
}

pub struct DetectionRun {
    pub checkpoint: Checkpoint,
    pub result: DetectionResult,
    pub segments: Segments,
}

/// Train on clean data, detect on the injected test split.
pub fn detection_experiment(clean: &TelemetrySeries, injected: &LabeledSeries, cfg: &RunConfig) -> Result<DetectionRun> {
    let checkpoint = train_model(clean, cfg)?;
    let seg = segments(clean.len(), cfg)?;
    let test = injected.slice(seg.test.clone());
    let result = detect_series(
        &checkpoint,
        &injected.series.slice(seg.train.clone()),
        &test.series,
        Some(&test.labels),
        seg.test.start,
        cfg,
    )?;
    Ok(DetectionRun {
        checkpoint,
        result,
        segments: seg,
    })
}

pub fn detection_tier(cfg: &RunConfig) -> Result<Tier> {
    Ok(place(TaskClass::Detection, &cfg.policy, &cfg.tier_set()?)?)
}

/// Fits the reference timings and calibrates per-item costs on `tier`.
pub fn latency(cfg: &RunConfig, tier: &Tier) -> Result<(LatencyFit, LatencyModel)> {
    let fit = fit_latency_model(&cfg.latency_table)?;
    let model = LatencyModel::calibrate(&fit, cfg.latency_records, tier)?;
    Ok((fit, model))
}

pub fn mission_meta(cfg: &RunConfig, tier: &Tier) -> MissionMeta {
    MissionMeta {
        mission_id: cfg.mission_id.clone(),
        tier: tier.name,
    }
}

/// Streams `series` through the detection tier at one batch size with a
/// fixed threshold. Report ranges are shifted by `offset`.
pub fn simulate(
    ck: &Checkpoint,
    series: &TelemetrySeries,
    labels: Option<&[bool]>,
    offset: usize,
    threshold: f64,
    batch_size: usize,
    cfg: &RunConfig,
) -> Result<(StreamStats, Vec<AnomalyReport>)> {
    let tier = detection_tier(cfg)?;
    let (_, model) = latency(cfg, &tier)?;
    let data = windows(ck, series, cfg.eval_stride)?;
    let detector = StreamDetector {
        predictor: &ck.model,
        threshold,
        anomaly_ratio: cfg.ratio()?,
    };
    let (stats, mut reports) =
        simulate_stream(&data, labels, &detector, &tier, batch_size, &model, &mission_meta(cfg, &tier))?;
    for r in &mut reports {
        for range in &mut r.ranges {
            range.0 += offset;
            range.1 += offset;
        }
    }
    Ok((stats, reports))
}

pub fn batch_sweep(
    ck: &Checkpoint,
    test: &LabeledSeries,
    threshold: f64,
    cfg: &RunConfig,
) -> Result<(LatencyFit, Vec<StreamStats>)> {
    let tier = detection_tier(cfg)?;
    let (fit, model) = latency(cfg, &tier)?;
    let data = windows(ck, &test.series, cfg.eval_stride)?;
    let detector = StreamDetector {
        predictor: &ck.model,
        threshold,
        anomaly_ratio: cfg.ratio()?,
    };
    let rows = run_batch_experiment(
        &data,
        Some(&test.labels),
        &detector,
        &tier,
        &cfg.batches,
        &model,
        &mission_meta(cfg, &tier),
    )?;
    Ok((fit, rows))
}

/// Threshold from the reference losses alone, for callers that stream
/// without a full detection pass.
pub fn reference_threshold(ck: &Checkpoint, reference: &TelemetrySeries, cfg: &RunConfig) -> Result<f64> {
    let (_, losses): (_, LossVector) = record_losses(&ck.model, &windows(ck, reference, cfg.eval_stride)?)?;
    Ok(percentile_threshold(&losses, cfg.ratio()?)?)
}
