//! Result and model files. Everything renders deterministically.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use skyguard_core::detect::{DetectionResult, Metrics};
use skyguard_core::forecast::{EpochLoss, EvalReport, PredictorConfig, TrainedPredictor};
use skyguard_core::telemetry::{Feature, NormStats, WindowMode};
use skyguard_core::tiersim::{AnomalyReport, LatencyFit, StreamStats};
use skyguard_core::Error as CoreError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsFile {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub threshold: f64,
    pub anomaly_ratio: f64,
    /// Ratios reported as 0 because their denominator was 0.
    pub undefined: Vec<String>,
}

impl MetricsFile {
    pub fn new(m: &Metrics, threshold: f64, anomaly_ratio: f64) -> Self {
        let undefined = [
            ("precision", m.undefined.precision),
            ("recall", m.undefined.recall),
            ("f_score", m.undefined.f_score),
        ]
        .iter()
        .filter(|(_, u)| *u)
        .map(|(n, _)| n.to_string())
        .collect();
        Self {
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f_score: m.f_score,
            tp: m.tp,
            tn: m.tn,
            fp: m.fp,
            fn_: m.fn_,
            threshold,
            anomaly_ratio,
            undefined,
        }
    }
}

pub fn render_metrics(m: &MetricsFile) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("metrics serialize");
    s.push('\n');
    s
}

/// `index,loss,predicted,truth`; `truth` is empty without labels.
pub fn render_records(d: &DetectionResult) -> String {
    let mut out = String::from("index,loss,predicted,truth\n");
    let bit = |b: bool| if b { "1" } else { "0" };
    for (k, (&i, &loss)) in d.indices.iter().zip(d.losses.as_slice()).enumerate() {
        let truth = d.ground_truth.as_ref().map_or("", |g| bit(g[k]));
        let _ = writeln!(out, "{i},{loss},{},{truth}", bit(d.predicted[k]));
    }
    out
}

pub fn render_experiment(rows: &[StreamStats]) -> String {
    let mut out = String::from("batch_size,elapsed_s,accuracy,precision,recall,f_score\n");
    for r in rows {
        let m = r.metrics.unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.batch_size, r.elapsed_s, m.accuracy, m.precision, m.recall, m.f_score
        );
    }
    out
}

/// One JSON object per line, for appending to a mission report file.
pub fn render_reports(reports: &[AnomalyReport]) -> String {
    reports
        .iter()
        .map(|r| serde_json::to_string(r).expect("report serialize") + "\n")
        .collect()
}

pub fn render_eval_report(r: &EvalReport) -> String {
    let mut out = format!("mse={}\nmae={}\n", r.mse, r.mae);
    for (k, (mse, mae)) in r.per_horizon.iter().enumerate() {
        let _ = writeln!(out, "step.{}.mse={mse}\nstep.{}.mae={mae}", k + 1, k + 1);
    }
    out
}

pub fn render_history(history: &[EpochLoss]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for (i, e) in history.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", i + 1, e.train, e.val);
    }
    out
}

pub fn render_latency_fit(fit: &LatencyFit) -> String {
    let mut out = format!(
        "a_prime={}\nb_prime={}\nmax_relative_residual={}\nbatch_size,observed_s,fitted_s\n",
        fit.a_prime,
        fit.b_prime,
        fit.max_relative_residual()
    );
    for (b, obs, fitted) in &fit.points {
        let _ = writeln!(out, "{b},{obs},{fitted}");
    }
    out
}

/// A trained model plus what is needed to apply it to raw telemetry.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub mode: WindowMode,
    pub columns: Vec<Feature>,
    pub norm: NormStats,
    pub model: TrainedPredictor,
}

const MAGIC: &str = "skyguard-checkpoint v1";

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub fn render_checkpoint(c: &Checkpoint) -> String {
    let cfg = &c.model.config;
    let mode = match c.mode {
        WindowMode::Reconstruction => "reconstruction",
        WindowMode::Forecast { .. } => "forecast",
    };
    let columns: Vec<&str> = c.columns.iter().map(|f| f.name()).collect();
    let mut out = format!("{MAGIC}\nmode={mode}\ncolumns={}\n", columns.join(","));
    let _ = write!(
        out,
        "seq_len={}\nhorizon={}\nmodel_dim={}\nfcn_dim={}\nepochs={}\nlearning_rate={}\nbatch_size={}\nseed={}\n",
        cfg.seq_len, cfg.horizon, cfg.model_dim, cfg.fcn_dim, cfg.epochs, cfg.learning_rate, cfg.batch_size, cfg.seed
    );
    let _ = writeln!(out, "norm_mean={}\nnorm_std={}", join(&c.norm.mean), join(&c.norm.std));
    for e in &c.model.history {
        let _ = writeln!(out, "epoch={},{}", e.train, e.val);
    }
    let _ = writeln!(out, "weights={}", c.model.weights.len());
    for w in &c.model.weights {
        let _ = writeln!(out, "{w}");
    }
    out
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint, CoreError> {
    let err = |line: usize, m: String| CoreError::Parse { line, message: m };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, MAGIC)) => {}
        _ => return Err(err(1, format!("expected `{MAGIC}`"))),
    }
    let mut cfg = PredictorConfig::default();
    let (mut mode, mut columns, mut mean, mut std) = (None, None, None, None);
    let mut history = Vec::new();
    let mut weights = None;
    for (n, line) in lines.by_ref() {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(n, "expected key=value".into()))?;
        let int = || value.parse::<usize>().map_err(|_| err(n, format!("{key}: bad integer")));
        let floats = || {
            value
                .split(',')
                .map(|v| v.parse::<f64>().map_err(|_| err(n, format!("{key}: bad number {v:?}"))))
                .collect::<Result<Vec<_>, _>>()
        };
        match key {
            "mode" => mode = Some(value.to_string()),
            "columns" => {
                columns = Some(
                    value
                        .split(',')
                        .map(|c| Feature::from_name(c).ok_or_else(|| err(n, format!("unknown column {c:?}"))))
                        .collect::<Result<Vec<_>, _>>()?,
                )
            }
            "seq_len" => cfg.seq_len = int()?,
            "horizon" => cfg.horizon = int()?,
            "model_dim" => cfg.model_dim = int()?,
            "fcn_dim" => cfg.fcn_dim = int()?,
            "epochs" => cfg.epochs = int()?,
            "batch_size" => cfg.batch_size = int()?,
            "learning_rate" => cfg.learning_rate = floats()?[0],
            "seed" => cfg.seed = value.parse().map_err(|_| err(n, "seed: bad integer".into()))?,
            "norm_mean" => mean = Some(floats()?),
            "norm_std" => std = Some(floats()?),
            "epoch" => match floats()?.as_slice() {
                [train, val] => history.push(EpochLoss { train: *train, val: *val }),
                _ => return Err(err(n, "epoch needs train,val".into())),
            },
            "weights" => {
                weights = Some(int()?);
                break;
            }
            other => return Err(err(n, format!("unknown key {other:?}"))),
        }
    }
    let count = weights.ok_or_else(|| err(0, "missing weights section".into()))?;
    let mut values = Vec::with_capacity(count);
    for (n, line) in lines {
        values.push(line.parse::<f64>().map_err(|_| err(n, format!("bad weight {line:?}")))?);
    }
    if values.len() != count {
        return Err(err(0, format!("expected {count} weights, found {}", values.len())));
    }
    let columns = columns.ok_or_else(|| err(0, "missing columns".into()))?;
    let mode = match mode.as_deref() {
        Some("reconstruction") => WindowMode::Reconstruction,
        Some("forecast") => WindowMode::Forecast { horizon: cfg.horizon },
        _ => return Err(err(0, "mode must be reconstruction or forecast".into())),
    };
    let norm = NormStats {
        mean: mean.ok_or_else(|| err(0, "missing norm_mean".into()))?,
        std: std.ok_or_else(|| err(0, "missing norm_std".into()))?,
    };
    if norm.mean.len() != columns.len() || norm.std.len() != columns.len() {
        return Err(err(0, "normalization width does not match columns".into()));
    }
    let model = TrainedPredictor::from_parts(cfg, columns.len(), values, history)?;
    Ok(Checkpoint {
        mode,
        columns,
        norm,
        model,
    })
}
