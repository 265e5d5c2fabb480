//! Command-line interface. Each command writes its outputs plus
//! `manifest.json` under `--out`.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use skyguard_core::forecast::evaluate_forecast;
use skyguard_core::inject::{variance_sweep, LabeledSeries, PerturbMode, PerturbSpec, Selection};
use skyguard_core::packetset::{build_windows, extract_sessions, make_pair, render_samples, score_fields, Packet};
use skyguard_core::predictor::Persistence;
use skyguard_core::predictor::Predictor;
use skyguard_core::telemetry::{TelemetrySeries, WindowMode};
use skyguard_core::tiersim::emit_report;

use crate::config::RunConfig;
use crate::error::{config, read_to_string, Error, Result};
use crate::formats::{self, Checkpoint, MetricsFile};
use crate::manifest::{Manifest, OutputDir};
use crate::packets_csv::read_packet_log;
use crate::pipeline::{self, DetectionRun};
use crate::telemetry_csv::{self, read_labeled, read_telemetry};

#[derive(Debug, Parser)]
#[command(name = "skyguard", version, about = "UAV telemetry anomaly detection experiments")]
pub struct Cli {
    /// Run configuration (flat key=value file).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Override any config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic mission CSV.
    Generate {
        #[arg(long)]
        records: Option<usize>,
    },
    /// Parse, impute and validate a telemetry CSV.
    Ingest {
        #[arg(long)]
        input: PathBuf,
    },
    /// Inject labeled anomalies into a telemetry CSV.
    Inject {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        feature: Option<String>,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Train a predictor on the training split of a clean telemetry CSV.
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a telemetry or labeled CSV with a trained checkpoint.
    Detect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Series for the threshold losses; defaults to the input's
        /// training split, with the test split scored.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long)]
        anomaly_ratio: Option<f64>,
    },
    /// Evaluate a forecast checkpoint against persistence.
    Forecast {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
    #[command(subcommand)]
    Packetset(PacketsetCommand),
    /// Stream a labeled CSV through the detection tier.
    Simulate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        batch: Option<usize>,
    },
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Debug, Subcommand)]
pub enum PacketsetCommand {
    /// Build chosen/rejected samples from a packet log.
    Build {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        context: Option<usize>,
    },
    /// Per-field accuracy of predicted packets.
    Score {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum ExperimentCommand {
    /// Every n-th record perturbed.
    Nth {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Metrics as the injected magnitude varies.
    VarianceSweep {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Comma-separated multiples of the column's standard deviation.
        #[arg(long)]
        targets: Option<String>,
    },
    /// Anomalies at Poisson-distributed gaps.
    Poisson {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Simulated elapsed time against batch size.
    BatchSweep {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        batches: Option<String>,
    },
}

fn overrides(cmd: &Command) -> Vec<(&'static str, String)> {
    let mut o = Vec::new();
    let mut opt = |key: &'static str, v: Option<String>| {
        if let Some(v) = v {
            o.push((key, v));
        }
    };
    let s = |v: &Option<usize>| v.map(|x| x.to_string());
    let f = |v: &Option<f64>| v.map(|x| x.to_string());
    match cmd {
        Command::Generate { records } => opt("synth.records", s(records)),
        Command::Inject {
            scheme,
            n,
            fraction,
            lambda,
            feature,
            sigma,
            ..
        } => {
            opt("inject.scheme", scheme.clone());
            opt("inject.n", s(n));
            opt("inject.fraction", f(fraction));
            opt("inject.lambda", f(lambda));
            opt("inject.feature", feature.clone());
            opt("inject.sigma", f(sigma));
        }
        Command::Train { mode, epochs, .. } => {
            opt("mode", mode.clone());
            opt("epochs", s(epochs));
        }
        Command::Detect { anomaly_ratio, .. } => opt("anomaly_ratio", f(anomaly_ratio)),
        Command::Packetset(PacketsetCommand::Build { context, .. }) => opt("packets.context", s(context)),
        Command::Simulate { batch, .. } => opt("batch_size", s(batch)),
        Command::Experiment(e) => match e {
            ExperimentCommand::Nth { n, .. } => {
                opt("inject.scheme", Some("every-nth".into()));
                opt("inject.n", s(n));
            }
            ExperimentCommand::VarianceSweep { targets, .. } => opt("variance.targets", targets.clone()),
            ExperimentCommand::Poisson { lambda, .. } => {
                opt("inject.scheme", Some("poisson".into()));
                opt("inject.lambda", f(lambda));
            }
            ExperimentCommand::BatchSweep { batches, .. } => opt("batches", batches.clone()),
        },
        _ => {}
    }
    o
}

/// Config file, then `--set`, then command flags, then `--seed`.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::parse(&read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    for item in &cli.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| config(format!("--set {item:?}: expected KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    for (k, v) in overrides(&cli.command) {
        cfg.set(k, &v)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Generate { .. } => "generate",
        Command::Ingest { .. } => "ingest",
        Command::Inject { .. } => "inject",
        Command::Train { .. } => "train",
        Command::Detect { .. } => "detect",
        Command::Forecast { .. } => "forecast",
        Command::Packetset(PacketsetCommand::Build { .. }) => "packetset build",
        Command::Packetset(PacketsetCommand::Score { .. }) => "packetset score",
        Command::Simulate { .. } => "simulate",
        Command::Experiment(ExperimentCommand::Nth { .. }) => "experiment nth",
        Command::Experiment(ExperimentCommand::VarianceSweep { .. }) => "experiment variance-sweep",
        Command::Experiment(ExperimentCommand::Poisson { .. }) => "experiment poisson",
        Command::Experiment(ExperimentCommand::BatchSweep { .. }) => "experiment batch-sweep",
    }
}

/// Runs the command and returns the manifest path.
pub fn run(cli: &Cli) -> Result<PathBuf> {
    let cfg = resolve_config(cli)?;
    let mut out = OutputDir::new(&cli.out, Manifest::new(command_name(&cli.command), &cfg));
    if let Some(path) = &cli.config {
        out.manifest_mut().input(path)?;
    }
    match &cli.command {
        Command::Generate { .. } => {
            let mission = pipeline::synthetic_mission(&cfg)?;
            out.write("mission.csv", &telemetry_csv::render_telemetry(&mission))?;
        }
        Command::Ingest { input } => {
            let series = load_telemetry(&mut out, input)?;
            out.write("telemetry.csv", &telemetry_csv::render_telemetry(&series))?;
        }
        Command::Inject { input, .. } => {
            let series = load_telemetry(&mut out, input)?;
            let labeled = pipeline::inject(&series, &cfg)?;
            out.write("labeled.csv", &telemetry_csv::render_labeled(&labeled))?;
            out.write("labeled.csv.meta", &telemetry_csv::render_meta(&labeled.meta))?;
        }
        Command::Train { input, .. } => {
            let series = load_telemetry(&mut out, input)?;
            let ck = pipeline::train_model(&series, &cfg)?;
            let seg = pipeline::segments(series.len(), &cfg)?;
            let test = pipeline::windows(&ck, &series.slice(seg.test), cfg.eval_stride)?;
            out.write("checkpoint.txt", &formats::render_checkpoint(&ck))?;
            out.write("history.csv", &formats::render_history(&ck.model.history))?;
            out.write("eval_report.txt", &formats::render_eval_report(&evaluate_forecast(&ck.model, &test)?))?;
        }
        Command::Detect {
            checkpoint,
            input,
            reference,
            ..
        } => detect_command(&mut out, &cfg, checkpoint, input, reference.as_deref())?,
        Command::Forecast { checkpoint, input } => {
            let ck = load_checkpoint(&mut out, checkpoint)?;
            if ck.mode == WindowMode::Reconstruction {
                return Err(config("forecast needs a checkpoint trained with mode=forecast"));
            }
            let series = load_telemetry(&mut out, input)?;
            let seg = pipeline::segments(series.len(), &cfg)?;
            let test = pipeline::windows(&ck, &series.slice(seg.test), cfg.eval_stride)?;
            let report = evaluate_forecast(&ck.model, &test)?;
            let baseline = evaluate_forecast(&Persistence { shape: ck.model.shape() }, &test)?;
            let mut text = formats::render_eval_report(&report);
            text.push_str(&format!("persistence.mse={}\npersistence.mae={}\n", baseline.mse, baseline.mae));
            out.write("forecast_report.txt", &text)?;
        }
        Command::Packetset(PacketsetCommand::Build { input, .. }) => {
            out.manifest_mut().input(input)?;
            let events = read_packet_log(input)?;
            let sessions = extract_sessions(&events, cfg.packets_timeout);
            let mut samples = Vec::new();
            for s in &sessions {
                let packets: Vec<Packet> = s.packets().copied().collect();
                for triple in build_windows(&packets, cfg.packets_context) {
                    let seed = cfg.seed ^ (samples.len() as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
                    samples.push(make_pair(&triple, seed));
                }
            }
            out.write("samples.txt", &render_samples(&samples))?;
            out.write(
                "build_summary.txt",
                &format!("sessions={}\nsamples={}\n", sessions.len(), samples.len()),
            )?;
        }
        Command::Packetset(PacketsetCommand::Score { pred, truth }) => {
            out.manifest_mut().input(pred)?;
            out.manifest_mut().input(truth)?;
            let p: Vec<Packet> = read_packet_log(pred)?.into_iter().map(|e| e.packet).collect();
            let t: Vec<Packet> = read_packet_log(truth)?.into_iter().map(|e| e.packet).collect();
            out.write("score.txt", &score_fields(&p, &t)?.to_string())?;
        }
        Command::Simulate { checkpoint, input, .. } => {
            let ck = load_checkpoint(&mut out, checkpoint)?;
            let (series, labels) = load_any(&mut out, input)?;
            let seg = pipeline::segments(series.len(), &cfg)?;
            let threshold = pipeline::reference_threshold(&ck, &series.slice(seg.train), &cfg)?;
            let test = series.slice(seg.test.clone());
            let test_labels = labels.as_ref().map(|l| &l[seg.test.clone()]);
            let (stats, reports) =
                pipeline::simulate(&ck, &test, test_labels, seg.test.start, threshold, cfg.batch_size, &cfg)?;
            out.write("stream.json", &(serde_json::to_string_pretty(&stats).expect("stats") + "\n"))?;
            out.write("reports.jsonl", &formats::render_reports(&reports))?;
        }
        Command::Experiment(e) => experiment(&mut out, &cfg, e)?,
    }
    out.finish()
}

fn load_telemetry(out: &mut OutputDir, path: &Path) -> Result<TelemetrySeries> {
    out.manifest_mut().input(path)?;
    read_telemetry(path)
}

fn load_checkpoint(out: &mut OutputDir, path: &Path) -> Result<Checkpoint> {
    out.manifest_mut().input(path)?;
    formats::parse_checkpoint(&read_to_string(path)?).map_err(Error::in_file(path))
}

/// A telemetry or labeled CSV, told apart by the header.
fn load_any(out: &mut OutputDir, path: &Path) -> Result<(TelemetrySeries, Option<Vec<bool>>)> {
    out.manifest_mut().input(path)?;
    if telemetry_csv::is_labeled(path)? {
        let side = telemetry_csv::meta_path(path);
        if side.exists() {
            out.manifest_mut().input(&side)?;
        }
        let l = read_labeled(path)?;
        Ok((l.series, Some(l.labels)))
    } else {
        Ok((read_telemetry(path)?, None))
    }
}

fn detect_command(
    out: &mut OutputDir,
    cfg: &RunConfig,
    checkpoint: &Path,
    input: &Path,
    reference: Option<&Path>,
) -> Result<()> {
    let ck = load_checkpoint(out, checkpoint)?;
    let (series, labels) = load_any(out, input)?;
    let (reference, eval, eval_labels, offset) = match reference {
        Some(path) => (load_any(out, path)?.0, series, labels, 0),
        None => {
            let seg = pipeline::segments(series.len(), cfg)?;
            let l = labels.map(|l| l[seg.test.clone()].to_vec());
            (series.slice(seg.train), series.slice(seg.test.clone()), l, seg.test.start)
        }
    };
    let result = pipeline::detect_series(&ck, &reference, &eval, eval_labels.as_deref(), offset, cfg)?;
    write_detection(out, cfg, &ck, &eval, eval_labels.as_deref(), offset, &result)
}

/// `metrics.json` (when labeled), `records.csv` and a one-line mission
/// report stamped with the simulated completion time on the detection tier.
fn write_detection(
    out: &mut OutputDir,
    cfg: &RunConfig,
    ck: &Checkpoint,
    eval: &TelemetrySeries,
    labels: Option<&[bool]>,
    offset: usize,
    result: &skyguard_core::detect::DetectionResult,
) -> Result<()> {
    if let Some(m) = &result.metrics {
        out.write(
            "metrics.json",
            &formats::render_metrics(&MetricsFile::new(m, result.threshold, cfg.anomaly_ratio)),
        )?;
    }
    out.write("records.csv", &formats::render_records(result))?;
    let tier = pipeline::detection_tier(cfg)?;
    let (stats, _) = pipeline::simulate(ck, eval, labels, offset, result.threshold, cfg.batch_size, cfg)?;
    let report = emit_report(result, &pipeline::mission_meta(cfg, &tier), stats.elapsed_s);
    out.write("reports.jsonl", &formats::render_reports(&[report]))?;
    Ok(())
}

fn mission(out: &mut OutputDir, cfg: &RunConfig, input: &Option<PathBuf>) -> Result<TelemetrySeries> {
    match input {
        Some(path) => pipeline::ingest(&load_telemetry(out, path)?, cfg),
        None => pipeline::synthetic_mission(cfg),
    }
}

fn run_detection(out: &mut OutputDir, cfg: &RunConfig, input: &Option<PathBuf>) -> Result<(DetectionRun, LabeledSeries)> {
    let clean = mission(out, cfg, input)?;
    let injected = pipeline::inject(&clean, cfg)?;
    let run = pipeline::detection_experiment(&clean, &injected, cfg)?;
    Ok((run, injected))
}

fn experiment(out: &mut OutputDir, cfg: &RunConfig, cmd: &ExperimentCommand) -> Result<()> {
    match cmd {
        ExperimentCommand::Nth { input, .. } | ExperimentCommand::Poisson { input, .. } => {
            let (run, injected) = run_detection(out, cfg, input)?;
            let test = injected.slice(run.segments.test.clone());
            write_detection(
                out,
                cfg,
                &run.checkpoint,
                &test.series,
                Some(&test.labels),
                run.segments.test.start,
                &run.result,
            )?;
            out.write("injection.meta", &telemetry_csv::render_meta(&injected.meta))?;
        }
        ExperimentCommand::VarianceSweep { input, .. } => {
            let clean = mission(out, cfg, input)?;
            let ck = pipeline::train_model(&clean, cfg)?;
            let seg = pipeline::segments(clean.len(), cfg)?;
            let values: Vec<f64> = cfg
                .variance_targets
                .iter()
                .map(|&k| {
                    PerturbSpec {
                        feature: cfg.inject_feature,
                        mode: PerturbMode::OffsetSigma(k),
                    }
                    .target_value(&clean)
                })
                .collect();
            let rows = variance_sweep(&clean, cfg.inject_feature, &values, &Selection::EveryNth(cfg.inject_n), |l| {
                let test = l.slice(seg.test.clone());
                pipeline::detect_series(
                    &ck,
                    &l.series.slice(seg.train.clone()),
                    &test.series,
                    Some(&test.labels),
                    seg.test.start,
                    cfg,
                )
                .map_err(|e| match e {
                    Error::Core(c) => c,
                    other => skyguard_core::Error::Input(other.to_string()),
                })
            })?;
            let mut csv = String::from("sigma,value,accuracy,precision,recall,f_score,threshold\n");
            for ((value, d), k) in rows.iter().zip(&cfg.variance_targets) {
                let m = d.metrics.unwrap_or_default();
                csv.push_str(&format!(
                    "{k},{value},{},{},{},{},{}\n",
                    m.accuracy, m.precision, m.recall, m.f_score, d.threshold
                ));
            }
            out.write("variance_sweep.csv", &csv)?;
        }
        ExperimentCommand::BatchSweep { input, .. } => {
            let (run, injected) = run_detection(out, cfg, input)?;
            let test = injected.slice(run.segments.test.clone());
            let (fit, rows) = pipeline::batch_sweep(&run.checkpoint, &test, run.result.threshold, cfg)?;
            out.write("experiment.csv", &formats::render_experiment(&rows))?;
            out.write("latency_fit.txt", &formats::render_latency_fit(&fit))?;
            if let Some(m) = &run.result.metrics {
                out.write(
                    "metrics.json",
                    &formats::render_metrics(&MetricsFile::new(m, run.result.threshold, cfg.anomaly_ratio)),
                )?;
            }
        }
    }
    Ok(())
}
