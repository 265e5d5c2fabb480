//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines always show in `cargo test` output.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skyguard::config::{RunConfig, REFERENCE_TIMINGS};
use skyguard::pipeline;
use skyguard_core::detect::{evaluate, flag, percentile_threshold, AnomalyRatio, LossVector};
use skyguard_core::forecast::{evaluate_forecast, gradient_check, init_predictor, train, PredictorConfig};
use skyguard_core::inject::{inject_every_nth, inject_poisson, PerturbSpec};
use skyguard_core::packetset::{
    make_pair, parse_sample, render_sample, score_fields, Packet, TcpFlags, Triple, FLAG_ALPHABET,
};
use skyguard_core::predictor::{Persistence, Predictor};
use skyguard_core::synth::{ar1, generate_mission, MissionSpec};
use skyguard_core::telemetry::{NormStats, WindowMode, WindowedDataset};
use skyguard_core::tiersim::fit_latency_model;
use skyguard_core::Matrix;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(id: u32, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let elapsed = start.elapsed();
    let (mut ok, mut detail) = match outcome {
        Ok(d) => (true, d),
        Err(d) => (false, d),
    };
    if let Some(b) = budget {
        if elapsed > b {
            ok = false;
            detail = format!("{detail}; over the {b:?} budget");
        }
    }
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("{verdict} [{id}] {name}: {detail} ({:.2}s)", elapsed.as_secs_f64());
    ok
}

fn threshold_law() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let ratios = [0.5, 1.0, 5.0, 10.0, 25.0];
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=10_000usize);
        // Distinct values: a shuffled ladder with random spacing.
        let mut values: Vec<f64> = Vec::with_capacity(n);
        let mut x = 0.0;
        for _ in 0..n {
            x += rng.random_range(0.001..1.0);
            values.push(x);
        }
        values.shuffle(&mut rng);
        let losses = LossVector::new(values).unwrap();
        for a in ratios {
            let t = percentile_threshold(&losses, AnomalyRatio::new(a).unwrap()).unwrap();
            let flagged = flag(&losses, t).iter().filter(|&&f| f).count() as f64;
            let err = (flagged / n as f64 - a / 100.0).abs() * n as f64;
            worst = worst.max(err);
            ensure(err <= 1.0 + 1e-9, || format!("N={n} A={a}: flagged {flagged}"))?;
        }
    }
    Ok(format!("5000 cases, worst deviation {worst:.3}/N"))
}

fn metrics_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..1000 {
        let n = rng.random_range(1..=500);
        let p: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        let g: Vec<bool> = (0..n).map(|_| rng.random_bool(0.3)).collect();
        let m = evaluate(&p, &g).unwrap();
        let (mut tp, mut tn, mut fp, mut fn_) = (0usize, 0usize, 0usize, 0usize);
        for i in 0..n {
            match (p[i], g[i]) {
                (true, true) => tp += 1,
                (false, false) => tn += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
            }
        }
        let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let (precision, recall) = (div(tp, tp + fp), div(tp, tp + fn_));
        let f = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        let expected = (tp, tn, fp, fn_, div(tp + tn, n), precision, recall, f);
        let got = (m.tp, m.tn, m.fp, m.fn_, m.accuracy, m.precision, m.recall, m.f_score);
        ensure(got == expected, || format!("case {case}: {got:?} != {expected:?}"))?;
    }
    Ok("1000 random label pairs match exactly".into())
}

fn separable_detection() -> Check {
    let cfg = RunConfig::default();
    let clean = pipeline::synthetic_mission(&cfg).map_err(|e| e.to_string())?;
    ensure(clean.len() == 20_000, || "mission size".into())?;
    let injected = inject_every_nth(&clean, 5, &PerturbSpec::default()).map_err(|e| e.to_string())?;
    let run = pipeline::detection_experiment(&clean, &injected, &cfg).map_err(|e| e.to_string())?;
    let m = run.result.metrics.ok_or("no metrics")?;
    let detail = format!("precision {:.4}, recall {:.4} at A=20", m.precision, m.recall);
    ensure(m.precision >= 0.95 && m.recall >= 0.95, || detail.clone())?;
    Ok(detail)
}

fn injection_counts() -> Check {
    let mission = generate_mission(&MissionSpec {
        records: 10_000,
        ..MissionSpec::default()
    })
    .map_err(|e| e.to_string())?;
    let spec = PerturbSpec::default();
    for n in 2..=10 {
        for len in 1..=1000 {
            let l = inject_every_nth(&mission.slice(0..len), n, &spec).map_err(|e| e.to_string())?;
            ensure(l.anomaly_count() == len / n, || format!("N={len} n={n}: {}", l.anomaly_count()))?;
        }
    }
    let mut gaps = Vec::new();
    for seed in 0..100 {
        let l = inject_poisson(&mission, 2.0, &spec, seed).map_err(|e| e.to_string())?;
        let mut prev: Option<usize> = None;
        for (i, _) in l.labels.iter().enumerate().filter(|(_, &x)| x) {
            gaps.push(prev.map_or(i + 1, |p| i - p) as f64);
            prev = Some(i);
        }
    }
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    ensure((mean - 3.0).abs() <= 0.1, || format!("poisson mean gap {mean}"))?;
    Ok(format!("every-nth exact for 9000 (N, n); poisson mean gap {mean:.4}"))
}

fn forecaster_soundness() -> Check {
    let (l, h) = (4, 16);
    let xs = ar1(2000, 0.9, 0.1, 0).map_err(|e| e.to_string())?;
    let (tr, rest) = xs.split_at(1400);
    let (va, te) = rest.split_at(200);
    let stats = NormStats::fit(&Matrix::from_vec(tr.len(), 1, tr.to_vec()).unwrap()).unwrap();
    let ds = |v: &[f64]| {
        let z: Vec<f64> = v.iter().map(|x| (x - stats.mean[0]) / stats.std[0]).collect();
        WindowedDataset::new(Matrix::from_vec(z.len(), 1, z).unwrap(), l, 1, WindowMode::Forecast { horizon: h })
            .unwrap()
    };
    let cfg = PredictorConfig {
        seq_len: l,
        horizon: h,
        epochs: 30,
        batch_size: 32,
        seed: 5,
        ..PredictorConfig::default()
    };
    let init = init_predictor(cfg, 1).map_err(|e| e.to_string())?;
    let test = ds(te);
    let mut grad_err = 0.0f64;
    for i in 0..5 {
        grad_err = grad_err.max(gradient_check(&init, (test.input(i), test.target(i)), 300, i as u64));
    }
    ensure(grad_err < 1e-4, || format!("gradient check error {grad_err:e}"))?;
    let model = train(&init, &ds(tr), &ds(va)).map_err(|e| e.to_string())?;
    let mse = evaluate_forecast(&model, &test).unwrap().mse;
    let base = evaluate_forecast(&Persistence { shape: model.shape() }, &test).unwrap().mse;
    let gain = 1.0 - mse / base;
    let detail = format!("gradient error {grad_err:.1e}; {h}-step MSE {mse:.4} vs persistence {base:.4} ({:.1}% better)", gain * 100.0);
    ensure(gain >= 0.2, || detail.clone())?;
    Ok(detail)
}

fn batch_table() -> Check {
    let fit = fit_latency_model(&REFERENCE_TIMINGS).map_err(|e| e.to_string())?;
    let worst = fit.max_relative_residual();
    ensure(worst < 0.2, || format!("max relative residual {worst}"))?;
    let cfg = RunConfig {
        synth_records: 4000,
        ..RunConfig::default()
    };
    let clean = pipeline::synthetic_mission(&cfg).map_err(|e| e.to_string())?;
    let injected = pipeline::inject(&clean, &cfg).map_err(|e| e.to_string())?;
    let run = pipeline::detection_experiment(&clean, &injected, &cfg).map_err(|e| e.to_string())?;
    let test = injected.slice(run.segments.test.clone());
    let (_, rows) = pipeline::batch_sweep(&run.checkpoint, &test, run.result.threshold, &cfg).map_err(|e| e.to_string())?;
    ensure(rows.len() == 6, || format!("{} rows", rows.len()))?;
    for w in rows.windows(2) {
        ensure(w[1].elapsed_s < w[0].elapsed_s, || {
            format!("elapsed not decreasing: B={} {} -> B={} {}", w[0].batch_size, w[0].elapsed_s, w[1].batch_size, w[1].elapsed_s)
        })?;
        ensure(w[1].metrics == w[0].metrics, || "metrics differ across batch sizes".into())?;
    }
    ensure(rows[0].metrics == run.result.metrics, || "stream metrics differ from batch detection".into())?;
    Ok(format!(
        "a'={:.4} b'={:.4}, max residual {:.1}%; elapsed {:.3}s (B=4) -> {:.3}s (B=128), metrics identical",
        fit.a_prime,
        fit.b_prime,
        worst * 100.0,
        rows[0].elapsed_s,
        rows[5].elapsed_s
    ))
}

fn random_packet(rng: &mut ChaCha8Rng) -> Packet {
    let bits: u8 = rng.random();
    let flags: String = FLAG_ALPHABET
        .chars()
        .enumerate()
        .filter(|(i, _)| bits & (1 << i) != 0)
        .map(|(_, c)| c)
        .collect();
    Packet {
        sport: rng.random(),
        dport: rng.random(),
        flags: TcpFlags::parse(&flags).unwrap(),
        seq: rng.random(),
        ack: rng.random(),
        length: rng.random_range(0..1500),
    }
}

fn packet_pairs() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut truth = Vec::new();
    for seed in 0..10_000u64 {
        let n = rng.random_range(0..4);
        let triple = Triple {
            context: (0..n).map(|_| random_packet(&mut rng)).collect(),
            prompt: random_packet(&mut rng),
            next: random_packet(&mut rng),
        };
        let s = make_pair(&triple, seed);
        let diff = s.rejected.diff(&s.chosen);
        ensure(diff == [s.perturbed_field], || format!("seed {seed}: differing fields {diff:?}"))?;
        let text = render_sample(&s);
        let back = parse_sample(&text).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(back == s, || format!("seed {seed}: round trip changed the sample"))?;
        truth.push(s.chosen);
    }
    let report = score_fields(&truth, &truth).map_err(|e| e.to_string())?;
    ensure(report.accuracy == [100.0; 6], || format!("{:?}", report.accuracy))?;
    ensure(report.error_histogram == [100.0, 0.0, 0.0, 0.0, 0.0], || format!("{:?}", report.error_histogram))?;
    let text = report.to_string();
    for row in ["sport:", "dport:", "flags:", "seq:", "ack:", "length:", "0 errors:", "4+ errors:"] {
        ensure(text.contains(row), || format!("report lacks {row}"))?;
    }
    Ok("10000 pairs differ in exactly one field and round-trip; self-score 100.00".into())
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn end_to_end_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_skyguard"))
            .args(["experiment", "nth", "--n", "5", "--seed", "42", "--out"])
            .arg(&out)
            .status()
            .map_err(|e| e.to_string())?;
        ensure(status.success(), || format!("exit status {status}"))?;
        trees.push(read_tree(&out));
    }
    ensure(!trees[0].is_empty(), || "no outputs".into())?;
    ensure(trees[0] == trees[1], || "outputs differ between runs".into())?;
    let names: Vec<&str> = trees[0].iter().map(|(n, _)| n.as_str()).collect();
    Ok(format!("{} files byte-identical: {}", names.len(), names.join(", ")))
}

fn main() {
    // Respect libtest-style filtering/listing flags passed by cargo.
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let secs = |s| Some(Duration::from_secs(s));
    let results = [
        run(1, "threshold law", secs(10), threshold_law),
        run(2, "metrics oracle", secs(1), metrics_oracle),
        run(3, "separable detection", secs(60), separable_detection),
        run(4, "injection counts", None, injection_counts),
        run(5, "forecaster soundness", secs(30), forecaster_soundness),
        run(6, "batch-size table", secs(5), batch_table),
        run(7, "packet pair integrity", secs(10), packet_pairs),
        run(8, "end-to-end determinism", None, end_to_end_determinism),
    ];
    let passed = results.iter().filter(|&&r| r).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
