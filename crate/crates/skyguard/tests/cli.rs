use std::path::Path;
use std::process::{Command, Output};

fn skyguard(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skyguard"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let missing = skyguard(&["ingest", "--input", "does/not/exist.csv"], &out);
    assert_eq!(missing.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&missing.stderr);
    assert_eq!(stderr.lines().count(), 1, "{stderr}");

    assert_eq!(skyguard(&["generate", "--set", "nope=1"], &out).status.code(), Some(3));
    assert_eq!(skyguard(&["generate", "--set", "split=0.9,0.2,0.1"], &out).status.code(), Some(3));
    assert_eq!(skyguard(&["generate", "--records"], &out).status.code(), Some(3));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "timestamp\n1\n").unwrap();
    assert_eq!(skyguard(&["ingest", "--input", bad.to_str().unwrap()], &out).status.code(), Some(4));
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# small mission\nsynth.records=300\nseed=4\n").unwrap();
    let out = dir.path().join("gen");
    let o = skyguard(&["generate", "--config", cfg.to_str().unwrap(), "--records", "250"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(out.join("mission.csv")).lines().count(), 251);
    let manifest: serde_json::Value = serde_json::from_str(&read(out.join("manifest.json"))).unwrap();
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["config"]["synth.records"], "250");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 1);
    assert_eq!(manifest["outputs"][0]["path"], "mission.csv");
}

#[test]
fn packetset_build_and_self_score() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("packets.csv");
    let mut text = String::from("timestamp,src,dst,sport,dport,flags,seq,ack,length\n");
    for i in 0..6u32 {
        let (src, dst, sport, dport) = if i % 2 == 0 {
            ("10.0.0.1", "10.0.0.2", 14550, 5760)
        } else {
            ("10.0.0.2", "10.0.0.1", 5760, 14550)
        };
        text.push_str(&format!("{i},{src},{dst},{sport},{dport},PA,{},{},{}\n", 1000 + i, 2000 + i, 40 + i));
    }
    std::fs::write(&log, text).unwrap();

    let build = dir.path().join("build");
    let o = skyguard(&["packetset", "build", "--input", log.to_str().unwrap(), "--context", "2"], &build);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(build.join("build_summary.txt")), "sessions=1\nsamples=3\n");
    let samples = skyguard_core::packetset::parse_samples(&read(build.join("samples.txt"))).unwrap();
    assert_eq!(samples.len(), 3);
    assert_eq!(samples[0].context.len(), 2);

    let score = dir.path().join("score");
    let p = log.to_str().unwrap();
    assert!(skyguard(&["packetset", "score", "--pred", p, "--truth", p], &score).status.success());
    let report = read(score.join("score.txt"));
    for field in ["sport", "dport", "flags", "seq", "ack", "length"] {
        assert!(report.contains(&format!("{field}: 100.00")), "{report}");
    }
    assert!(report.contains("0 errors: 100.00"), "{report}");
}

#[test]
fn batch_sweep_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = skyguard(
        &["experiment", "batch-sweep", "--batches", "4,8,16,32,64,128", "--set", "synth.records=3000"],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(out.join("experiment.csv"));
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    let elapsed: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(elapsed.windows(2).all(|w| w[1] < w[0]), "{elapsed:?}");
    assert!(rows.iter().all(|r| r[2..] == rows[0][2..]));
    assert!(read(out.join("latency_fit.txt")).starts_with("a_prime="));
}

#[test]
fn train_detect_simulate_chain() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let s = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    assert!(skyguard(&["generate", "--records", "3000"], &p("g")).status.success());
    assert!(skyguard(&["inject", "--input", &s("g/mission.csv"), "--n", "5"], &p("i")).status.success());
    assert!(read(p("i/labeled.csv.meta")).starts_with("scheme=every-nth\n"));
    let o = skyguard(&["train", "--input", &s("g/mission.csv"), "--epochs", "8"], &p("t"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(p("t/history.csv")).lines().count(), 9);

    let ck = s("t/checkpoint.txt");
    let o = skyguard(&["detect", "--checkpoint", &ck, "--input", &s("i/labeled.csv")], &p("d"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: serde_json::Value = serde_json::from_str(&read(p("d/metrics.json"))).unwrap();
    assert!(m["recall"].as_f64().unwrap() > 0.9, "{m}");
    let records = read(p("d/records.csv"));
    assert!(records.starts_with("index,loss,predicted,truth\n2400,"), "{}", &records[..60]);

    let o = skyguard(&["simulate", "--checkpoint", &ck, "--input", &s("i/labeled.csv"), "--batch", "16"], &p("s"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stats: serde_json::Value = serde_json::from_str(&read(p("s/stream.json"))).unwrap();
    assert_eq!(stats["batch_size"], 16);
    let reports = read(p("s/reports.jsonl"));
    let first: serde_json::Value = serde_json::from_str(reports.lines().next().unwrap()).unwrap();
    assert_eq!(first["tier"], "edge");

    // Unlabeled input still scores, without metrics.
    let o = skyguard(&["detect", "--checkpoint", &ck, "--input", &s("g/mission.csv")], &p("u"));
    assert!(o.status.success());
    assert!(!p("u/metrics.json").exists());
    assert!(read(p("u/records.csv")).lines().nth(1).unwrap().ends_with(','));
}

#[test]
fn forecast_against_persistence() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let s = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    assert!(skyguard(&["generate", "--records", "2000"], &p("g")).status.success());
    let o = skyguard(
        &["train", "--input", &s("g/mission.csv"), "--mode", "forecast", "--set", "horizon=4", "--set", "seq_len=8"],
        &p("t"),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = skyguard(&["forecast", "--checkpoint", &s("t/checkpoint.txt"), "--input", &s("g/mission.csv")], &p("f"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read(p("f/forecast_report.txt"));
    assert!(report.contains("step.4.mse="));
    assert!(report.contains("persistence.mse="));
}
