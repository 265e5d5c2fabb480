use skyguard_core::detect::{detect, record_losses, AnomalyRatio, DetectConfig, ThresholdSource};
use skyguard_core::forecast::{init_predictor, train, PredictorConfig};
use skyguard_core::inject::{inject_every_nth, PerturbSpec};
use skyguard_core::synth::{generate_mission, MissionSpec};
use skyguard_core::telemetry::{apply_normalize, fit_normalize, split, window, SplitSpec, WindowMode};

// Train on clean data, threshold on the injected training split, score the
// injected test split.
#[test]
fn every_fifth_spikes_are_separable() {
    let mission = generate_mission(&MissionSpec {
        records: 10_000,
        seed: 1,
        ..MissionSpec::default()
    })
    .unwrap();
    let injected = inject_every_nth(&mission, 5, &PerturbSpec::default()).unwrap();
    let spec = SplitSpec::default();
    let clean = split(&mission, &spec).unwrap();
    let stats = fit_normalize(&clean.train).unwrap();
    let (ntr, nva, _) = spec.sizes(mission.len()).unwrap();
    let norm = |s| apply_normalize(s, &stats).unwrap();
    let recon = WindowMode::Reconstruction;
    let l = 16;
    let tr = window(&norm(&clean.train), l, 4, recon).unwrap();
    let va = window(&norm(&clean.val), l, 4, recon).unwrap();
    let cfg = PredictorConfig {
        seq_len: l,
        horizon: l,
        fcn_dim: 32,
        epochs: 5,
        batch_size: 32,
        seed: 3,
        ..PredictorConfig::default()
    };
    let model = train(&init_predictor(cfg, 6).unwrap(), &tr, &va).unwrap();

    let inj_train = injected.slice(0..ntr);
    let inj_test = injected.slice(ntr + nva..mission.len());
    let (_, train_losses) = record_losses(&model, &window(&norm(&inj_train.series), l, 1, recon).unwrap()).unwrap();
    let test = window(&norm(&inj_test.series), l, 1, recon).unwrap();
    let cfg = DetectConfig {
        anomaly_ratio: AnomalyRatio::new(20.0).unwrap(),
        threshold_source: ThresholdSource::Train,
    };
    let m = detect(&model, &test, Some(&inj_test.labels), &train_losses, &cfg)
        .unwrap()
        .metrics
        .unwrap();
    assert!(m.precision >= 0.95, "{m:?}");
    assert!(m.recall >= 0.95, "{m:?}");
}
