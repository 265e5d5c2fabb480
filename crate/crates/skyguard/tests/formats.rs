use proptest::prelude::*;

use skyguard::formats::{parse_checkpoint, render_checkpoint, Checkpoint};
use skyguard::packets_csv::{parse_packet_log, render_packet_log};
use skyguard::telemetry_csv::{parse_labeled, parse_meta, parse_telemetry, render_labeled, render_telemetry};
use skyguard::RunConfig;
use skyguard_core::inject::InjectionMeta;
use skyguard_core::packetset::{Packet, PacketEvent, TcpFlags};
use skyguard_core::telemetry::{SensorRecord, TelemetrySeries, MISSING};

fn reading() -> impl Strategy<Value = f64> {
    prop_oneof![
        9 => -1e6f64..1e6,
        1 => Just(MISSING),
    ]
}

fn records() -> impl Strategy<Value = Vec<SensorRecord>> {
    prop::collection::vec(
        (1i64..10_000, prop::array::uniform6(reading()), 1i64..10_000, any::<i32>(), any::<u32>()),
        1..40,
    )
    .prop_map(|rows| {
        let mut t = 0i64;
        rows.into_iter()
            .map(|(step, v, dt, rel, clip)| {
                t += step;
                SensorRecord {
                    timestamp: t,
                    gyro: [v[0], v[1], v[2]],
                    gyro_integral_dt: dt,
                    accel_timestamp_relative: rel as i64,
                    accel: [v[3], v[4], v[5]],
                    accel_integral_dt: dt,
                    accel_clipping: clip,
                }
            })
            .collect()
    })
}

fn same(a: &SensorRecord, b: &SensorRecord) -> bool {
    let eq = |x: f64, y: f64| x == y || (x.is_nan() && y.is_nan());
    a.timestamp == b.timestamp
        && a.gyro.iter().zip(&b.gyro).all(|(x, y)| eq(*x, *y))
        && a.accel.iter().zip(&b.accel).all(|(x, y)| eq(*x, *y))
        && (a.gyro_integral_dt, a.accel_timestamp_relative, a.accel_integral_dt, a.accel_clipping)
            == (b.gyro_integral_dt, b.accel_timestamp_relative, b.accel_integral_dt, b.accel_clipping)
}

proptest! {
    #[test]
    fn telemetry_csv_round_trip(recs in records()) {
        let series = TelemetrySeries::new(recs).unwrap();
        let text = render_telemetry(&series);
        let back = parse_telemetry(text.as_bytes()).unwrap();
        prop_assert_eq!(back.len(), series.len());
        for (a, b) in series.records().iter().zip(back.records()) {
            prop_assert!(same(a, b), "{:?} vs {:?}", a, b);
        }
        prop_assert_eq!(render_telemetry(&back), text);
    }

    #[test]
    fn labeled_csv_round_trip(recs in records(), seed in any::<u64>()) {
        let labels: Vec<bool> = (0..recs.len()).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
        let series = TelemetrySeries::new(recs).unwrap();
        let meta = InjectionMeta { scheme: "random".into(), params: vec![("fraction".into(), "0.2".into())], seed: Some(seed) };
        let labeled = skyguard_core::inject::LabeledSeries::new(series, labels.clone(), meta.clone()).unwrap();
        let text = render_labeled(&labeled);
        let back = parse_labeled(text.as_bytes(), meta).unwrap();
        prop_assert_eq!(back.labels, labels);
        prop_assert_eq!(render_labeled(&labeled), text);
    }

    #[test]
    fn packet_log_round_trip(rows in prop::collection::vec((0u32..1_000_000, any::<u16>(), any::<u16>(), 0u8..=255, any::<u32>(), any::<u32>(), any::<u32>()), 0..30)) {
        let events: Vec<PacketEvent> = rows.iter().map(|&(ts, sport, dport, bits, seq, ack, length)| {
            let flags: String = "FSRPAUEC".chars().enumerate().filter(|(i, _)| bits & (1 << i) != 0).map(|(_, c)| c).collect();
            PacketEvent {
                timestamp: ts as f64 / 1000.0,
                src: "10.0.0.1".into(),
                dst: "10.0.0.2".into(),
                packet: Packet { sport, dport, flags: TcpFlags::parse(&flags).unwrap(), seq, ack, length },
            }
        }).collect();
        let text = render_packet_log(&events);
        prop_assert_eq!(parse_packet_log(text.as_bytes()).unwrap(), events);
    }
}

#[test]
fn missing_integer_cell_is_an_error() {
    let text = "timestamp,gyro_rad_0,gyro_rad_1,gyro_rad_2,gyro_integral_dt,accelerometer_timestamp_relative,accelerometer_m_s2_0,accelerometer_m_s2_1,accelerometer_m_s2_2,accelerometer_integral_dt,accelerometer_clipping\n\
                1,0,0,0,,0,0,0,0,4000,0\n";
    let err = parse_telemetry(text.as_bytes()).unwrap_err();
    assert!(err.to_string().contains("gyro_integral_dt"), "{err}");
}

#[test]
fn meta_requires_scheme() {
    assert!(parse_meta("seed=1\n").is_err());
}

#[test]
fn trained_checkpoint_round_trip() {
    let cfg = RunConfig {
        synth_records: 400,
        epochs: 1,
        ..RunConfig::default()
    };
    let clean = skyguard::pipeline::synthetic_mission(&cfg).unwrap();
    let ck: Checkpoint = skyguard::pipeline::train_model(&clean, &cfg).unwrap();
    let text = render_checkpoint(&ck);
    assert_eq!(parse_checkpoint(&text).unwrap(), ck);
    assert_eq!(render_checkpoint(&parse_checkpoint(&text).unwrap()), text);
}
