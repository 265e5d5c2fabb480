//! Seeded synthetic IMU missions for demos and tests.
//!
//! Each modeled axis is a sum of two sinusoids plus Gaussian noise. The
//! integer columns look like a 250 Hz log.

use alloc::vec::Vec;

use core::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{config, Result};
use crate::telemetry::{SensorRecord, TelemetrySeries};

#[derive(Debug, Clone, PartialEq)]
pub struct MissionSpec {
    pub records: usize,
    pub seed: u64,
    pub start_timestamp: i64,
    /// Microseconds between records.
    pub step_us: i64,
    /// Noise standard deviation as a fraction of each axis' amplitude.
    pub noise: f64,
}

impl Default for MissionSpec {
    fn default() -> Self {
        Self {
            records: 5000,
            seed: 0,
            start_timestamp: 212_000,
            step_us: 4000,
            noise: 0.1,
        }
    }
}

struct Axis {
    offset: f64,
    amplitude: f64,
    period: f64,
    phase: f64,
}

impl Axis {
    fn at(&self, t: f64) -> f64 {
        let w = TAU * t / self.period;
        self.offset + self.amplitude * (libm::sin(w + self.phase) + 0.3 * libm::sin(3.0 * w + 2.0 * self.phase))
    }
}

pub fn generate_mission(spec: &MissionSpec) -> Result<TelemetrySeries> {
    if spec.records == 0 || spec.step_us <= 0 {
        return Err(config("mission needs records > 0 and a positive step"));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(config("noise must be finite and >= 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // Offsets: gyro near zero, accel roughly level with gravity on z.
    let offsets = [0.0, 0.0, 0.0, 0.2, -0.1, -9.81];
    let amplitudes = [0.05, 0.04, 0.03, 0.6, 0.5, 0.4];
    let axes: Vec<Axis> = offsets
        .iter()
        .zip(amplitudes)
        .map(|(&offset, amplitude)| Axis {
            offset,
            amplitude,
            period: rng.random_range(40.0..120.0),
            phase: rng.random_range(0.0..TAU),
        })
        .collect();
    let noise: Vec<Normal<f64>> = amplitudes
        .iter()
        .map(|&a| Normal::new(0.0, a * spec.noise).map_err(|_| config("invalid noise scale")))
        .collect::<Result<_>>()?;
    let dt = spec.step_us;
    let mut records = Vec::with_capacity(spec.records);
    for i in 0..spec.records {
        let t = i as f64;
        let mut v = [0.0; 6];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = axes[k].at(t) + noise[k].sample(&mut rng);
        }
        records.push(SensorRecord {
            timestamp: spec.start_timestamp + i as i64 * dt,
            gyro: [v[0], v[1], v[2]],
            gyro_integral_dt: dt,
            accel_timestamp_relative: 0,
            accel: [v[3], v[4], v[5]],
            accel_integral_dt: dt,
            accel_clipping: 0,
        });
    }
    TelemetrySeries::new(records)
}

/// `x[t] = phi·x[t-1] + e[t]`, `e ~ N(0, sigma²)`, started from the
/// stationary distribution.
pub fn ar1(n: usize, phi: f64, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    if !(phi.abs() < 1.0 && sigma > 0.0 && sigma.is_finite()) {
        return Err(config("AR(1) needs |phi| < 1 and sigma > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).map_err(|_| config("invalid sigma"))?;
    let stationary = Normal::new(0.0, sigma / libm::sqrt(1.0 - phi * phi)).map_err(|_| config("invalid sigma"))?;
    let mut out = Vec::with_capacity(n);
    let mut x = stationary.sample(&mut rng);
    for _ in 0..n {
        out.push(x);
        x = phi * x + noise.sample(&mut rng);
    }
    Ok(out)
}
