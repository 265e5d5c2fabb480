//! Telemetry anomaly detection, forecasting, packet preference datasets and
//! tiered deployment simulation.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, configuration
//! and the command-line driver live in the `skyguard` crate.

#![no_std]

extern crate alloc;

pub mod detect;
pub mod error;
pub mod forecast;
pub mod inject;
pub mod matrix;
pub mod packetset;
pub mod predictor;
pub mod synth;
pub mod telemetry;
pub mod tiersim;

pub use error::{Error, Result};
pub use matrix::Matrix;
