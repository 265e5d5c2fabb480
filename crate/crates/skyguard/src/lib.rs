//! File formats, experiment pipelines and the `skyguard` command line on
//! top of [`skyguard_core`].

pub mod cli;
pub mod config;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod packets_csv;
pub mod pipeline;
pub mod telemetry_csv;

pub use config::RunConfig;
pub use error::{Error, Result};
