//! Providers, evaluation harness, HTTP service and command line for the
//! intake screener in `intake-core`.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod matrix;
pub mod providers;
pub mod report;
pub mod service;

use std::time::{SystemTime, UNIX_EPOCH};

use intake_core::Timestamp;

/// Wall-clock time in milliseconds since the Unix epoch.
pub fn now() -> Timestamp {
    let ms = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
    Timestamp(ms as u64)
}
