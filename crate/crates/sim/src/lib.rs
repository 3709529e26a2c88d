//! Simulation harness: KL grids against quadrature, seeded synthetic
//! series, filter runs, and (ω₁, ω₂) coverage scans, with CSV and JSON
//! reports.

pub mod config;
pub mod filter;
pub mod kl_grid;
pub mod report;
pub mod scan;
pub mod series;

use thiserror::Error;
use uhgf_core::network::NetworkError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("cannot parse config file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self::Config(msg.into())
    }
}

pub use filter::{compare, run_filter, CompareSummary, FilterRun, FilterSummary};
pub use kl_grid::{run_kl_grid, KlGridConfig, KlGridReport};
pub use scan::{run_param_scan, ScanConfig, ScanReport};
pub use series::{generate_series, Series, SeriesSpec};
