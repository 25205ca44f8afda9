//! File formats, synthetic datasets and the experiment harness around
//! [`archseg_core`].

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod io;
pub mod report;
pub mod table;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use report::MetricsReport;
