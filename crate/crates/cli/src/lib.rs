//! Configuration ingestion, check orchestration, and report emission for the
//! `slantlab` command-line tool.

pub mod config;
pub mod emit;
pub mod report;
pub mod runner;

pub use config::{ConfigError, RunConfig};
pub use report::{Report, ReportEntry};
pub use runner::run_catalog;
