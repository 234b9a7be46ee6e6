//! Command-line pipeline around `hedonic-core`: CSV ingestion, TOML
//! configuration, report rendering and the end-to-end run.

pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod report;

pub use config::PipelineConfig;
pub use error::CliError;
pub use pipeline::run_pipeline;
pub use report::{Format, Report};
