//! Command-line pipeline around `chartkit`: config handling, the stage
//! runner, SVG scatter plots and the metric report table.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod svg;

pub use config::PipelineConfig;
pub use error::CliError;
pub use pipeline::{Command, Pipeline};
