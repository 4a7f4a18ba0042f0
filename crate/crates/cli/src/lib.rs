//! Configuration, CSV exchange and the end-to-end pipeline behind the `balfuse` binary.

pub mod checks;
pub mod config;
pub mod error;
pub mod montecarlo;
pub mod pipeline;
pub mod report;
pub mod table;

pub use config::{preset, RunConfig};
pub use error::CliError;
pub use pipeline::{run_pipeline, run_subcommand, Subcommand};
pub use report::{Check, RunReport};
