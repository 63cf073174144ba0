//! Configuration, data formats and subcommands of the `dkf-bench` tool.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;

pub use config::{RunConfig, Source};
pub use error::{CliError, Result};
