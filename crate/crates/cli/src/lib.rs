//! Command-line front end: TOML configuration, CSV metrics and the four
//! subcommands.

pub mod commands;
pub mod config;
pub mod metrics;

pub use commands::{CliError, CliResult};
pub use config::{ConfigError, RunConfig};
