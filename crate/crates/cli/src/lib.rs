//! Command-line front end: configuration, output files and the analysis
//! commands. The numerics live in `restspike-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::RunConfig;
pub use error::CliError;
