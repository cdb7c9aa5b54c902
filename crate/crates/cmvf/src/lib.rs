//! File formats and the command line around `cmvf-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod csvio;
pub mod error;
pub mod report;

pub use error::CliError;
