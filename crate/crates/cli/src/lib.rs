//! Command-line driver: mixing, separation, comparison, device demo and Monte Carlo.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod report;

pub use cli::{run, Cli};
pub use config::RunConfig;
pub use error::CliError;
