//! Command-line driver: configuration, checkpoints, the commands and the
//! system comparison experiment.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod experiment;

pub use commands::{run, Cli};
