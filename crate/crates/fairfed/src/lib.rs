//! Std companion to `fairfed-core`: experiment configs, file formats, a
//! threaded client executor and the `fairfed` command line.

pub mod commands;
pub mod config;
pub mod error;
pub mod executor;
pub mod io;
pub mod runner;

pub use config::{default_benchmark, ExperimentConfig};
pub use error::{CliError, Result};
