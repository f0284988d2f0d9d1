//! Command-line front end for the `forcecheck` binary: dataset files,
//! config files, the `gen`, `online` and `grid` commands and their outputs.

pub mod args;
pub mod commands;
pub mod config;
pub mod dataset;
mod error;
pub mod grid;
pub mod report;

pub use error::{CliError, Result};
