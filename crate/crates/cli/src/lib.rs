//! Batch front end: ingestion, fitting, derived sets, diagnostics and
//! bootstrap bands, all written as CSV with optional SVG renderings.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod output;

pub use commands::{run, Cli};
pub use error::{CliError, Result};
