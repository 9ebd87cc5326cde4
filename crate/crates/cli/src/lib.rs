//! Library side of the `isofuse` command-line tool.

pub mod commands;
pub mod error;
pub mod ingest;

pub use error::CliError;
pub use ingest::{ingest_csv, ingest_reader, Input};
