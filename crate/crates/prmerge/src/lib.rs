//! Pull-request acceptance prediction: data ingestion, file formats,
//! synthetic corpora and the `prmerge` command line.

pub mod activity_io;
pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod matrix_io;
pub mod model_io;
pub mod report_io;
pub mod synth;

pub use error::{Error, Result};
pub use prmerge_core as core;
