//! Core of the pull-request acceptance toolkit.
//!
//! Everything here is pure computation over in-memory data and builds without
//! `std` (an allocator is required):
//!
//! - [`pr`]: pull-request records, the 30-day acceptance label and PR age.
//! - [`activity`]: point-in-time author activity snapshots.
//! - [`features`]: leak-free construction of the fourteen model predictors.
//! - [`forest`]: a CART random forest with importance, partial dependence,
//!   grid search and recursive feature elimination.
//! - [`metrics`]: ROC/AUC, confusion matrix, kappa and train/test splits.
//!
//! File formats, the REST client and the command line live in the `prmerge`
//! crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod activity;
mod error;
pub mod features;
pub mod forest;
pub mod matrix;
pub mod metrics;
pub mod pr;
pub mod seed;

pub use error::Error;
pub use matrix::Matrix;

pub type Result<T, E = Error> = core::result::Result<T, E>;
