//! Binary-classification random forest built from CART trees.
//!
//! Trees split on Gini impurity with `mtry` candidate features drawn per node
//! and are grown on bootstrap samples. Each tree draws from its own RNG stream
//! (`seed` + tree index), so a forest with more trees extends a smaller one
//! without changing the trees they share.

mod cv;
mod importance;
mod model;
mod pdp;
mod split;
mod tree;

pub use cv::{cross_val_predict, rfcv, stratified_folds, tune, GridPoint, RfcvPoint, TuneResult};
pub use importance::{importance, ImportanceReport};
pub use model::{fingerprint, fit, ForestModel, ForestParams};
pub use pdp::{partial_dependence, quantile_grid, PartialDependenceCurve, GRID_QUANTILES, PD_EPSILON};
pub use split::{best_split, gini, Split};
pub use tree::{Node, Tree};
