use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tree::{grow, GrowParams, Tree};
use crate::{seed, Error, Matrix, Result};

/// Forest hyperparameters.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ForestParams {
    pub ntree: usize,
    /// Candidate features sampled at each split.
    pub mtry: usize,
    /// Minimum rows in a terminal node.
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
    /// Grow each tree on a bootstrap sample rather than on all rows.
    pub bootstrap: bool,
    pub seed: u64,
}

impl ForestParams {
    pub fn new(ntree: usize, mtry: usize, seed: u64) -> Self {
        Self {
            ntree,
            mtry,
            min_node_size: 1,
            max_depth: None,
            bootstrap: true,
            seed,
        }
    }

    /// `floor(sqrt(p))`, at least 1.
    pub fn default_mtry(n_features: usize) -> usize {
        (libm::sqrt(n_features as f64) as usize).max(1)
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.ntree == 0 {
            return Err(Error::InvalidParams("ntree must be at least 1".into()));
        }
        if self.mtry == 0 || self.mtry > n_features {
            return Err(Error::InvalidParams(alloc::format!(
                "mtry {} outside 1..={n_features}",
                self.mtry
            )));
        }
        if self.min_node_size == 0 {
            return Err(Error::InvalidParams("min_node_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// A fitted forest.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    params: ForestParams,
    columns: Vec<String>,
    trees: Vec<Tree>,
    n_train_rows: usize,
    fingerprint: String,
    impurity_decrease: Vec<f64>,
    degenerate: bool,
}

/// Hex digest identifying a training matrix and its labels.
pub fn fingerprint(x: &Matrix, y: &[bool]) -> String {
    let mut h = Sha256::new();
    h.update((x.n_rows() as u64).to_le_bytes());
    h.update((x.n_cols() as u64).to_le_bytes());
    for v in x.as_slice() {
        h.update(v.to_bits().to_le_bytes());
    }
    for &l in y {
        h.update([l as u8]);
    }
    let mut out = String::with_capacity(32);
    for b in &h.finalize()[..16] {
        let _ = write!(out, "{b:02x}");
    }
    out
}

pub(crate) fn bootstrap_sample(params: &ForestParams, tree: usize, n: usize) -> (Vec<usize>, impl Rng) {
    let mut rng = seed::rng(params.seed, "tree", tree as u64);
    let sample = if params.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    (sample, rng)
}

/// Fits a forest on `x` with binary labels `y`.
///
/// A single-class training set yields a forest of one-leaf trees, flagged by
/// [`ForestModel::is_degenerate`].
pub fn fit<S: AsRef<str>>(x: &Matrix, y: &[bool], params: &ForestParams, columns: &[S]) -> Result<ForestModel> {
    if x.is_empty() {
        return Err(Error::EmptyInput("training matrix"));
    }
    if y.len() != x.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    if columns.len() != x.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: x.n_cols(),
            got: columns.len(),
        });
    }
    params.validate(x.n_cols())?;

    let data = x.to_columns();
    let grow_params = GrowParams {
        mtry: params.mtry,
        min_node_size: params.min_node_size,
        max_depth: params.max_depth,
    };
    let mut impurity = vec![0.0; x.n_cols()];
    let trees = (0..params.ntree)
        .map(|t| {
            let (sample, mut rng) = bootstrap_sample(params, t, x.n_rows());
            grow(&data, y, sample, &grow_params, &mut rng, &mut impurity)
        })
        .collect();
    for v in &mut impurity {
        *v /= params.ntree as f64;
    }

    let positives = y.iter().filter(|&&l| l).count();
    Ok(ForestModel {
        params: params.clone(),
        columns: columns.iter().map(|c| String::from(c.as_ref())).collect(),
        trees,
        n_train_rows: x.n_rows(),
        fingerprint: fingerprint(x, y),
        impurity_decrease: impurity,
        degenerate: positives == 0 || positives == y.len(),
    })
}

impl ForestModel {
    /// Reassembles a model from stored parts.
    pub fn from_parts(
        params: ForestParams,
        columns: Vec<String>,
        trees: Vec<Tree>,
        n_train_rows: usize,
        fingerprint: String,
        impurity_decrease: Vec<f64>,
        degenerate: bool,
    ) -> Result<Self> {
        params.validate(columns.len())?;
        if trees.len() != params.ntree {
            return Err(Error::DimensionMismatch {
                expected: params.ntree,
                got: trees.len(),
            });
        }
        if impurity_decrease.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                expected: columns.len(),
                got: impurity_decrease.len(),
            });
        }
        Ok(Self {
            params,
            columns,
            trees,
            n_train_rows,
            fingerprint,
            impurity_decrease,
            degenerate,
        })
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_train_rows(&self) -> usize {
        self.n_train_rows
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    /// Mean over trees of the summed `n_node * gain` per feature.
    pub fn impurity_decrease(&self) -> &[f64] {
        &self.impurity_decrease
    }

    /// The training labels held a single class.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    fn check_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: row.len(),
            });
        }
        Ok(())
    }

    /// Probability of the positive class: mean of the trees' leaf fractions.
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        self.check_row(row)?;
        Ok(self.predict_unchecked(row))
    }

    pub(crate) fn predict_unchecked(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        sum / self.trees.len() as f64
    }

    /// `[P(negative), P(positive)]`.
    pub fn predict_class_proba(&self, row: &[f64]) -> Result<[f64; 2]> {
        let p = self.predict_proba(row)?;
        Ok([1.0 - p, p])
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                got: x.n_cols(),
            });
        }
        Ok(x.rows().map(|r| self.predict_unchecked(r)).collect())
    }

    /// Training rows left out of tree `tree`'s bootstrap sample.
    pub fn oob_rows(&self, tree: usize) -> Vec<usize> {
        if !self.params.bootstrap {
            return Vec::new();
        }
        let (sample, _) = bootstrap_sample(&self.params, tree, self.n_train_rows);
        let mut in_bag = vec![false; self.n_train_rows];
        for i in sample {
            in_bag[i] = true;
        }
        (0..self.n_train_rows).filter(|&i| !in_bag[i]).collect()
    }
}
