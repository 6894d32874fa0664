use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::model::ForestModel;
use crate::{seed, Error, Matrix, Result};

/// Per-feature variable importance.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    pub features: Vec<String>,
    /// Mean decrease in Gini impurity.
    pub impurity: Vec<f64>,
    /// Mean out-of-bag accuracy drop after permuting the feature.
    pub permutation: Vec<f64>,
    /// Feature indices, most important first by the permutation measure.
    pub ranking: Vec<usize>,
}

impl ImportanceReport {
    pub fn ranked_names(&self) -> Vec<&str> {
        self.ranking.iter().map(|&j| self.features[j].as_str()).collect()
    }
}

/// Accuracy of one tree on `rows`, optionally with column `j` replaced by
/// `values`.
fn tree_accuracy(tree: &super::Tree, x: &Matrix, rows: &[usize], y: &[bool], replaced: Option<(usize, &[f64])>) -> f64 {
    let hits = rows
        .iter()
        .enumerate()
        .filter(|&(k, &i)| {
            let p = match replaced {
                None => tree.predict(x.row(i)),
                Some((j, values)) => tree.predict_with(x.row(i), j, values[k]),
            };
            (p >= 0.5) == y[i]
        })
        .count();
    hits as f64 / rows.len() as f64
}

/// Impurity and permutation importance over the model's out-of-bag rows.
///
/// `x` and `y` must be the training data the model was fitted on.
pub fn importance(model: &ForestModel, x: &Matrix, y: &[bool]) -> Result<ImportanceReport> {
    if super::fingerprint(x, y) != model.fingerprint() {
        return Err(Error::FingerprintMismatch);
    }
    let p = model.n_features();
    let mut drops = vec![0.0; p];
    let mut used_trees = 0usize;

    for (t, tree) in model.trees().iter().enumerate() {
        let oob = model.oob_rows(t);
        if oob.is_empty() {
            continue;
        }
        used_trees += 1;
        let base = tree_accuracy(tree, x, &oob, y, None);

        for (j, drop) in drops.iter_mut().enumerate() {
            let mut column: Vec<f64> = oob.iter().map(|&i| x.get(i, j)).collect();
            let mut rng = seed::rng(model.params().seed, "permute", (t * p + j) as u64);
            column.shuffle(&mut rng);
            *drop += base - tree_accuracy(tree, x, &oob, y, Some((j, &column)));
        }
    }

    if used_trees == 0 {
        return Err(Error::NoOutOfBag);
    }
    for d in &mut drops {
        *d /= used_trees as f64;
    }
    let mut ranking: Vec<usize> = (0..p).collect();
    ranking.sort_by(|&a, &b| drops[b].total_cmp(&drops[a]).then(a.cmp(&b)));

    Ok(ImportanceReport {
        features: model.columns().to_vec(),
        impurity: model.impurity_decrease().to_vec(),
        permutation: drops,
        ranking,
    })
}
