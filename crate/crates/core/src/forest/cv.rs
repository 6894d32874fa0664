//! Cross-validation: stratified folds, grid search over `(ntree, mtry)` and
//! recursive feature elimination.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::importance::importance;
use super::model::{fit, ForestParams};
use crate::{seed, Error, Matrix, Result};

/// Assigns each row to one of `k` folds, spreading each class evenly.
pub fn stratified_folds(y: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidParams("at least two folds are required".into()));
    }
    let mut folds = vec![0; y.len()];
    let mut next = 0;
    for (class, label) in [false, true].into_iter().enumerate() {
        let mut rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == label).collect();
        if rows.len() < k {
            return Err(Error::InvalidParams(alloc::format!(
                "class {label} has {} rows, fewer than {k} folds",
                rows.len()
            )));
        }
        rows.shuffle(&mut seed::rng(seed, "folds", class as u64));
        for i in rows {
            folds[i] = next % k;
            next += 1;
        }
    }
    Ok(folds)
}

fn train_test(folds: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    (0..folds.len()).partition(|&i| folds[i] != fold)
}

fn column_names(p: usize) -> Vec<String> {
    (0..p).map(|j| alloc::format!("x{j}")).collect()
}

/// Out-of-fold positive-class probabilities for every row.
pub fn cross_val_predict(x: &Matrix, y: &[bool], params: &ForestParams, folds: &[usize]) -> Result<Vec<f64>> {
    let k = folds.iter().max().map_or(0, |m| m + 1);
    let names = column_names(x.n_cols());
    let mut out = vec![0.0; y.len()];
    for fold in 0..k {
        let (train, test) = train_test(folds, fold);
        let ytrain: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let model = fit(&x.select_rows(&train), &ytrain, params, &names)?;
        for i in test {
            out[i] = model.predict_unchecked(x.row(i));
        }
    }
    Ok(out)
}

fn fold_accuracy(scores: &[f64], y: &[bool], folds: &[usize], k: usize) -> f64 {
    let mut hits = vec![0usize; k];
    let mut sizes = vec![0usize; k];
    for i in 0..y.len() {
        sizes[folds[i]] += 1;
        if (scores[i] >= 0.5) == y[i] {
            hits[folds[i]] += 1;
        }
    }
    let total: f64 = (0..k).map(|f| hits[f] as f64 / sizes[f] as f64).sum();
    total / k as f64
}

/// One `(ntree, mtry)` candidate of the tuning grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridPoint {
    pub ntree: usize,
    pub mtry: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best: ForestParams,
    pub best_accuracy: f64,
    /// Mean fold accuracy of every grid point, in `(ntree, mtry)` order.
    pub scores: Vec<(GridPoint, f64)>,
}

/// Grid search maximizing mean `folds`-fold cross-validated accuracy.
///
/// Folds are stratified and seeded from `base.seed`; ties go to the smaller
/// `ntree`, then the smaller `mtry`. Other parameters are taken from `base`.
pub fn tune(x: &Matrix, y: &[bool], base: &ForestParams, grid: &[GridPoint], folds: usize) -> Result<TuneResult> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("tuning grid"));
    }
    for g in grid {
        let mut p = base.clone();
        p.ntree = g.ntree;
        p.mtry = g.mtry;
        p.validate(x.n_cols())?;
    }
    let assignment = stratified_folds(y, folds, seed::derive(base.seed, "cv"))?;

    let mut points = grid.to_vec();
    points.sort_unstable();
    points.dedup();

    let mut scores = Vec::with_capacity(points.len());
    let mut best: Option<(GridPoint, f64)> = None;
    for g in points {
        let mut params = base.clone();
        params.ntree = g.ntree;
        params.mtry = g.mtry;
        let oof = cross_val_predict(x, y, &params, &assignment)?;
        let acc = fold_accuracy(&oof, y, &assignment, folds);
        scores.push((g, acc));
        if best.is_none_or(|(_, b)| acc > b) {
            best = Some((g, acc));
        }
    }

    let (g, best_accuracy) = best.expect("grid is nonempty");
    let mut params = base.clone();
    params.ntree = g.ntree;
    params.mtry = g.mtry;
    Ok(TuneResult {
        best: params,
        best_accuracy,
        scores,
    })
}

/// One point of the feature-elimination curve.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RfcvPoint {
    pub n_features: usize,
    /// Cross-validated misclassification rate.
    pub error: f64,
}

/// Cross-validated error of models restricted to the top-`k` features for
/// each `k` in `steps`.
///
/// Inside every fold a forest on all features ranks them by permutation
/// importance; each reduced model keeps that fold's top-`k` and uses
/// `min(mtry, k)` candidates per split. `steps` must start at the feature
/// count and strictly decrease.
pub fn rfcv(x: &Matrix, y: &[bool], params: &ForestParams, steps: &[usize], folds: usize) -> Result<Vec<RfcvPoint>> {
    let p = x.n_cols();
    let Some(&first) = steps.first() else {
        return Err(Error::EmptyInput("rfcv steps"));
    };
    if first != p {
        return Err(Error::InvalidParams(alloc::format!(
            "first step {first} must equal the feature count {p}"
        )));
    }
    let mut current = p + 1;
    for &k in steps {
        if k == 0 || k >= current {
            return Err(Error::InvalidParams(alloc::format!(
                "step {k} is not smaller than the current feature count {}",
                current.min(p)
            )));
        }
        current = k;
    }
    params.validate(p)?;

    let assignment = stratified_folds(y, folds, seed::derive(params.seed, "cv"))?;
    let names = column_names(p);
    let mut errors = vec![0usize; steps.len()];

    for fold in 0..folds {
        let (train, test) = train_test(&assignment, fold);
        let xtrain = x.select_rows(&train);
        let ytrain: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let full = fit(&xtrain, &ytrain, params, &names)?;
        let ranking = importance(&full, &xtrain, &ytrain)?.ranking;

        for (s, &k) in steps.iter().enumerate() {
            let miss = |pred: f64, i: usize| (pred >= 0.5) != y[i];
            if k == p {
                errors[s] += test
                    .iter()
                    .filter(|&&i| miss(full.predict_unchecked(x.row(i)), i))
                    .count();
                continue;
            }
            let mut keep = ranking[..k].to_vec();
            keep.sort_unstable();
            let mut reduced = params.clone();
            reduced.mtry = params.mtry.min(k);
            let model = fit(&xtrain.select_columns(&keep), &ytrain, &reduced, &names[..k])?;
            let xtest = x.select_rows(&test).select_columns(&keep);
            errors[s] += test
                .iter()
                .enumerate()
                .filter(|&(r, &i)| miss(model.predict_unchecked(xtest.row(r)), i))
                .count();
        }
    }

    Ok(steps
        .iter()
        .zip(errors)
        .map(|(&k, e)| RfcvPoint {
            n_features: k,
            error: e as f64 / y.len() as f64,
        })
        .collect())
}
