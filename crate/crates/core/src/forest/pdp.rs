use alloc::string::String;
use alloc::vec::Vec;

use super::model::ForestModel;
use crate::{Error, Matrix, Result};

/// Probability clamp applied before taking log-odds.
pub const PD_EPSILON: f64 = 1e-6;

/// Centered log-odds of the positive class as one feature is swept.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialDependenceCurve {
    pub feature: String,
    pub grid: Vec<f64>,
    pub contribution: Vec<f64>,
}

impl PartialDependenceCurve {
    /// Grid value with the largest contribution (first one on ties).
    pub fn argmax(&self) -> f64 {
        let mut best = 0;
        for i in 1..self.contribution.len() {
            if self.contribution[i] > self.contribution[best] {
                best = i;
            }
        }
        self.grid[best]
    }
}

fn half_log_odds(p: f64) -> f64 {
    let p = p.clamp(PD_EPSILON, 1.0 - PD_EPSILON);
    0.5 * (libm::log(p) - libm::log(1.0 - p))
}

/// Partial dependence of the model on column `feature` over `grid`.
///
/// For each grid value every row of `x` gets the feature overwritten and the
/// contribution is the row average of `½·(log p − log(1 − p))`.
pub fn partial_dependence(
    model: &ForestModel,
    x: &Matrix,
    feature: usize,
    grid: &[f64],
) -> Result<PartialDependenceCurve> {
    if grid.is_empty() {
        return Err(Error::EmptyInput("partial dependence grid"));
    }
    if x.is_empty() {
        return Err(Error::EmptyInput("partial dependence rows"));
    }
    if x.n_cols() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            got: x.n_cols(),
        });
    }
    if feature >= model.n_features() {
        return Err(Error::UnknownFeature(alloc::format!("column {feature}")));
    }
    if grid
        .windows(2)
        .any(|w| w[0].partial_cmp(&w[1]) != Some(core::cmp::Ordering::Less))
    {
        return Err(Error::InvalidParams("grid must be strictly increasing".into()));
    }

    let mut row = Vec::with_capacity(x.n_cols());
    let contribution = grid
        .iter()
        .map(|&v| {
            let total: f64 = x
                .rows()
                .map(|r| {
                    row.clear();
                    row.extend_from_slice(r);
                    row[feature] = v;
                    half_log_odds(model.predict_unchecked(&row))
                })
                .sum();
            total / x.n_rows() as f64
        })
        .collect();

    Ok(PartialDependenceCurve {
        feature: model.columns()[feature].clone(),
        grid: grid.to_vec(),
        contribution,
    })
}

/// Lowest and highest quantile levels of [`quantile_grid`].
pub const GRID_QUANTILES: (f64, f64) = (0.05, 0.95);

/// Up to `points` observed values at quantile levels evenly spaced over
/// [`GRID_QUANTILES`], deduplicated into a strictly increasing grid.
pub fn quantile_grid(values: &[f64], points: usize) -> Vec<f64> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() || points == 0 {
        return Vec::new();
    }
    sorted.sort_unstable_by(f64::total_cmp);
    let last = (sorted.len() - 1) as f64;
    let (lo, hi) = GRID_QUANTILES;
    let mut grid: Vec<f64> = if points == 1 {
        alloc::vec![sorted[libm::round(0.5 * last) as usize]]
    } else {
        (0..points)
            .map(|k| {
                let level = lo + (hi - lo) * k as f64 / (points - 1) as f64;
                sorted[libm::round(level * last) as usize]
            })
            .collect()
    };
    grid.dedup();
    grid
}
