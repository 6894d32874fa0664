use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::{Error, Matrix, Result};

/// Gini impurity `1 - Σ p_i²` of a node with the given class counts.
pub fn gini(counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyNode);
    }
    let n = total as f64;
    Ok(1.0 - counts.iter().map(|&c| (c as f64 / n) * (c as f64 / n)).sum::<f64>())
}

/// A chosen split: rows with `value <= threshold` go left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// Decrease in Gini impurity, weighted by child sizes.
    pub gain: f64,
}

/// Quality, feature, threshold and the (neg, pos) counts of both children.
type Candidate = (Quality, usize, f64, (u64, u64), (u64, u64));

/// Exact split quality `Σ_children (neg² + pos²) / n_child`, kept as a
/// fraction so that equal splits compare equal.
#[derive(Debug, Clone, Copy)]
struct Quality {
    num: u128,
    den: u128,
}

impl Quality {
    fn new(left: (u64, u64), right: (u64, u64)) -> Self {
        let sq = |(a, b): (u64, u64)| (a as u128) * (a as u128) + (b as u128) * (b as u128);
        let nl = (left.0 + left.1) as u128;
        let nr = (right.0 + right.1) as u128;
        Self {
            num: sq(left) * nr + sq(right) * nl,
            den: nl * nr,
        }
    }

    fn cmp(&self, other: &Self) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }

    /// Whether the children are purer than the parent.
    fn improves_on(&self, parent: (u64, u64)) -> bool {
        let n = (parent.0 + parent.1) as u128;
        let sq = (parent.0 as u128).pow(2) + (parent.1 as u128).pow(2);
        self.num * n > sq * self.den
    }
}

fn weighted_gain(parent: (u64, u64), left: (u64, u64), right: (u64, u64)) -> f64 {
    let g = |c: (u64, u64)| gini(&[c.0, c.1]).unwrap_or(0.0);
    let n = (parent.0 + parent.1) as f64;
    let nl = (left.0 + left.1) as f64;
    let nr = (right.0 + right.1) as f64;
    g(parent) - (nl * g(left) + nr * g(right)) / n
}

/// Midpoint of two adjacent distinct values, guaranteed to separate them.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = (lo + hi) / 2.0;
    if m >= lo && m < hi {
        m
    } else {
        lo
    }
}

/// Reusable split search over column-major data.
#[derive(Default)]
pub(crate) struct SplitFinder {
    scratch: Vec<(f64, bool)>,
}

impl SplitFinder {
    /// Best split over `candidates` (ascending feature order assumed for the
    /// tie-break) leaving at least `min_leaf` rows on each side.
    pub(crate) fn find(
        &mut self,
        columns: &[Vec<f64>],
        y: &[bool],
        rows: &[usize],
        candidates: &[usize],
        min_leaf: usize,
    ) -> Option<Split> {
        let pos = rows.iter().filter(|&&i| y[i]).count() as u64;
        let parent = (rows.len() as u64 - pos, pos);
        let min_leaf = min_leaf.max(1);
        let mut best: Option<Candidate> = None;

        for &feature in candidates {
            let column = &columns[feature];
            self.scratch.clear();
            self.scratch.extend(rows.iter().map(|&i| (column[i], y[i])));
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

            let mut left = (0u64, 0u64);
            for k in 0..self.scratch.len() - 1 {
                let (v, label) = self.scratch[k];
                if label {
                    left.1 += 1;
                } else {
                    left.0 += 1;
                }
                let next = self.scratch[k + 1].0;
                if v == next {
                    continue;
                }
                let n_left = k + 1;
                if n_left < min_leaf || self.scratch.len() - n_left < min_leaf {
                    continue;
                }
                let right = (parent.0 - left.0, parent.1 - left.1);
                let q = Quality::new(left, right);
                let better = match &best {
                    None => true,
                    Some((bq, ..)) => q.cmp(bq) == Ordering::Greater,
                };
                if better {
                    best = Some((q, feature, midpoint(v, next), left, right));
                }
            }
        }

        let (q, feature, threshold, left, right) = best?;
        if !q.improves_on(parent) {
            return None;
        }
        Some(Split {
            feature,
            threshold,
            gain: weighted_gain(parent, left, right),
        })
    }
}

/// Best Gini split of `rows` among `candidates`.
///
/// Ties go to the lower feature index, then the lower threshold. Returns
/// `None` when fewer than two rows are given or no split reduces impurity.
pub fn best_split(x: &Matrix, y: &[bool], rows: &[usize], candidates: &[usize]) -> Option<Split> {
    if rows.len() < 2 || candidates.is_empty() {
        return None;
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let columns = x.to_columns();
    SplitFinder::default().find(&columns, y, rows, &sorted, 1)
}
