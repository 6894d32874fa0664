//! Evaluation metrics and train/test splitting.
//!
//! The positive class is "accepted within the window". Sensitivity is the true
//! positive rate and specificity the true negative rate.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::pr::Timestamp;
use crate::{seed, Error, Result};

fn check_lengths(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: labels.len(),
            got: scores.len(),
        });
    }
    Ok(())
}

/// Area under the ROC curve via the rank-sum statistic; tied scores count ½.
pub fn auc_roc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores, labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidParams("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum of positives, with midranks for ties
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank2 = (i + 1 + j + 1) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        rank_sum2 += pos_in_group * midrank2;
        i = j + 1;
    }
    let (np, nn) = (n_pos as u128, n_neg as u128);
    // 2U = 2R - np(np+1)
    let u2 = rank_sum2 - np * (np + 1);
    Ok(u2 as f64 / (2 * np * nn) as f64)
}

/// One point of the ROC curve: predicting positive when `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC points for every distinct score, from the strictest threshold down,
/// starting at `(0, 0)`.
pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<Vec<RocPoint>> {
    check_lengths(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = alloc::vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[cfg_attr(feature = "serde", serde(rename = "fn"))]
    pub fn_: u64,
    pub tn: u64,
}

/// Confusion matrix; `score >= threshold` predicts positive.
pub fn confusion(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Confusion> {
    check_lengths(scores, labels)?;
    let mut c = Confusion::default();
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

impl Confusion {
    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> Result<f64> {
        if self.n() == 0 {
            return Err(Error::UndefinedRate("accuracy"));
        }
        Ok((self.tp + self.tn) as f64 / self.n() as f64)
    }

    /// Cohen's kappa `(p0 - pe) / (1 - pe)`.
    pub fn kappa(&self) -> Result<f64> {
        let n = self.n();
        if n == 0 {
            return Err(Error::UndefinedKappa);
        }
        // work in integer units of 1/n² to keep p0 == pe exact
        let n2 = (n as u128) * (n as u128);
        let agree = (self.tp + self.tn) as u128 * n as u128;
        let pred_pos = (self.tp + self.fp) as u128;
        let pred_neg = (self.fn_ + self.tn) as u128;
        let act_pos = (self.tp + self.fn_) as u128;
        let act_neg = (self.fp + self.tn) as u128;
        let chance = pred_pos * act_pos + pred_neg * act_neg;
        if chance == n2 {
            return Err(Error::UndefinedKappa);
        }
        Ok((agree as f64 - chance as f64) / (n2 as f64 - chance as f64))
    }

    /// True positive rate `tp / (tp + fn)`.
    pub fn sensitivity(&self) -> Result<f64> {
        if self.tp + self.fn_ == 0 {
            return Err(Error::UndefinedRate("sensitivity"));
        }
        Ok(self.tp as f64 / (self.tp + self.fn_) as f64)
    }

    /// True negative rate `tn / (tn + fp)`.
    pub fn specificity(&self) -> Result<f64> {
        if self.tn + self.fp == 0 {
            return Err(Error::UndefinedRate("specificity"));
        }
        Ok(self.tn as f64 / (self.tn + self.fp) as f64)
    }

    pub fn sensitivity_specificity(&self) -> Result<(f64, f64)> {
        Ok((self.sensitivity()?, self.specificity()?))
    }
}

/// Threshold used for the reported confusion matrix.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Metrics of one model on one dataset.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EvaluationReport {
    pub auc_roc: f64,
    pub accuracy: f64,
    pub kappa: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub confusion: Confusion,
    pub threshold: f64,
    pub n: u64,
}

impl EvaluationReport {
    pub fn evaluate(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Self> {
        let c = confusion(scores, labels, threshold)?;
        Ok(Self {
            auc_roc: auc_roc(scores, labels)?,
            accuracy: c.accuracy()?,
            kappa: c.kappa()?,
            sensitivity: c.sensitivity()?,
            specificity: c.specificity()?,
            confusion: c,
            threshold,
            n: c.n(),
        })
    }
}

/// How to divide a dataset into training and test rows.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum SplitPlan {
    /// Seeded uniform sample of `round(train_fraction * n)` training rows.
    Random { train_fraction: f64, seed: u64 },
    /// Rows created at or before `cutoff` train, later rows test.
    Temporal { cutoff: Timestamp },
}

/// Disjoint, exhaustive, ascending row index sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitPlan {
    /// Splits rows whose creation times are `created_at`.
    pub fn apply(&self, created_at: &[Timestamp]) -> Result<Split> {
        let n = created_at.len();
        if n == 0 {
            return Err(Error::EmptyInput("dataset to split"));
        }
        let split = match *self {
            SplitPlan::Random { train_fraction, seed } => {
                if !(0.0..=1.0).contains(&train_fraction) {
                    return Err(Error::InvalidParams("train fraction outside [0, 1]".into()));
                }
                let n_train = libm::round(train_fraction * n as f64) as usize;
                let mut rows: Vec<usize> = (0..n).collect();
                rows.shuffle(&mut seed::rng(seed, "split", 0));
                let mut train = rows[..n_train].to_vec();
                let mut test = rows[n_train..].to_vec();
                train.sort_unstable();
                test.sort_unstable();
                Split { train, test }
            }
            SplitPlan::Temporal { cutoff } => {
                let (train, test) = (0..n).partition(|&i| created_at[i] <= cutoff);
                Split { train, test }
            }
        };
        if split.train.is_empty() {
            return Err(Error::DegenerateSplit("train"));
        }
        if split.test.is_empty() {
            return Err(Error::DegenerateSplit("test"));
        }
        Ok(split)
    }
}
