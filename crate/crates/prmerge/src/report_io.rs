//! Evaluation and tuning reports (JSON) and ROC curves (CSV).

use std::fs;
use std::path::Path;

use prmerge_core::features::SchemaMode;
use prmerge_core::forest::{GridPoint, ImportanceReport};
use prmerge_core::metrics::{EvaluationReport, RocPoint, SplitPlan};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::Provenance;
use crate::error::{Error, Result};
use crate::ingest::write_atomic;

pub const REPORT_FORMAT: &str = "prmerge-report/1";
pub const TUNE_FORMAT: &str = "prmerge-tune/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassBalance {
    pub n: u64,
    pub positives: u64,
    pub positive_rate: f64,
}

impl ClassBalance {
    pub fn of(y: &[bool]) -> Self {
        let positives = y.iter().filter(|&&v| v).count() as u64;
        Self {
            n: y.len() as u64,
            positives,
            positive_rate: if y.is_empty() {
                0.0
            } else {
                positives as f64 / y.len() as f64
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub permutation: f64,
    pub impurity: f64,
}

/// Features most important first.
pub fn ranked_importance(report: &ImportanceReport) -> Vec<FeatureImportance> {
    report
        .ranking
        .iter()
        .map(|&j| FeatureImportance {
            feature: report.features[j].clone(),
            permutation: report.permutation[j],
            impurity: report.impurity[j],
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format: String,
    pub provenance: Provenance,
    pub mode: SchemaMode,
    pub split: SplitPlan,
    pub model_fingerprint: String,
    pub train: ClassBalance,
    pub test: ClassBalance,
    pub metrics: EvaluationReport,
    pub importance: Vec<FeatureImportance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneScore {
    pub ntree: usize,
    pub mtry: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub format: String,
    pub provenance: Provenance,
    pub mode: SchemaMode,
    pub folds: usize,
    pub rows: usize,
    pub best: GridPoint,
    pub best_accuracy: f64,
    pub scores: Vec<TuneScore>,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// `threshold,fpr,tpr`; the first threshold is `inf`.
pub fn write_roc_csv(points: &[RocPoint], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["threshold", "fpr", "tpr"])
            .map_err(|e| Error::io(path, e.into()))?;
        for p in points {
            w.write_record([
                format!("{:?}", p.threshold),
                format!("{:?}", p.fpr),
                format!("{:?}", p.tpr),
            ])
            .map_err(|e| Error::io(path, e.into()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    write_atomic(path, &buf)
}
