//! Versioned JSON forests.
//!
//! Trees are arrays of nodes in arena order: a split is
//! `[feature, threshold, left, right]`, a leaf `[negatives, positives]`.
//! Thresholds use shortest round-trip decimals, so reloading is bit-exact.

use std::fs;
use std::path::Path;

use prmerge_core::features::{FeatureSchema, SchemaMode};
use prmerge_core::forest::{ForestModel, ForestParams, Node, Tree};
use prmerge_core::metrics::SplitPlan;
use serde::{Deserialize, Serialize};

use crate::config::Provenance;
use crate::error::{Error, Result};
use crate::ingest::write_atomic;

pub const MODEL_FORMAT: &str = "prmerge-forest/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum NodeRepr {
    Split(usize, f64, usize, usize),
    Leaf(u32, u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    mode: SchemaMode,
    columns: Vec<String>,
    params: ForestParams,
    n_train_rows: usize,
    /// Fingerprint of the training matrix.
    training_fingerprint: String,
    impurity_decrease: Vec<f64>,
    degenerate: bool,
    provenance: Provenance,
    split: SplitPlan,
    trees: Vec<Vec<NodeRepr>>,
}

/// A forest with the schema and run metadata it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub model: ForestModel,
    pub schema: FeatureSchema,
    pub provenance: Provenance,
    pub split: SplitPlan,
}

pub fn to_json(saved: &SavedModel) -> Result<String> {
    let m = &saved.model;
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        mode: saved.schema.mode(),
        columns: m.columns().to_vec(),
        params: m.params().clone(),
        n_train_rows: m.n_train_rows(),
        training_fingerprint: m.fingerprint().to_string(),
        impurity_decrease: m.impurity_decrease().to_vec(),
        degenerate: m.is_degenerate(),
        provenance: saved.provenance.clone(),
        split: saved.split.clone(),
        trees: m
            .trees()
            .iter()
            .map(|t| {
                t.nodes()
                    .iter()
                    .map(|n| match *n {
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                        } => NodeRepr::Split(feature, threshold, left, right),
                        Node::Leaf { negatives, positives } => NodeRepr::Leaf(negatives, positives),
                    })
                    .collect()
            })
            .collect(),
    };
    let mut text = serde_json::to_string(&file).map_err(|e| Error::json("model", e))?;
    text.push('\n');
    Ok(text)
}

pub fn from_json(text: &str) -> Result<SavedModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::json("model", e))?;
    if file.format != MODEL_FORMAT {
        return Err(Error::SchemaMismatch(format!(
            "unsupported model format `{}`",
            file.format
        )));
    }
    let schema = FeatureSchema::from_columns(&file.columns).map_err(|e| Error::SchemaMismatch(e.to_string()))?;
    if schema.mode() != file.mode {
        return Err(Error::SchemaMismatch(format!(
            "model columns do not match its mode `{}`",
            file.mode.as_str()
        )));
    }
    let n_features = file.columns.len();
    let trees = file
        .trees
        .into_iter()
        .map(|nodes| {
            let nodes = nodes
                .into_iter()
                .map(|n| match n {
                    NodeRepr::Split(feature, threshold, left, right) => Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    },
                    NodeRepr::Leaf(negatives, positives) => Node::Leaf { negatives, positives },
                })
                .collect();
            Tree::from_nodes(nodes, n_features)
        })
        .collect::<prmerge_core::Result<Vec<_>>>()?;
    let model = ForestModel::from_parts(
        file.params,
        file.columns,
        trees,
        file.n_train_rows,
        file.training_fingerprint,
        file.impurity_decrease,
        file.degenerate,
    )?;
    Ok(SavedModel {
        model,
        schema,
        provenance: file.provenance,
        split: file.split,
    })
}

pub fn save(saved: &SavedModel, path: &Path) -> Result<()> {
    write_atomic(path, to_json(saved)?.as_bytes())
}

pub fn load(path: &Path) -> Result<SavedModel> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}

/// Fails unless the model was trained on `schema`'s columns.
pub fn check_schema(saved: &SavedModel, schema: &FeatureSchema) -> Result<()> {
    if saved.schema != *schema {
        return Err(Error::SchemaMismatch(format!(
            "model expects `{}` columns, matrix has `{}`",
            saved.schema.mode().as_str(),
            schema.mode().as_str()
        )));
    }
    Ok(())
}
