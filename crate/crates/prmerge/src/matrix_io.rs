//! Feature matrix CSV and its `schema.json` side file.
//!
//! Header: `pr_id,created_at,<schema columns>,label`. Values use the
//! shortest decimal form that parses back to the same `f64`.

use std::fs;
use std::path::{Path, PathBuf};

use prmerge_core::features::{FeatureSchema, FeatureTable, FeatureVector, SchemaMode, SCHEMA_VERSION};
use prmerge_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_FILE: &str = "schema.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub version: String,
    pub mode: SchemaMode,
    pub columns: Vec<String>,
}

impl SchemaFile {
    pub fn of(schema: &FeatureSchema) -> Self {
        Self {
            version: SCHEMA_VERSION.to_string(),
            mode: schema.mode(),
            columns: schema.columns().iter().map(|c| c.to_string()).collect(),
        }
    }
}

pub fn schema_path(matrix: &Path) -> PathBuf {
    matrix.with_file_name(SCHEMA_FILE)
}

/// Writes vectors projected on `schema`, ordered by `(created_at, pr_id)`.
pub fn export_matrix(vectors: &[FeatureVector], schema: &FeatureSchema, path: &Path) -> Result<usize> {
    write_table(&FeatureTable::from_vectors(vectors, schema), path)
}

/// Writes the table and its schema side file. Returns the row count.
pub fn write_table(table: &FeatureTable, path: &Path) -> Result<usize> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["pr_id".to_string(), "created_at".to_string()];
        header.extend(table.schema.columns().iter().map(|c| c.to_string()));
        header.push("label".into());
        w.write_record(&header).map_err(|e| Error::io(path, e.into()))?;
        for i in 0..table.len() {
            let mut rec = vec![table.pr_ids[i].clone(), table.created_at[i].to_string()];
            rec.extend(table.x.row(i).iter().map(|v| format!("{v:?}")));
            rec.push(if table.y[i] { "1" } else { "0" }.into());
            w.write_record(&rec).map_err(|e| Error::io(path, e.into()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    crate::ingest::write_atomic(path, &buf)?;
    let mut schema =
        serde_json::to_string_pretty(&SchemaFile::of(&table.schema)).map_err(|e| Error::json("schema", e))?;
    schema.push('\n');
    crate::ingest::write_atomic(&schema_path(path), schema.as_bytes())?;
    Ok(table.len())
}

/// Reads a matrix back, checking it against the side file when present.
pub fn read_table(path: &Path) -> Result<FeatureTable> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_slice());
    let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let n = header.len();
    if n < 3 || &header[0] != "pr_id" || &header[1] != "created_at" || &header[n - 1] != "label" {
        return Err(parse_err(1, "header must be pr_id,created_at,<columns>,label".into()));
    }
    let columns: Vec<&str> = header.iter().skip(2).take(n - 3).collect();
    let schema = FeatureSchema::from_columns(&columns).map_err(|e| Error::SchemaMismatch(e.to_string()))?;

    let side = schema_path(path);
    if side.exists() {
        let sf: SchemaFile = serde_json::from_slice(&fs::read(&side).map_err(|e| Error::io(&side, e))?)
            .map_err(|e| Error::json(side.display().to_string(), e))?;
        if sf != SchemaFile::of(&schema) {
            return Err(Error::SchemaMismatch(format!(
                "{} does not describe {}",
                side.display(),
                path.display()
            )));
        }
    }

    let mut pr_ids = Vec::new();
    let mut created_at = Vec::new();
    let mut data = Vec::new();
    let mut y = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != n {
            return Err(parse_err(line, format!("expected {n} fields, found {}", rec.len())));
        }
        pr_ids.push(rec[0].to_string());
        created_at.push(rec[1].parse().map_err(|_| parse_err(line, "bad created_at".into()))?);
        for j in 2..n - 1 {
            let v: f64 = rec[j]
                .parse()
                .map_err(|_| parse_err(line, format!("bad value `{}`", &rec[j])))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value `{}`", &rec[j])));
            }
            data.push(v);
        }
        y.push(match &rec[n - 1] {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(line, format!("bad label `{other}`"))),
        });
    }
    let x = Matrix::new(y.len(), schema.len(), data)?;
    Ok(FeatureTable {
        schema,
        pr_ids,
        created_at,
        x,
        y,
    })
}
