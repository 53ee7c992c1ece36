use std::path::Path;

use priorgan_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Column layout of a CSV file with a header row. Every column except the
/// label column is a feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub label_column: Option<String>,
    pub classes: usize,
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| Error::parse(path, e.to_string()))?.clone();
    let label_idx = match &schema.label_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::parse(path, format!("no label column named {name:?}")))?,
        ),
        None => None,
    };
    let d = headers.len() - usize::from(label_idx.is_some());
    if d == 0 {
        return Err(Error::parse(path, "no feature columns"));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(path, format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        for (col, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if Some(col) == label_idx {
                let label: usize = cell
                    .parse()
                    .map_err(|_| Error::parse(path, format!("line {line}: label {cell:?} is not a class index")))?;
                if label >= schema.classes {
                    return Err(Error::parse(
                        path,
                        format!("line {line}: label {label} out of range for {} classes", schema.classes),
                    ));
                }
                labels.push(label);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::parse(
                        path,
                        format!("line {line}: column {:?} value {cell:?} is not numeric", &headers[col]),
                    )
                })?;
                features.push(v);
            }
        }
    }
    let n = features.len() / d;
    Dataset::new(
        Tensor::matrix(n, d, features)?,
        label_idx.map(|_| labels),
        schema.classes,
        None,
    )
}
