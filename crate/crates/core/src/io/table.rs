use std::collections::HashMap;
use std::path::Path;

use super::{Dataset, Normalization};
use crate::error::{DreError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Which CSV column holds labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    /// Header name; needs `has_header`.
    Name(String),
}

/// Reads a rectangular numeric CSV. Label cells are coded `0, 1, ...` in
/// order of first appearance. Reported rows and columns are 1-based.
pub fn load_csv<T: Scalar>(path: &Path, label: Option<&LabelColumn>, has_header: bool) -> Result<Dataset<T>> {
    let table_err = |row: usize, col: usize, reason: String| DreError::Table {
        path: path.to_path_buf(),
        row,
        col,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;

    let label_idx = match label {
        None => None,
        Some(LabelColumn::Index(i)) => Some(*i),
        Some(LabelColumn::Name(name)) => {
            if !has_header {
                return Err(DreError::InvalidConfig(format!("label column `{name}` given by name but the file has no header")));
            }
            let headers = reader.headers().map_err(|e| csv_err(path, e))?;
            Some(
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| DreError::InvalidConfig(format!("no column named `{name}` in {}", path.display())))?,
            )
        }
    };

    let mut data: Vec<T> = Vec::new();
    let mut labels = Vec::new();
    let mut codes: HashMap<String, u32> = HashMap::new();
    let mut width: Option<usize> = None;
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row = r + 1;
        match width {
            None => {
                if let Some(li) = label_idx {
                    if li >= record.len() {
                        return Err(table_err(row, li + 1, format!("label column beyond the {} fields", record.len())));
                    }
                }
                width = Some(record.len());
            }
            Some(w) if w != record.len() => {
                return Err(table_err(row, record.len().min(w) + 1, format!("ragged row: {} fields, expected {w}", record.len())));
            }
            _ => {}
        }
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == label_idx {
                let next = codes.len() as u32;
                labels.push(*codes.entry(cell.to_string()).or_insert(next));
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| table_err(row, c + 1, format!("not a number: `{cell}`")))?;
            if !v.is_finite() {
                return Err(table_err(row, c + 1, format!("non-finite value `{cell}`")));
            }
            data.push(T::lit(v));
        }
        rows += 1;
    }
    let cols = width.unwrap_or(0) - usize::from(label_idx.is_some() && width.is_some());
    if rows == 0 || cols == 0 {
        return Err(DreError::Format(format!("{}: no numeric data", path.display())));
    }
    Ok(Dataset {
        x: Matrix::from_vec(rows, cols, data)?,
        labels: label_idx.map(|_| labels),
        source: format!("csv:{}", path.display()),
        normalization: Normalization::identity(cols),
    })
}

fn csv_err(path: &Path, e: csv::Error) -> DreError {
    let offset = e.position().map_or(0, |p| p.byte());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DreError::Io(io),
        kind => DreError::Parse {
            path: path.to_path_buf(),
            offset,
            reason: format!("{kind:?}"),
        },
    }
}
