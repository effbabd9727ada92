use std::fmt::Write as _;
use std::path::Path;

use super::write_atomic;
use crate::error::{DreError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Label colors, cycled when there are more classes than entries.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn coord_names(d: usize) -> Vec<String> {
    match d {
        2 => vec!["x".into(), "y".into()],
        3 => vec!["x".into(), "y".into(), "z".into()],
        _ => (0..d).map(|i| format!("y{i}")).collect(),
    }
}

fn check_labels(n: usize, labels: Option<&[u32]>) -> Result<()> {
    match labels {
        Some(l) if l.len() != n => Err(DreError::dims("labels", n, l.len())),
        _ => Ok(()),
    }
}

/// CSV with header `x,y[,label]`; floats use the shortest representation
/// that parses back to the same value.
pub fn write_embedding_csv<T: Scalar>(path: &Path, y: &Matrix<T>, labels: Option<&[u32]>) -> Result<()> {
    check_labels(y.rows(), labels)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = coord_names(y.cols());
    if labels.is_some() {
        header.push("label".into());
    }
    let io = |e: csv::Error| DreError::Format(e.to_string());
    w.write_record(&header).map_err(io)?;
    for (i, row) in y.iter_rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            rec.push(l[i].to_string());
        }
        w.write_record(&rec).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| DreError::Format(e.to_string()))?;
    write_atomic(path, &bytes)?;
    Ok(())
}

/// Reads a file written by [`write_embedding_csv`]; a `label` column is optional.
pub fn read_embedding_csv<T: Scalar>(path: &Path) -> Result<(Matrix<T>, Option<Vec<u32>>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| DreError::Format(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| DreError::Format(format!("{}: {e}", path.display())))?.clone();
    let label_col = headers.iter().position(|h| h == "label");
    let d = headers.len() - usize::from(label_col.is_some());
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| DreError::Format(format!("{}: {e}", path.display())))?;
        for (c, cell) in rec.iter().enumerate() {
            let bad = || DreError::Table {
                path: path.to_path_buf(),
                row: r + 1,
                col: c + 1,
                reason: format!("cannot parse `{cell}`"),
            };
            if Some(c) == label_col {
                labels.push(cell.trim().parse::<u32>().map_err(|_| bad())?);
            } else {
                data.push(T::lit(cell.trim().parse::<f64>().map_err(|_| bad())?));
            }
        }
        n += 1;
    }
    Ok((Matrix::from_vec(n, d, data)?, label_col.map(|_| labels)))
}

/// Deterministic SVG 1.1 scatter of a 2-D embedding, colored by label.
pub fn scatter_svg<T: Scalar>(y: &Matrix<T>, labels: Option<&[u32]>) -> Result<String> {
    if y.cols() != 2 {
        return Err(DreError::dims("scatter plot embedding width", 2, y.cols()));
    }
    check_labels(y.rows(), labels)?;
    if !y.is_finite() {
        return Err(DreError::NonFinite("embedding coordinates".into()));
    }
    const SIZE: f64 = 800.0;
    const MARGIN: f64 = 20.0;
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for row in y.iter_rows() {
        let (a, b) = (row[0].as_f64(), row[1].as_f64());
        x0 = x0.min(a);
        x1 = x1.max(a);
        y0 = y0.min(b);
        y1 = y1.max(b);
    }
    let span = (x1 - x0).max(y1 - y0);
    let scale = if span > 0.0 { (SIZE - 2.0 * MARGIN) / span } else { 1.0 };

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, row) in y.iter_rows().enumerate() {
        let px = MARGIN + (row[0].as_f64() - x0) * scale;
        // SVG y grows downwards
        let py = SIZE - MARGIN - (row[1].as_f64() - y0) * scale;
        let color = labels.map_or(PALETTE[0], |l| PALETTE[l[i] as usize % PALETTE.len()]);
        let _ = writeln!(s, r#"<circle cx="{px:.2}" cy="{py:.2}" r="1.5" fill="{color}"/>"#);
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn write_scatter_svg<T: Scalar>(path: &Path, y: &Matrix<T>, labels: Option<&[u32]>) -> Result<()> {
    write_atomic(path, scatter_svg(y, labels)?.as_bytes())?;
    Ok(())
}
