use std::fs;
use std::path::Path;

use super::{Dataset, Normalization};
use crate::error::{DreError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Big-endian magic of unsigned-byte 3-D (image) and 1-D (label) files.
pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn parse_err(path: &Path, offset: usize, reason: impl Into<String>) -> DreError {
    DreError::Parse {
        path: path.to_path_buf(),
        offset: offset as u64,
        reason: reason.into(),
    }
}

fn be_u32(bytes: &[u8], offset: usize, what: &str, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| parse_err(path, bytes.len(), format!("file ends before the {what} field at byte {offset}")))
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let magic = be_u32(bytes, 0, "magic", path)?;
    if magic != expected {
        return Err(parse_err(path, 0, format!("bad magic {magic:#010x}, expected {expected:#010x}")));
    }
    Ok(())
}

/// Parses an image file into an `N x (rows * cols)` matrix scaled by 1/255.
pub fn parse_idx_images<T: Scalar>(bytes: &[u8], path: &Path) -> Result<Matrix<T>> {
    check_magic(bytes, IMAGE_MAGIC, path)?;
    let n = be_u32(bytes, 4, "image count", path)? as usize;
    let rows = be_u32(bytes, 8, "row count", path)? as usize;
    let cols = be_u32(bytes, 12, "column count", path)? as usize;
    let width = rows * cols;
    let need = 16 + n * width;
    if bytes.len() < need {
        return Err(parse_err(
            path,
            bytes.len(),
            format!("truncated: {n} images of {rows}x{cols} need {need} bytes"),
        ));
    }
    if bytes.len() > need {
        return Err(parse_err(path, need, format!("{} trailing bytes", bytes.len() - need)));
    }
    let scale = T::lit(1.0 / 255.0);
    let data = bytes[16..].iter().map(|&b| T::lit(f64::from(b)) * scale).collect();
    Matrix::from_vec(n, width, data)
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u32>> {
    check_magic(bytes, LABEL_MAGIC, path)?;
    let n = be_u32(bytes, 4, "label count", path)? as usize;
    let need = 8 + n;
    if bytes.len() < need {
        return Err(parse_err(path, bytes.len(), format!("truncated: {n} labels need {need} bytes")));
    }
    if bytes.len() > need {
        return Err(parse_err(path, need, format!("{} trailing bytes", bytes.len() - need)));
    }
    Ok(bytes[8..].iter().map(|&b| u32::from(b)).collect())
}

pub fn read_idx_images<T: Scalar>(path: &Path) -> Result<Matrix<T>> {
    parse_idx_images(&fs::read(path)?, path)
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u32>> {
    parse_idx_labels(&fs::read(path)?, path)
}

pub fn load_idx<T: Scalar>(images: &Path, labels: Option<&Path>) -> Result<Dataset<T>> {
    let x = read_idx_images::<T>(images)?;
    let labels = match labels {
        Some(p) => {
            let l = read_idx_labels(p)?;
            if l.len() != x.rows() {
                return Err(parse_err(
                    p,
                    4,
                    format!("{} labels for {} images in {}", l.len(), x.rows(), images.display()),
                ));
            }
            Some(l)
        }
        None => None,
    };
    let d = x.cols();
    Ok(Dataset {
        x,
        labels,
        source: format!("idx:{}", images.display()),
        normalization: Normalization::identity(d),
    })
}

/// True when the file starts like an unsigned-byte IDX container.
pub fn is_idx_file(path: &Path) -> bool {
    use std::io::Read;
    let mut head = [0u8; 4];
    fs::File::open(path).and_then(|mut f| f.read_exact(&mut head)).is_ok()
        && head[0] == 0
        && head[1] == 0
        && head[2] == 0x08
        && (1..=3).contains(&head[3])
}

/// Builds an image file in memory; pixels are row-major, one byte each.
pub fn encode_idx_images(n: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), n * rows * cols, "pixel count");
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
