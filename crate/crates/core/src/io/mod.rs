//! Files in and out: IDX and CSV ingestion, normalization, the `DREM`
//! model container, embedding/plot export and the flat run config.

mod config;
mod export;
mod idx;
mod model;
mod normalize;
mod table;

pub use config::RunConfig;
pub use export::{read_embedding_csv, scatter_svg, write_embedding_csv, write_scatter_svg, PALETTE};
pub use idx::{encode_idx_images, encode_idx_labels, is_idx_file, load_idx, parse_idx_images, parse_idx_labels, read_idx_images, read_idx_labels, IMAGE_MAGIC, LABEL_MAGIC};
pub use model::{decode_model, encode_model, load_model, save_model, ModelArtifact, MODEL_MAGIC, MODEL_VERSION};
pub use normalize::{NormMode, Normalization};
pub use table::{load_csv, LabelColumn};

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::matrix::Matrix;

/// A data matrix with optional integer labels and the normalization applied to it.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub x: Matrix<T>,
    pub labels: Option<Vec<u32>>,
    pub source: String,
    pub normalization: Normalization<T>,
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}
