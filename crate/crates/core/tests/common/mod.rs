#![allow(dead_code)]

pub mod gradcheck;
pub mod naive;

use std::path::PathBuf;

use dre_core::io::{load_idx, Dataset};
use dre_core::Matrix;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// `DRE_MNIST_DIR`, or `data/mnist` at the workspace root.
pub fn mnist_dir() -> PathBuf {
    let dir = std::env::var_os("DRE_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"));
    assert!(
        dir.join(TRAIN_IMAGES).is_file(),
        "MNIST not found in {}: unpack the IDX files there or set DRE_MNIST_DIR (see README)",
        dir.display()
    );
    dir
}

pub fn mnist_train() -> Dataset<f64> {
    let dir = mnist_dir();
    load_idx(&dir.join(TRAIN_IMAGES), Some(&dir.join(TRAIN_LABELS))).expect("MNIST training split")
}

pub fn mnist_test() -> Dataset<f64> {
    let dir = mnist_dir();
    load_idx(&dir.join(TEST_IMAGES), Some(&dir.join(TEST_LABELS))).expect("MNIST test split")
}

/// First `n` rows and labels.
pub fn head(d: &Dataset<f64>, n: usize) -> (Matrix<f64>, Vec<u32>) {
    let idx: Vec<usize> = (0..n).collect();
    (d.x.select_rows(&idx), d.labels.as_ref().expect("labels")[..n].to_vec())
}
