//! Deep recursive embedding.
//!
//! A fully connected embedding network trained with mini-batch t-SNE and
//! UMAP objectives, where later phases recompute the high-dimensional
//! affinities from the network's own intermediate features. Includes
//! out-of-sample projection, embedding-quality metrics and file formats.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` / `*32` aliases below name the common instantiations.

pub mod affinity;
pub mod error;
pub mod io;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod scalar;
pub mod trainer;

pub use error::{DreError, Result};
pub use matrix::Matrix;
pub use scalar::Scalar;

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type NetworkParams64 = nn::NetworkParams<f64>;
pub type NetworkParams32 = nn::NetworkParams<f32>;
pub type Trainer64 = trainer::Trainer<f64>;
pub type Trainer32 = trainer::Trainer<f32>;
pub type TrainConfig64 = trainer::TrainConfig<f64>;
pub type ModelArtifact64 = io::ModelArtifact<f64>;
pub type Dataset64 = io::Dataset<f64>;
