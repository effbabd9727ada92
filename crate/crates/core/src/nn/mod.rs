//! Dense network engine with manual backpropagation.
//!
//! Hidden layers run `Dense -> ReLU -> BatchNorm` (normalization after the
//! activation); the output layer is linear. Gradients are exact, including
//! the batch-statistics terms of batch normalization.

mod adam;
mod backward;
mod forward;
mod params;
mod spec;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use backward::{Gradients, LayerGrads};
pub use forward::{ForwardTrace, LayerTrace, Mode};
pub use params::{init_params, BatchNorm, LayerParams, NetworkParams};
pub use spec::{model_a_layout, NetworkSpec, Tap, DEFAULT_BN_EPSILON, DEFAULT_BN_MOMENTUM, INPUT_TAP, MODEL_A_EXTRACTOR};

use crate::error::Result;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Post batch-norm output of the named layer for the traced batch.
pub fn tap_features<T: Scalar>(trace: &ForwardTrace<T>, tap: &str) -> Result<Matrix<T>> {
    trace.tap_features(tap)
}
