use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::spec::NetworkSpec;
use crate::error::{DreError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Per-feature batch normalization parameters and running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: T,
    pub epsilon: T,
}

impl<T: Scalar> BatchNorm<T> {
    fn identity(width: usize, momentum: T, epsilon: T) -> Self {
        Self {
            gamma: vec![T::one(); width],
            beta: vec![T::zero(); width],
            running_mean: vec![T::zero(); width],
            running_var: vec![T::one(); width],
            momentum,
            epsilon,
        }
    }

    /// `running <- momentum * running + (1 - momentum) * batch`.
    pub(crate) fn absorb(&mut self, batch_mean: &[T], batch_var: &[T]) {
        let keep = self.momentum;
        let take = T::one() - keep;
        for (r, &b) in self.running_mean.iter_mut().zip(batch_mean) {
            *r = keep * *r + take * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(batch_var) {
            *r = (keep * *r + take * b).max(T::zero());
        }
    }
}

/// One dense layer: `weights` is `fan_in x fan_out`; `norm` is absent on the output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
    pub norm: Option<BatchNorm<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<T> {
    pub spec: NetworkSpec,
    pub layers: Vec<LayerParams<T>>,
}

/// He-initialized weights (zero-mean normal, variance `2 / fan_in`), zero
/// biases, identity batch norm with running statistics `(0, 1)`.
pub fn init_params<T: Scalar>(spec: &NetworkSpec, seed: u64) -> Result<NetworkParams<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_hidden = spec.hidden_dims.len();
    let momentum = T::lit(spec.bn_momentum);
    let epsilon = T::lit(spec.bn_epsilon);
    let layers = spec
        .layer_dims()
        .into_iter()
        .enumerate()
        .map(|(l, (fan_in, fan_out))| {
            let std = (2.0 / fan_in as f64).sqrt();
            let normal = Normal::new(0.0, std).map_err(|e| DreError::InvalidSpec(e.to_string()))?;
            let w: Vec<T> = (0..fan_in * fan_out).map(|_| T::lit(normal.sample(&mut rng))).collect();
            Ok(LayerParams {
                weights: Matrix::from_vec(fan_in, fan_out, w)?,
                bias: vec![T::zero(); fan_out],
                norm: (l < n_hidden).then(|| BatchNorm::identity(fan_out, momentum, epsilon)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NetworkParams {
        spec: spec.clone(),
        layers,
    })
}

impl<T: Scalar> NetworkParams<T> {
    /// Trainable tensors in a fixed order: per layer `weights, bias[, gamma, beta]`.
    pub fn trainable_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for layer in &mut self.layers {
            out.push(layer.weights.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
            if let Some(bn) = &mut layer.norm {
                out.push(bn.gamma.as_mut_slice());
                out.push(bn.beta.as_mut_slice());
            }
        }
        out
    }

    pub fn trainable(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for layer in &self.layers {
            out.push(layer.weights.as_slice());
            out.push(layer.bias.as_slice());
            if let Some(bn) = &layer.norm {
                out.push(bn.gamma.as_slice());
                out.push(bn.beta.as_slice());
            }
        }
        out
    }

    pub fn n_trainable(&self) -> usize {
        self.trainable().iter().map(|s| s.len()).sum()
    }

    /// Checks layer shapes against the spec and that running variances are non-negative.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        let dims = self.spec.layer_dims();
        if dims.len() != self.layers.len() {
            return Err(DreError::dims("NetworkParams layers", dims.len(), self.layers.len()));
        }
        let n_hidden = self.spec.hidden_dims.len();
        for (l, ((fan_in, fan_out), layer)) in dims.iter().zip(&self.layers).enumerate() {
            if layer.weights.shape() != (*fan_in, *fan_out) || layer.bias.len() != *fan_out {
                return Err(DreError::dims(
                    "layer weights",
                    format!("{fan_in}x{fan_out}"),
                    format!("{:?} (layer {l})", layer.weights.shape()),
                ));
            }
            match (&layer.norm, l < n_hidden) {
                (Some(bn), true) => {
                    let widths = [bn.gamma.len(), bn.beta.len(), bn.running_mean.len(), bn.running_var.len()];
                    if widths.iter().any(|&w| w != *fan_out) {
                        return Err(DreError::dims("batch norm width", fan_out, format!("{widths:?}")));
                    }
                    if bn.running_var.iter().any(|&v| v < T::zero()) {
                        return Err(DreError::InvalidSpec(format!("negative running variance in layer {l}")));
                    }
                }
                (None, false) => {}
                _ => {
                    return Err(DreError::InvalidSpec(format!(
                        "layer {l}: batch norm must be present on hidden layers only"
                    )))
                }
            }
        }
        Ok(())
    }
}
