use super::forward::{ForwardTrace, Mode};
use super::params::NetworkParams;
use crate::error::{DreError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
    /// `(d gamma, d beta)` for hidden layers.
    pub norm: Option<(Vec<T>, Vec<T>)>,
}

/// Gradients for every trainable tensor, in the same order as
/// [`NetworkParams::trainable`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGrads<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn tensors(&self) -> Vec<&[T]> {
        let mut out = Vec::with_capacity(self.layers.len() * 4);
        for layer in &self.layers {
            out.push(layer.weights.as_slice());
            out.push(layer.bias.as_slice());
            if let Some((g, b)) = &layer.norm {
                out.push(g.as_slice());
                out.push(b.as_slice());
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    pub fn scale(&mut self, s: T) {
        for layer in &mut self.layers {
            layer.weights.scale(s);
            layer.bias.iter_mut().for_each(|x| *x *= s);
            if let Some((g, b)) = &mut layer.norm {
                g.iter_mut().chain(b.iter_mut()).for_each(|x| *x *= s);
            }
        }
    }
}

fn column_sums<T: Scalar>(m: &Matrix<T>) -> Vec<T> {
    let mut s = vec![T::zero(); m.cols()];
    for row in m.iter_rows() {
        for (a, &x) in s.iter_mut().zip(row) {
            *a += x;
        }
    }
    s
}

impl<T: Scalar> NetworkParams<T> {
    /// Exact reverse pass through `Dense -> ReLU -> BatchNorm` stacks,
    /// including the dependence of batch mean and variance on every row.
    pub fn backward(&self, trace: &ForwardTrace<T>, grad_embedding: &Matrix<T>) -> Result<Gradients<T>> {
        if trace.mode != Mode::Train {
            return Err(DreError::Training("backward needs a train-mode trace".into()));
        }
        if trace.layers.len() != self.layers.len() {
            return Err(DreError::dims("trace layers", self.layers.len(), trace.layers.len()));
        }
        let out_shape = trace.embedding().shape();
        if grad_embedding.shape() != out_shape {
            return Err(DreError::dims(
                "grad_embedding",
                format!("{out_shape:?}"),
                format!("{:?}", grad_embedding.shape()),
            ));
        }

        let batch = T::from_usize_lossy(grad_embedding.rows());
        let mut grads: Vec<LayerGrads<T>> = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_embedding.clone();

        for (l, (layer, lt)) in self.layers.iter().zip(&trace.layers).enumerate().rev() {
            if layer.weights.cols() != lt.pre.cols() {
                return Err(DreError::dims("trace/params layer width", layer.weights.cols(), lt.pre.cols()));
            }
            // Gradient w.r.t. the dense pre-activation, plus batch-norm grads.
            let (dz, norm_grads) = match (&layer.norm, &lt.normalized) {
                (Some(bn), Some(xhat)) => {
                    let cols = xhat.cols();
                    let mut dgamma = vec![T::zero(); cols];
                    let dbeta = column_sums(&upstream);
                    for (row_g, row_x) in upstream.iter_rows().zip(xhat.iter_rows()) {
                        for j in 0..cols {
                            dgamma[j] += row_g[j] * row_x[j];
                        }
                    }
                    // With dxhat = g * gamma:
                    //   sum_i dxhat = gamma * dbeta, sum_i dxhat * xhat = gamma * dgamma
                    //   dact = inv_std / B * (B * dxhat - sum dxhat - xhat * sum(dxhat * xhat))
                    let mut dz = upstream;
                    for i in 0..dz.rows() {
                        let row_x = xhat.row(i);
                        let row_pre = lt.pre.row(i);
                        let row = dz.row_mut(i);
                        for j in 0..cols {
                            if row_pre[j] > T::zero() {
                                let g = bn.gamma[j];
                                let dxhat = row[j] * g;
                                row[j] = lt.inv_std[j] / batch
                                    * (batch * dxhat - g * dbeta[j] - row_x[j] * g * dgamma[j]);
                            } else {
                                row[j] = T::zero();
                            }
                        }
                    }
                    (dz, Some((dgamma, dbeta)))
                }
                (None, None) => (upstream, None),
                _ => return Err(DreError::Training(format!("trace/params mismatch at layer {l}"))),
            };

            let x_prev = if l == 0 { &trace.input } else { &trace.layers[l - 1].output };
            let dw = x_prev.matmul_tn(&dz)?;
            let db = column_sums(&dz);
            upstream = if l > 0 { dz.matmul_nt(&layer.weights)? } else { Matrix::zeros(0, 0) };
            grads.push(LayerGrads {
                weights: dw,
                bias: db,
                norm: norm_grads,
            });
        }
        grads.reverse();
        Ok(Gradients { layers: grads })
    }
}
