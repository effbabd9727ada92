use super::params::{BatchNorm, NetworkParams};
use super::spec::{Tap, INPUT_TAP};
use crate::error::{DreError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; running statistics are updated by the caller.
    Train,
    /// Running statistics; nothing is updated.
    Infer,
}

/// Cached intermediates of one dense layer.
#[derive(Clone, Debug)]
pub struct LayerTrace<T> {
    /// Dense output before the activation.
    pub pre: Matrix<T>,
    /// Normalized activations `x_hat`; `None` on the linear output layer.
    pub normalized: Option<Matrix<T>>,
    /// Layer output (post batch norm on hidden layers).
    pub output: Matrix<T>,
    /// Statistics used for normalization: batch moments in train mode,
    /// running moments in infer mode.
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub inv_std: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace<T> {
    pub mode: Mode,
    pub input: Matrix<T>,
    pub layers: Vec<LayerTrace<T>>,
    taps: Vec<Tap>,
}

impl<T: Scalar> ForwardTrace<T> {
    pub fn embedding(&self) -> &Matrix<T> {
        &self.layers.last().expect("network has an output layer").output
    }

    /// Post batch-norm output of the named layer (`input` returns the batch).
    pub fn tap_features(&self, name: &str) -> Result<Matrix<T>> {
        if name == INPUT_TAP {
            return Ok(self.input.clone());
        }
        let tap = self
            .taps
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| DreError::UnknownTap(name.to_string()))?;
        Ok(self.layers[tap.layer].output.clone())
    }
}

/// `x * w + bias` broadcast over rows.
fn dense<T: Scalar>(x: &Matrix<T>, w: &Matrix<T>, bias: &[T]) -> Result<Matrix<T>> {
    let mut z = x.matmul(w)?;
    let n = z.cols();
    for row in z.as_mut_slice().chunks_exact_mut(n.max(1)) {
        for (v, &b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
    Ok(z)
}

fn column_moments<T: Scalar>(a: &Matrix<T>) -> (Vec<T>, Vec<T>) {
    let (rows, cols) = a.shape();
    let inv_n = T::one() / T::from_usize_lossy(rows);
    let mut mean = vec![T::zero(); cols];
    for row in a.iter_rows() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m *= inv_n);
    let mut var = vec![T::zero(); cols];
    for row in a.iter_rows() {
        for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
            let d = x - m;
            *v += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v *= inv_n);
    (mean, var)
}

/// ReLU followed by batch normalization, in place on `pre`'s copy.
fn relu_batch_norm<T: Scalar>(pre: &Matrix<T>, bn: &BatchNorm<T>, mode: Mode) -> LayerTrace<T> {
    let act = pre.map(|z| z.max(T::zero()));
    let (mean, var) = match mode {
        Mode::Train => column_moments(&act),
        Mode::Infer => (bn.running_mean.clone(), bn.running_var.clone()),
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + bn.epsilon).sqrt()).collect();
    let mut normalized = act;
    let mut output = Matrix::zeros(pre.rows(), pre.cols());
    let cols = pre.cols();
    for i in 0..pre.rows() {
        let xh = normalized.row_mut(i);
        let out = &mut output.as_mut_slice()[i * cols..(i + 1) * cols];
        for j in 0..cols {
            let v = (xh[j] - mean[j]) * inv_std[j];
            xh[j] = v;
            out[j] = bn.gamma[j] * v + bn.beta[j];
        }
    }
    LayerTrace {
        pre: pre.clone(),
        normalized: Some(normalized),
        output,
        mean,
        var,
        inv_std,
    }
}

impl<T: Scalar> NetworkParams<T> {
    fn check_batch(&self, batch: &Matrix<T>, mode: Mode) -> Result<()> {
        if batch.cols() != self.spec.input_dim {
            return Err(DreError::dims("forward input columns", self.spec.input_dim, batch.cols()));
        }
        if mode == Mode::Train && batch.rows() < 2 {
            return Err(DreError::BatchTooSmall(batch.rows()));
        }
        Ok(())
    }

    /// Full forward pass. Pure: train mode reports batch statistics in the
    /// trace but does not touch the running statistics (see [`Self::absorb_batch_stats`]).
    pub fn forward(&self, batch: &Matrix<T>, mode: Mode) -> Result<(Matrix<T>, ForwardTrace<T>)> {
        self.check_batch(batch, mode)?;
        let mut layers: Vec<LayerTrace<T>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = layers.last().map_or(batch, |t| &t.output);
            let pre = dense(x, &layer.weights, &layer.bias)?;
            let trace = match &layer.norm {
                Some(bn) => relu_batch_norm(&pre, bn, mode),
                None => LayerTrace {
                    output: pre.clone(),
                    pre,
                    normalized: None,
                    mean: Vec::new(),
                    var: Vec::new(),
                    inv_std: Vec::new(),
                },
            };
            if !trace.output.is_finite() {
                return Err(DreError::NonFinite(format!("forward output of layer {}", layers.len())));
            }
            layers.push(trace);
        }
        let trace = ForwardTrace {
            mode,
            input: batch.clone(),
            layers,
            taps: self.spec.taps.clone(),
        };
        Ok((trace.embedding().clone(), trace))
    }

    /// Momentum update of every batch-norm running statistic from a train-mode trace.
    pub fn absorb_batch_stats(&mut self, trace: &ForwardTrace<T>) -> Result<()> {
        if trace.mode != Mode::Train {
            return Err(DreError::Training("running statistics need a train-mode trace".into()));
        }
        if trace.layers.len() != self.layers.len() {
            return Err(DreError::dims("trace layers", self.layers.len(), trace.layers.len()));
        }
        for (layer, lt) in self.layers.iter_mut().zip(&trace.layers) {
            if let Some(bn) = &mut layer.norm {
                bn.absorb(&lt.mean, &lt.var);
            }
        }
        Ok(())
    }

    /// Train-mode forward that also updates running statistics.
    pub fn forward_train(&mut self, batch: &Matrix<T>) -> Result<(Matrix<T>, ForwardTrace<T>)> {
        let out = self.forward(batch, Mode::Train)?;
        self.absorb_batch_stats(&out.1)?;
        Ok(out)
    }

    /// Infer-mode forward pass stopped at the named tap.
    pub fn features(&self, batch: &Matrix<T>, tap: &str) -> Result<Matrix<T>> {
        self.check_batch(batch, Mode::Infer)?;
        let Some(stop) = self.spec.tap_layer(tap)? else {
            return Ok(batch.clone());
        };
        let mut x = batch.clone();
        for layer in &self.layers[..=stop] {
            let pre = dense(&x, &layer.weights, &layer.bias)?;
            let bn = layer.norm.as_ref().expect("taps refer to hidden layers");
            x = relu_batch_norm(&pre, bn, Mode::Infer).output;
        }
        Ok(x)
    }

    /// Infer-mode embedding, evaluated in row chunks of `chunk` to bound memory.
    pub fn embed_chunked(&self, x: &Matrix<T>, chunk: usize) -> Result<Matrix<T>> {
        self.map_chunked(x, chunk, |batch| Ok(self.forward(batch, Mode::Infer)?.0))
    }

    /// Infer-mode tap features over all rows of `x`, in chunks.
    pub fn features_chunked(&self, x: &Matrix<T>, tap: &str, chunk: usize) -> Result<Matrix<T>> {
        self.map_chunked(x, chunk, |batch| self.features(batch, tap))
    }

    fn map_chunked(
        &self,
        x: &Matrix<T>,
        chunk: usize,
        f: impl Fn(&Matrix<T>) -> Result<Matrix<T>>,
    ) -> Result<Matrix<T>> {
        let chunk = chunk.max(1);
        let mut data = Vec::new();
        let mut cols = None;
        let mut start = 0;
        while start < x.rows() {
            let end = (start + chunk).min(x.rows());
            let out = f(&x.slice_rows(start, end))?;
            cols = Some(out.cols());
            data.extend_from_slice(out.as_slice());
            start = end;
        }
        match cols {
            Some(c) => Matrix::from_vec(x.rows(), c, data),
            None => f(x),
        }
    }
}
