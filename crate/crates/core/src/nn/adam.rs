use super::backward::Gradients;
use super::params::NetworkParams;
use crate::error::{DreError, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> Default for AdamConfig<T> {
    fn default() -> Self {
        Self {
            lr: T::lit(1e-3),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            epsilon: T::lit(1e-7),
        }
    }
}

/// Moment accumulators, one buffer per trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig<T>,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &NetworkParams<T>, config: AdamConfig<T>) -> Self {
        let zeros: Vec<Vec<T>> = params.trainable().iter().map(|s| vec![T::zero(); s.len()]).collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. A gradient containing NaN or infinity
/// rejects the step and leaves parameters and state untouched.
pub fn adam_step<T: Scalar>(params: &mut NetworkParams<T>, grads: &Gradients<T>, state: &mut AdamState<T>) -> Result<()> {
    let g_tensors = grads.tensors();
    {
        let p_tensors = params.trainable();
        if g_tensors.len() != p_tensors.len() || state.m.len() != p_tensors.len() {
            return Err(DreError::dims("adam tensors", p_tensors.len(), g_tensors.len()));
        }
        for (k, (p, g)) in p_tensors.iter().zip(&g_tensors).enumerate() {
            if p.len() != g.len() || state.m[k].len() != p.len() {
                return Err(DreError::dims("adam tensor length", p.len(), g.len()));
            }
        }
    }
    if !grads.all_finite() {
        return Err(DreError::NonFinite("gradient passed to adam_step".into()));
    }

    let AdamConfig { lr, beta1, beta2, epsilon } = state.config;
    state.t += 1;
    let t = i32::try_from(state.t).unwrap_or(i32::MAX);
    let c1 = T::one() - beta1.powi(t);
    let c2 = T::one() - beta2.powi(t);
    for (k, (p, g)) in params.trainable_mut().into_iter().zip(&g_tensors).enumerate() {
        let m = &mut state.m[k];
        let v = &mut state.v[k];
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = beta1 * m[i] + (T::one() - beta1) * gi;
            v[i] = beta2 * v[i] + (T::one() - beta2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        }
    }
    Ok(())
}
