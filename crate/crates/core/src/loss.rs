//! Low-dimensional kernels and the two embedding objectives.
//!
//! * t-SNE: `q_ij ∝ (1 + |y_i - y_j|^2)^(-(alpha + 1) / 2)`, normalized over
//!   all ordered pairs of the batch, and `KL(P || Q)`.
//! * UMAP: `w_ij = (1 + a |y_i - y_j|^(2b))^-1` and the fuzzy cross entropy
//!   `sum v log(v / w) + (1 - v) log((1 - v) / (1 - w))`, dense over all pairs.
//!
//! Both losses clamp the low-dimensional similarity inside their logs and
//! return the exact gradient of the clamped objective.

use crate::affinity::{AffinityKind, AffinityMatrix};
use crate::error::{DreError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Floor (and `1 - ceiling`) applied to `q` and `w` inside logarithms.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TsneKernelConfig<T> {
    pub alpha: T,
}

impl<T: Scalar> Default for TsneKernelConfig<T> {
    fn default() -> Self {
        Self { alpha: T::one() }
    }
}

impl<T: Scalar> TsneKernelConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.alpha > T::zero() && self.alpha.is_finite() {
            Ok(())
        } else {
            Err(DreError::InvalidConfig(format!("t-SNE alpha must be positive, got {}", self.alpha)))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UmapKernelConfig<T> {
    pub a: T,
    pub b: T,
}

impl<T: Scalar> Default for UmapKernelConfig<T> {
    fn default() -> Self {
        Self { a: T::one(), b: T::one() }
    }
}

impl<T: Scalar> UmapKernelConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.a > T::zero() && self.b > T::zero() && self.a.is_finite() && self.b.is_finite() {
            Ok(())
        } else {
            Err(DreError::InvalidConfig(format!("UMAP a and b must be positive, got a={} b={}", self.a, self.b)))
        }
    }
}

fn sq_dist_row<T: Scalar>(y: &Matrix<T>, i: usize, j: usize) -> T {
    y.row(i).iter().zip(y.row(j)).map(|(&a, &b)| (a - b) * (a - b)).sum()
}

fn check_batch<T: Scalar>(y: &Matrix<T>) -> Result<()> {
    if y.rows() < 2 {
        return Err(DreError::dims("embedding batch rows", ">= 2", y.rows()));
    }
    Ok(())
}

fn check_affinity<T: Scalar>(a: &AffinityMatrix<T>, kind: AffinityKind, y: &Matrix<T>) -> Result<()> {
    if a.kind != kind {
        return Err(DreError::InvalidConfig(format!("expected {kind:?} affinities, got {:?}", a.kind)));
    }
    let b = y.rows();
    if a.values.shape() != (b, b) {
        return Err(DreError::dims("affinity vs embedding", format!("{b}x{b}"), format!("{:?}", a.values.shape())));
    }
    Ok(())
}

/// Returns `(Q, kernel)`; `Q` sums to one over ordered pairs and has a zero diagonal.
pub fn compute_q<T: Scalar>(y: &Matrix<T>, cfg: &TsneKernelConfig<T>) -> Result<(Matrix<T>, Matrix<T>)> {
    cfg.validate()?;
    check_batch(y)?;
    let b = y.rows();
    let exponent = -(cfg.alpha + T::one()) / T::lit(2.0);
    let cauchy = cfg.alpha == T::one();
    let mut kernel = Matrix::zeros(b, b);
    let mut total = T::zero();
    for i in 0..b {
        for j in i + 1..b {
            let base = T::one() + sq_dist_row(y, i, j);
            let k = if cauchy { base.recip() } else { base.powf(exponent) };
            kernel[(i, j)] = k;
            kernel[(j, i)] = k;
            total += k + k;
        }
    }
    let q = kernel.map(|k| k / total);
    Ok((q, kernel))
}

/// `KL(P || Q)` and its gradient with respect to `Y`.
pub fn kl_loss_grad<T: Scalar>(p: &AffinityMatrix<T>, y: &Matrix<T>, cfg: &TsneKernelConfig<T>) -> Result<(T, Matrix<T>)> {
    check_batch(y)?;
    check_affinity(p, AffinityKind::TsneJoint, y)?;
    let (q, _) = compute_q(y, cfg)?;
    let b = y.rows();
    let clamp = T::lit(LOG_CLAMP);
    let s = (cfg.alpha + T::one()) / T::lit(2.0);
    let two_s = s + s;

    // With q = k / Z the clamped loss is const - sum_U p log k + S log Z, where
    // U holds the pairs with p > 0 and q above the clamp and S = sum_U p.
    let mut loss = T::zero();
    let mut attract = Matrix::zeros(b, b);
    let mut s_sum = T::zero();
    for i in 0..b {
        for j in 0..b {
            if i == j {
                continue;
            }
            let pij = p.values[(i, j)];
            if pij > T::zero() {
                let qij = q[(i, j)];
                loss += pij * (pij.ln() - qij.max(clamp).ln());
                if qij >= clamp {
                    attract[(i, j)] = pij;
                    s_sum += pij;
                }
            }
        }
    }

    let d = y.cols();
    let mut grad = Matrix::zeros(b, d);
    for i in 0..b {
        for j in i + 1..b {
            let coeff = (attract[(i, j)] + attract[(j, i)]) - s_sum * (q[(i, j)] + q[(j, i)]);
            if coeff == T::zero() {
                continue;
            }
            let scale = coeff * two_s / (T::one() + sq_dist_row(y, i, j));
            for c in 0..d {
                let diff = y[(i, c)] - y[(j, c)];
                grad[(i, c)] += scale * diff;
                grad[(j, c)] -= scale * diff;
            }
        }
    }
    Ok((loss, grad))
}

/// UMAP low-dimensional memberships; symmetric with zero diagonal.
pub fn compute_w<T: Scalar>(y: &Matrix<T>, cfg: &UmapKernelConfig<T>) -> Result<Matrix<T>> {
    cfg.validate()?;
    check_batch(y)?;
    let b = y.rows();
    let mut w = Matrix::zeros(b, b);
    for i in 0..b {
        for j in i + 1..b {
            let v = w_of_sq(sq_dist_row(y, i, j), cfg);
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    Ok(w)
}

#[inline]
fn w_of_sq<T: Scalar>(r: T, cfg: &UmapKernelConfig<T>) -> T {
    let rb = if cfg.b == T::one() { r } else { r.powf(cfg.b) };
    (T::one() + cfg.a * rb).recip()
}

/// `CE(V || W)` and its gradient with respect to `Y`.
pub fn ce_loss_grad<T: Scalar>(v: &AffinityMatrix<T>, y: &Matrix<T>, cfg: &UmapKernelConfig<T>) -> Result<(T, Matrix<T>)> {
    cfg.validate()?;
    check_batch(y)?;
    check_affinity(v, AffinityKind::UmapFuzzy, y)?;
    let b = y.rows();
    let d = y.cols();
    let lo = T::lit(LOG_CLAMP);
    let hi = T::one() - lo;
    let one = T::one();
    let two = T::lit(2.0);
    let unit_b = cfg.b == T::one();

    let mut loss = T::zero();
    let mut grad = Matrix::zeros(b, d);
    for i in 0..b {
        for j in i + 1..b {
            let r = sq_dist_row(y, i, j);
            let w = w_of_sq(r, cfg);
            let wc = w.max(lo).min(hi);
            let clamped = !(w > lo && w < hi);
            let mut dl_dw = T::zero();
            for vij in [v.values[(i, j)], v.values[(j, i)]] {
                if vij > T::zero() {
                    loss += vij * (vij.ln() - wc.ln());
                    dl_dw -= vij / wc;
                }
                if vij < one {
                    let nv = one - vij;
                    loss += nv * (nv.ln() - (one - wc).ln());
                    dl_dw += nv / (one - wc);
                }
            }
            if clamped || dl_dw == T::zero() {
                continue;
            }
            // dw/dr = -a b r^(b-1) w^2 with r the squared distance
            let rb1 = if unit_b { one } else { r.powf(cfg.b - one) };
            let dw_dr = -cfg.a * cfg.b * rb1 * w * w;
            let scale = dl_dw * dw_dr * two;
            for c in 0..d {
                let diff = y[(i, c)] - y[(j, c)];
                grad[(i, c)] += scale * diff;
                grad[(j, c)] -= scale * diff;
            }
        }
    }
    Ok((loss, grad))
}

/// Loss of either kind, dispatched on the affinity tag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelConfigs<T> {
    pub tsne: TsneKernelConfig<T>,
    pub umap: UmapKernelConfig<T>,
}

impl<T: Scalar> Default for KernelConfigs<T> {
    fn default() -> Self {
        Self {
            tsne: TsneKernelConfig::default(),
            umap: UmapKernelConfig::default(),
        }
    }
}

pub fn loss_grad<T: Scalar>(affinity: &AffinityMatrix<T>, y: &Matrix<T>, cfg: &KernelConfigs<T>) -> Result<(T, Matrix<T>)> {
    match affinity.kind {
        AffinityKind::TsneJoint => kl_loss_grad(affinity, y, &cfg.tsne),
        AffinityKind::UmapFuzzy => ce_loss_grad(affinity, y, &cfg.umap),
    }
}
