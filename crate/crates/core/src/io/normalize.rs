use std::fmt;
use std::str::FromStr;

use crate::error::{DreError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NormMode {
    #[default]
    None,
    MinMax,
    ZScore,
}

impl NormMode {
    pub(crate) fn code(self) -> u8 {
        match self {
            NormMode::None => 0,
            NormMode::MinMax => 1,
            NormMode::ZScore => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(NormMode::None),
            1 => Some(NormMode::MinMax),
            2 => Some(NormMode::ZScore),
            _ => None,
        }
    }
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormMode::None => "none",
            NormMode::MinMax => "minmax",
            NormMode::ZScore => "zscore",
        })
    }
}

impl FromStr for NormMode {
    type Err = DreError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NormMode::None),
            "minmax" => Ok(NormMode::MinMax),
            "zscore" => Ok(NormMode::ZScore),
            other => Err(DreError::InvalidConfig(format!("unknown normalization `{other}`"))),
        }
    }
}

/// Per-feature affine map `x' = (x - offset) * factor`, fitted on training
/// data and reused unchanged for out-of-sample rows. Features without spread
/// get `factor = 0` and map to 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalization<T> {
    pub mode: NormMode,
    pub dim: usize,
    pub offset: Vec<T>,
    pub factor: Vec<T>,
}

impl<T: Scalar> Normalization<T> {
    pub fn identity(dim: usize) -> Self {
        Self {
            mode: NormMode::None,
            dim,
            offset: Vec::new(),
            factor: Vec::new(),
        }
    }

    pub fn fit(x: &Matrix<T>, mode: NormMode) -> Self {
        let d = x.cols();
        let n = T::from_usize_lossy(x.rows().max(1));
        match mode {
            NormMode::None => Self::identity(d),
            NormMode::MinMax => {
                let mut lo = vec![T::infinity(); d];
                let mut hi = vec![T::neg_infinity(); d];
                for row in x.iter_rows() {
                    for j in 0..d {
                        lo[j] = lo[j].min(row[j]);
                        hi[j] = hi[j].max(row[j]);
                    }
                }
                let factor = lo
                    .iter()
                    .zip(&hi)
                    .map(|(&l, &h)| if h > l { (h - l).recip() } else { T::zero() })
                    .collect();
                let offset = lo.into_iter().map(|l| if l.is_finite() { l } else { T::zero() }).collect();
                Self {
                    mode,
                    dim: d,
                    offset,
                    factor,
                }
            }
            NormMode::ZScore => {
                let mut mean = vec![T::zero(); d];
                for row in x.iter_rows() {
                    for j in 0..d {
                        mean[j] += row[j];
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![T::zero(); d];
                for row in x.iter_rows() {
                    for j in 0..d {
                        let c = row[j] - mean[j];
                        var[j] += c * c;
                    }
                }
                let factor = var
                    .iter()
                    .map(|&v| {
                        let sd = (v / n).sqrt();
                        if sd > T::zero() {
                            sd.recip()
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                Self {
                    mode,
                    dim: d,
                    offset: mean,
                    factor,
                }
            }
        }
    }

    pub fn apply(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.dim {
            return Err(DreError::dims("normalization width", self.dim, x.cols()));
        }
        if self.mode == NormMode::None {
            return Ok(x.clone());
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = (*v - self.offset[j]) * self.factor[j];
            }
        }
        Ok(out)
    }
}
