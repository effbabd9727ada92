//! High-dimensional mini-batch affinities.
//!
//! * t-SNE: Gaussian conditionals `p_{j|i}` with a per-row bandwidth matched
//!   to a target perplexity, symmetrized into joint probabilities
//!   `p_ij = (p_{j|i} + p_{i|j}) / 2B` over a batch of `B` rows.
//! * UMAP: memberships `v_{j|i} = exp(-max(0, d_ij - rho_i) / sigma_i)` over
//!   the `k` nearest neighbours, combined by the probabilistic union
//!   `v_ij = v_{j|i} + v_{i|j} - v_{j|i} v_{i|j}`.
//!
//! The same routines are applied to network features, so affinities of
//! raw rows and of tap outputs come from one code path.

use crate::error::{DreError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Bandwidth search bracket shared by both calibrations.
pub const SIGMA_MIN: f64 = 1e-20;
pub const SIGMA_MAX: f64 = 1e20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AffinityKind {
    TsneJoint,
    UmapFuzzy,
}

/// Symmetric `B x B` affinity with exact zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinityMatrix<T> {
    pub kind: AffinityKind,
    pub values: Matrix<T>,
}

impl<T: Scalar> AffinityMatrix<T> {
    pub fn size(&self) -> usize {
        self.values.rows()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerplexityConfig<T> {
    pub perplexity: T,
    /// Absolute tolerance on the achieved perplexity.
    pub tolerance: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for PerplexityConfig<T> {
    fn default() -> Self {
        Self {
            perplexity: T::lit(30.0),
            tolerance: T::lit(1e-3),
            max_iter: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UmapGraphConfig<T> {
    pub k: usize,
    /// Absolute tolerance on `sum_j exp(..) - log2(k)`.
    pub tolerance: T,
    pub max_iter: usize,
}

impl<T: Scalar> Default for UmapGraphConfig<T> {
    fn default() -> Self {
        Self {
            k: 15,
            tolerance: T::lit(1e-3),
            max_iter: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AffinityConfig<T> {
    Tsne(PerplexityConfig<T>),
    Umap(UmapGraphConfig<T>),
}

impl<T> AffinityConfig<T> {
    pub fn kind(&self) -> AffinityKind {
        match self {
            AffinityConfig::Tsne(_) => AffinityKind::TsneJoint,
            AffinityConfig::Umap(_) => AffinityKind::UmapFuzzy,
        }
    }
}

/// Squared Euclidean distances between all rows, symmetric with zero diagonal.
///
/// Uses `|a|^2 + |b|^2 - 2 a.b` through GEMM and recomputes directly the
/// pairs where cancellation leaves the result within rounding noise of zero,
/// so identical rows get exactly 0.
pub fn pairwise_sq_dist<T: Scalar>(x: &Matrix<T>) -> Result<Matrix<T>> {
    let b = x.rows();
    if b < 2 {
        return Err(DreError::dims("pairwise_sq_dist rows", ">= 2", b));
    }
    let norms: Vec<T> = x.iter_rows().map(|r| r.iter().map(|&v| v * v).sum()).collect();
    let gram = x.matmul_nt(x)?;
    let refine = T::epsilon().sqrt();
    let two = T::lit(2.0);
    let mut d = Matrix::zeros(b, b);
    for i in 0..b {
        for j in i + 1..b {
            let scale = norms[i] + norms[j];
            let mut v = scale - two * gram[(i, j)];
            if v <= refine * scale {
                v = x.row(i).iter().zip(x.row(j)).map(|(&p, &q)| (p - q) * (p - q)).sum();
            }
            let v = v.max(T::zero());
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    Ok(d)
}

/// Outcome of one perplexity calibration.
#[derive(Clone, Debug, PartialEq)]
pub struct SigmaSearch<T> {
    pub sigma: T,
    /// Conditional probabilities over the row's neighbours; sums to 1.
    pub p_cond: Vec<T>,
    /// Achieved perplexity `exp(H)` with `H` in nats (equal to `2^H` in bits).
    pub perplexity: T,
    /// False when the target was not reached and a bracket boundary was returned.
    pub converged: bool,
}

/// Gaussian conditional row and its perplexity for one bandwidth.
fn gaussian_row<T: Scalar>(shifted: &[T], sigma: T) -> (Vec<T>, T) {
    let beta = (T::lit(2.0) * sigma * sigma).recip();
    let w: Vec<T> = shifted
        .iter()
        .map(|&s| if s == T::zero() { T::one() } else { (-(s * beta)).exp() })
        .collect();
    let z: T = w.iter().copied().sum();
    // H = ln Z + sum_j p_j s_j beta; terms with p_j = 0 contribute nothing.
    let mut weighted = T::zero();
    for (&wj, &sj) in w.iter().zip(shifted) {
        if wj > T::zero() && sj > T::zero() {
            weighted += wj * (sj * beta);
        }
    }
    let h = z.ln() + weighted / z;
    (w.into_iter().map(|v| v / z).collect(), h.exp())
}

/// Entropy in nats of the Gaussian row at `sigma = exp(u)` and its slope in `u`.
/// With `t_j = s_j / (2 sigma^2)`: `H = ln Z + E[t]` and `dH/du = 2 Var[t]`.
fn entropy_slope<T: Scalar>(shifted: &[T], u: T) -> (T, T) {
    let sigma = u.exp();
    let beta = (T::lit(2.0) * sigma * sigma).recip();
    let (mut z, mut m1, mut m2) = (T::zero(), T::zero(), T::zero());
    for &s in shifted {
        if s == T::zero() {
            z += T::one();
            continue;
        }
        let t = s * beta;
        let w = (-t).exp();
        if w > T::zero() {
            z += w;
            m1 += w * t;
            m2 += w * t * t;
        }
    }
    let e1 = m1 / z;
    let e2 = m2 / z;
    (z.ln() + e1, T::lit(2.0) * (e2 - e1 * e1).max(T::zero()))
}

/// Solves `exp(H(sigma)) = target` inside the `ln sigma` bracket. Newton steps
/// are taken when they stay inside the current bracket, bisection otherwise.
fn perplexity_search<T: Scalar>(shifted: &[T], cfg: &PerplexityConfig<T>) -> (T, bool) {
    let h_star = cfg.perplexity.ln();
    let mut lo = T::lit(SIGMA_MIN).ln();
    let mut hi = T::lit(SIGMA_MAX).ln();
    let mean = shifted.iter().copied().sum::<T>() / T::from_usize_lossy(shifted.len());
    let mut u = (mean.ln() / T::lit(2.0)).max(lo).min(hi);
    for _ in 0..cfg.max_iter {
        let (h, slope) = entropy_slope(shifted, u);
        if (h.exp() - cfg.perplexity).abs() <= cfg.tolerance {
            return (u.exp(), true);
        }
        if h > h_star {
            hi = u;
        } else {
            lo = u;
        }
        let newton = u - (h - h_star) / slope;
        u = if slope > T::zero() && newton > lo && newton < hi {
            newton
        } else {
            (lo + hi) / T::lit(2.0)
        };
    }
    (u.exp(), false)
}

fn check_row<T: Scalar>(row: &[T], row_idx: usize) -> Result<()> {
    if let Some(j) = row.iter().position(|v| !v.is_finite() || *v < T::zero()) {
        return Err(DreError::DegenerateRow {
            row: row_idx,
            reason: format!("distance {j} is {}", row[j]),
        });
    }
    Ok(())
}

/// Bisection in `ln sigma` over `[SIGMA_MIN, SIGMA_MAX]` for an increasing
/// objective. Returns `(sigma, converged)`.
fn log_bisect<T: Scalar>(target: T, tol: T, max_iter: usize, mut objective: impl FnMut(T) -> T) -> (T, bool) {
    let mut lo = T::lit(SIGMA_MIN).ln();
    let mut hi = T::lit(SIGMA_MAX).ln();
    let mut mid = T::zero();
    for _ in 0..max_iter {
        let sigma = mid.exp();
        let value = objective(sigma);
        if (value - target).abs() <= tol {
            return (sigma, true);
        }
        if value > target {
            hi = mid;
        } else {
            lo = mid;
        }
        mid = (lo + hi) / T::lit(2.0);
    }
    (mid.exp(), false)
}

fn sigma_search_row<T: Scalar>(dist_row: &[T], cfg: &PerplexityConfig<T>, row_idx: usize) -> Result<SigmaSearch<T>> {
    let n = dist_row.len();
    if n < 2 {
        return Err(DreError::InvalidConfig(format!("perplexity search needs at least 2 neighbours, got {n}")));
    }
    if !(cfg.perplexity > T::zero()) || !(cfg.tolerance > T::zero()) {
        return Err(DreError::InvalidConfig("perplexity and tolerance must be positive".into()));
    }
    check_row(dist_row, row_idx)?;
    let dmin = dist_row.iter().copied().fold(T::infinity(), T::min);
    let shifted: Vec<T> = dist_row.iter().map(|&d| d - dmin).collect();

    if shifted.iter().all(|&s| s == T::zero()) {
        // Uniform for every sigma: perplexity is n regardless of bandwidth.
        let uniform = T::one() / T::from_usize_lossy(n);
        let perplexity = T::from_usize_lossy(n);
        if (perplexity - cfg.perplexity).abs() > cfg.tolerance {
            return Err(DreError::DegenerateRow {
                row: row_idx,
                reason: format!("all {n} distances equal; perplexity fixed at {n}, target {}", cfg.perplexity),
            });
        }
        return Ok(SigmaSearch {
            sigma: T::one(),
            p_cond: vec![uniform; n],
            perplexity,
            converged: true,
        });
    }

    let (lo_row, lo_perp) = gaussian_row(&shifted, T::lit(SIGMA_MIN));
    if lo_perp - cfg.perplexity > cfg.tolerance {
        return Ok(SigmaSearch {
            sigma: T::lit(SIGMA_MIN),
            p_cond: lo_row,
            perplexity: lo_perp,
            converged: false,
        });
    }
    let (hi_row, hi_perp) = gaussian_row(&shifted, T::lit(SIGMA_MAX));
    if cfg.perplexity - hi_perp > cfg.tolerance {
        return Ok(SigmaSearch {
            sigma: T::lit(SIGMA_MAX),
            p_cond: hi_row,
            perplexity: hi_perp,
            converged: false,
        });
    }

    let (sigma, converged) = perplexity_search(&shifted, cfg);
    let (p_cond, perplexity) = gaussian_row(&shifted, sigma);
    Ok(SigmaSearch {
        sigma,
        p_cond,
        perplexity,
        converged,
    })
}

/// Calibrates one row of squared distances (self excluded) to the target perplexity.
pub fn sigma_search<T: Scalar>(dist_row: &[T], cfg: &PerplexityConfig<T>) -> Result<SigmaSearch<T>> {
    sigma_search_row(dist_row, cfg, 0)
}

/// Row-calibrated conditional matrix `p_{j|i}` from squared distances.
/// Returns the matrix and one [`SigmaSearch`] summary per row (with `p_cond` emptied).
pub fn conditional_p<T: Scalar>(sq_dist: &Matrix<T>, cfg: &PerplexityConfig<T>) -> Result<(Matrix<T>, Vec<SigmaSearch<T>>)> {
    let b = sq_dist.rows();
    if sq_dist.cols() != b {
        return Err(DreError::dims("conditional_p", "square matrix", format!("{:?}", sq_dist.shape())));
    }
    if !(cfg.perplexity < T::from_usize_lossy(b.saturating_sub(1))) {
        return Err(DreError::InvalidConfig(format!(
            "perplexity {} must be below batch size - 1 = {}",
            cfg.perplexity,
            b.saturating_sub(1)
        )));
    }
    let mut p = Matrix::zeros(b, b);
    let mut summaries = Vec::with_capacity(b);
    let mut row = Vec::with_capacity(b - 1);
    for i in 0..b {
        row.clear();
        row.extend(sq_dist.row(i).iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &d)| d));
        let mut search = sigma_search_row(&row, cfg, i)?;
        let out = p.row_mut(i);
        for (slot, &v) in (0..b).filter(|&j| j != i).zip(&search.p_cond) {
            out[slot] = v;
        }
        search.p_cond = Vec::new();
        summaries.push(search);
    }
    Ok((p, summaries))
}

/// `p_ij = (p_{j|i} + p_{i|j}) / 2B`.
pub fn joint_p<T: Scalar>(p_cond: &Matrix<T>) -> Result<AffinityMatrix<T>> {
    let b = p_cond.rows();
    if p_cond.cols() != b {
        return Err(DreError::dims("joint_p", "square matrix", format!("{:?}", p_cond.shape())));
    }
    let denom = T::lit(2.0) * T::from_usize_lossy(b);
    let mut values = Matrix::zeros(b, b);
    for i in 0..b {
        for j in i + 1..b {
            let v = (p_cond[(i, j)] + p_cond[(j, i)]) / denom;
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Ok(AffinityMatrix {
        kind: AffinityKind::TsneJoint,
        values,
    })
}

/// Outcome of one UMAP row calibration.
#[derive(Clone, Debug, PartialEq)]
pub struct UmapCalibration<T> {
    pub rho: T,
    pub sigma: T,
    /// Indices (into the calibrated row) of the `k` nearest neighbours, nearest first.
    pub neighbors: Vec<usize>,
    /// False when `log2(k)` was unreachable and a bracket boundary was returned.
    pub converged: bool,
}

/// Directed membership `exp(-max(0, d - rho) / sigma)`.
#[inline]
pub fn membership<T: Scalar>(d: T, rho: T, sigma: T) -> T {
    (-((d - rho).max(T::zero()) / sigma)).exp()
}

fn membership_sum<T: Scalar>(dists: &[T], rho: T, sigma: T) -> T {
    dists.iter().map(|&d| membership(d, rho, sigma)).sum()
}

fn umap_rho_sigma_row<T: Scalar>(dist_row: &[T], cfg: &UmapGraphConfig<T>, row_idx: usize) -> Result<UmapCalibration<T>> {
    if cfg.k < 2 {
        return Err(DreError::InvalidConfig(format!("UMAP needs k >= 2 (log2(k) = 0 is unreachable), got {}", cfg.k)));
    }
    if dist_row.len() < cfg.k {
        return Err(DreError::InvalidConfig(format!(
            "row has {} neighbours, fewer than k = {}",
            dist_row.len(),
            cfg.k
        )));
    }
    check_row(dist_row, row_idx)?;
    let mut order: Vec<usize> = (0..dist_row.len()).collect();
    let cmp = |a: &usize, b: &usize| dist_row[*a].partial_cmp(&dist_row[*b]).expect("finite").then(a.cmp(b));
    if cfg.k < order.len() {
        order.select_nth_unstable_by(cfg.k - 1, cmp);
        order.truncate(cfg.k);
    }
    order.sort_by(cmp);
    let knn: Vec<T> = order.iter().map(|&j| dist_row[j]).collect();
    let rho = knn[0];
    let target = T::from_usize_lossy(cfg.k).log2();

    let lo = T::lit(SIGMA_MIN);
    let hi = T::lit(SIGMA_MAX);
    let (sigma, converged) = if membership_sum(&knn, rho, lo) - target > cfg.tolerance {
        (lo, false)
    } else if target - membership_sum(&knn, rho, hi) > cfg.tolerance {
        (hi, false)
    } else {
        log_bisect(target, cfg.tolerance, cfg.max_iter, |s| membership_sum(&knn, rho, s))
    };
    Ok(UmapCalibration {
        rho,
        sigma,
        neighbors: order,
        converged,
    })
}

/// `rho` (nearest-neighbour distance) and `sigma` solving
/// `sum_{j<=k} exp(-max(0, d_j - rho) / sigma) = log2(k)` over the `k` nearest entries.
pub fn umap_rho_sigma<T: Scalar>(dist_row: &[T], cfg: &UmapGraphConfig<T>) -> Result<UmapCalibration<T>> {
    umap_rho_sigma_row(dist_row, cfg, 0)
}

/// Probabilistic union `a + b - ab` of two directed memberships, evaluated
/// as `1 - (1 - a)(1 - b)` so that a membership of 1 stays exactly 1.
#[inline]
pub fn fuzzy_union<T: Scalar>(a: T, b: T) -> T {
    T::one() - (T::one() - a) * (T::one() - b)
}

/// Affinity matrix plus the rows whose calibration hit a bracket boundary.
#[derive(Clone, Debug)]
pub struct Calibrated<T> {
    pub affinity: AffinityMatrix<T>,
    pub unconverged_rows: Vec<usize>,
}

/// Fuzzy UMAP memberships over Euclidean distances between rows of `x`.
pub fn fuzzy_v<T: Scalar>(x: &Matrix<T>, cfg: &UmapGraphConfig<T>) -> Result<Calibrated<T>> {
    let b = x.rows();
    if b <= cfg.k {
        return Err(DreError::InvalidConfig(format!("batch of {b} rows needs more than k = {} rows", cfg.k)));
    }
    let dist = pairwise_sq_dist(x)?.map(|v| v.sqrt());
    let mut directed = Matrix::zeros(b, b);
    let mut unconverged = Vec::new();
    let mut row = Vec::with_capacity(b - 1);
    for i in 0..b {
        row.clear();
        row.extend(dist.row(i).iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &d)| d));
        let cal = umap_rho_sigma_row(&row, cfg, i)?;
        if !cal.converged {
            unconverged.push(i);
        }
        for &slot in &cal.neighbors {
            let j = if slot < i { slot } else { slot + 1 };
            directed[(i, j)] = membership(row[slot], cal.rho, cal.sigma);
        }
    }
    let mut values = Matrix::zeros(b, b);
    for i in 0..b {
        for j in i + 1..b {
            let v = fuzzy_union(directed[(i, j)], directed[(j, i)]);
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Ok(Calibrated {
        affinity: AffinityMatrix {
            kind: AffinityKind::UmapFuzzy,
            values,
        },
        unconverged_rows: unconverged,
    })
}

/// t-SNE joint probabilities for the rows of `x`.
pub fn tsne_p<T: Scalar>(x: &Matrix<T>, cfg: &PerplexityConfig<T>) -> Result<Calibrated<T>> {
    let (p_cond, rows) = conditional_p(&pairwise_sq_dist(x)?, cfg)?;
    let unconverged = rows.iter().enumerate().filter(|(_, r)| !r.converged).map(|(i, _)| i).collect();
    Ok(Calibrated {
        affinity: joint_p(&p_cond)?,
        unconverged_rows: unconverged,
    })
}

/// Affinities of a batch of points, which may be raw rows or network
/// features: `P` / `V` for raw data, `P~` / `V~` for tap outputs.
pub fn affinities_from_features<T: Scalar>(features: &Matrix<T>, cfg: &AffinityConfig<T>) -> Result<Calibrated<T>> {
    match cfg {
        AffinityConfig::Tsne(c) => tsne_p(features, c),
        AffinityConfig::Umap(c) => fuzzy_v(features, c),
    }
}
