//! Embedding-quality measures over a high-dimensional matrix `X`, its
//! projection `Y` and optional class labels.
//!
//! Neighbours are exact and brute force with Euclidean distance, self
//! excluded, ties broken by the lower index. The rank `r(i, j)` of `j` among
//! the neighbours of `i` starts at 1 for the nearest point.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{DreError, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const DEFAULT_K: usize = 7;

fn sq_dist_row<T: Scalar>(m: &Matrix<T>, i: usize, out: &mut [f64]) {
    let a = m.row(i);
    for (j, o) in out.iter_mut().enumerate() {
        *o = a.iter().zip(m.row(j)).map(|(&p, &q)| (p - q).as_f64().powi(2)).sum();
    }
}

/// `(d[l], l) < (d[j], j)`: distance first, index second.
#[inline]
fn closer(d: &[f64], l: usize, j: usize) -> bool {
    d[l] < d[j] || (d[l] == d[j] && l < j)
}

/// The `k` nearest indices to `i` given its distance row, nearest first.
fn knn_from_row(d: &[f64], i: usize, k: usize, scratch: &mut Vec<usize>) -> Vec<usize> {
    scratch.clear();
    scratch.extend((0..d.len()).filter(|&j| j != i));
    let cmp = |a: &usize, b: &usize| d[*a].total_cmp(&d[*b]).then(a.cmp(b));
    if k < scratch.len() {
        scratch.select_nth_unstable_by(k - 1, cmp);
    }
    let mut out = scratch[..k].to_vec();
    out.sort_by(cmp);
    out
}

/// Rank of `j` among the neighbours of `i` (1 = nearest).
fn rank_in_row(d: &[f64], i: usize, j: usize) -> usize {
    1 + (0..d.len()).filter(|&l| l != i && closer(d, l, j)).count()
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(DreError::InvalidConfig(format!("neighbourhood size {k} needs 1 <= K < N = {n}")));
    }
    Ok(())
}

fn check_pair<T: Scalar>(x: &Matrix<T>, y: &Matrix<T>) -> Result<()> {
    if x.rows() != y.rows() {
        return Err(DreError::dims("rows of X and Y", x.rows(), y.rows()));
    }
    Ok(())
}

fn check_labels(n: usize, labels: Option<&[u32]>) -> Result<&[u32]> {
    let l = labels.ok_or(DreError::MissingLabels)?;
    if l.len() != n {
        return Err(DreError::dims("labels", n, l.len()));
    }
    Ok(l)
}

/// Exact `N x K` neighbour table, nearest first.
pub fn knn_table<T: Scalar>(m: &Matrix<T>, k: usize) -> Result<Vec<Vec<usize>>> {
    let n = m.rows();
    check_k(n, k)?;
    let mut d = vec![0.0; n];
    let mut scratch = Vec::with_capacity(n);
    Ok((0..n)
        .map(|i| {
            sq_dist_row(m, i, &mut d);
            knn_from_row(&d, i, k, &mut scratch)
        })
        .collect())
}

fn hit_from_table(table: &[Vec<usize>], labels: &[u32]) -> f64 {
    let k = table.first().map_or(1, Vec::len);
    let hits: usize = table
        .iter()
        .enumerate()
        .map(|(i, nn)| nn.iter().filter(|&&j| labels[j] == labels[i]).count())
        .sum();
    hits as f64 / (k * table.len()) as f64
}

/// Leave-one-out nearest-neighbour label agreement in the projection.
pub fn one_nn_accuracy<T: Scalar>(y: &Matrix<T>, labels: Option<&[u32]>) -> Result<f64> {
    let labels = check_labels(y.rows(), labels)?;
    Ok(hit_from_table(&knn_table(y, 1)?, labels))
}

/// Mean fraction of each point's `K` projected neighbours sharing its label.
pub fn neighborhood_hit<T: Scalar>(y: &Matrix<T>, labels: Option<&[u32]>, k: usize) -> Result<f64> {
    let labels = check_labels(y.rows(), labels)?;
    Ok(hit_from_table(&knn_table(y, k)?, labels))
}

fn rank_penalty_factor(n: usize, k: usize) -> Result<f64> {
    let (nf, kf) = (n as f64, k as f64);
    let denom = nf * kf * (2.0 * nf - 3.0 * kf - 1.0);
    if denom <= 0.0 {
        return Err(DreError::UndefinedMetric(format!("rank normalization 2N - 3K - 1 <= 0 for N={n}, K={k}")));
    }
    Ok(2.0 / denom)
}

/// Penalizes points in the `K`-neighbourhood of `b` that are not in that of
/// `a`, by their rank in `a`. `trustworthiness(X, Y) = rank_agreement(X, Y)`
/// and `continuity(X, Y) = rank_agreement(Y, X)`.
fn rank_agreement<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, k: usize) -> Result<f64> {
    check_pair(a, b)?;
    let n = a.rows();
    check_k(n, k)?;
    let factor = rank_penalty_factor(n, k)?;
    let mut da = vec![0.0; n];
    let mut db = vec![0.0; n];
    let mut scratch = Vec::with_capacity(n);
    let mut total = 0usize;
    for i in 0..n {
        sq_dist_row(a, i, &mut da);
        sq_dist_row(b, i, &mut db);
        let na = knn_from_row(&da, i, k, &mut scratch);
        let nb = knn_from_row(&db, i, k, &mut scratch);
        for &j in &nb {
            if !na.contains(&j) {
                total += rank_in_row(&da, i, j) - k;
            }
        }
    }
    Ok(1.0 - factor * total as f64)
}

pub fn trustworthiness<T: Scalar>(x: &Matrix<T>, y: &Matrix<T>, k: usize) -> Result<f64> {
    rank_agreement(x, y, k)
}

pub fn continuity<T: Scalar>(x: &Matrix<T>, y: &Matrix<T>, k: usize) -> Result<f64> {
    rank_agreement(y, x, k)
}

/// `sum_{i<j} (dH - dL)^2 / sum_{i<j} dH^2` with Euclidean distances.
pub fn normalized_stress<T: Scalar>(x: &Matrix<T>, y: &Matrix<T>) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.rows();
    if n < 2 {
        return Err(DreError::UndefinedMetric("stress needs at least 2 points".into()));
    }
    let mut dx = vec![0.0; n];
    let mut dy = vec![0.0; n];
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        sq_dist_row(x, i, &mut dx);
        sq_dist_row(y, i, &mut dy);
        for j in i + 1..n {
            let h = dx[j].sqrt();
            let l = dy[j].sqrt();
            num += (h - l) * (h - l);
            den += h * h;
        }
    }
    if den == 0.0 {
        return Err(DreError::UndefinedMetric("all high-dimensional points coincide".into()));
    }
    Ok(num / den)
}

/// Replaces values by their 1-based ranks, ties sharing the average rank.
pub fn average_ranks(values: &mut [f64]) {
    let n = values.len();
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.sort_unstable_by(|&a, &b| values[a as usize].total_cmp(&values[b as usize]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; n];
    let mut s = 0;
    while s < n {
        let v = values[order[s] as usize];
        let mut e = s + 1;
        while e < n && values[order[e] as usize] == v {
            e += 1;
        }
        // positions s..e hold ranks s+1..=e
        let r = (s + 1 + e) as f64 / 2.0;
        for &o in &order[s..e] {
            ranks[o as usize] = r;
        }
        s = e;
    }
    values.copy_from_slice(&ranks);
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(DreError::UndefinedMetric("constant ranks in the Shepard diagram".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman correlation between all pairwise distances of `X` and of `Y`.
pub fn shepard_goodness<T: Scalar>(x: &Matrix<T>, y: &Matrix<T>) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.rows();
    if n < 3 {
        return Err(DreError::UndefinedMetric("Shepard goodness needs at least 3 points".into()));
    }
    let pairs = n * (n - 1) / 2;
    let mut hs = Vec::with_capacity(pairs);
    let mut ls = Vec::with_capacity(pairs);
    let mut dx = vec![0.0; n];
    let mut dy = vec![0.0; n];
    for i in 0..n {
        sq_dist_row(x, i, &mut dx);
        sq_dist_row(y, i, &mut dy);
        for j in i + 1..n {
            hs.push(dx[j].sqrt());
            ls.push(dy[j].sqrt());
        }
    }
    average_ranks(&mut hs);
    average_ranks(&mut ls);
    pearson(&hs, &ls)
}

/// Data, projection and optional labels evaluated together.
#[derive(Clone, Debug)]
pub struct LabeledEmbedding<T> {
    pub x: Matrix<T>,
    pub y: Matrix<T>,
    pub labels: Option<Vec<u32>>,
    pub k: usize,
}

impl<T: Scalar> LabeledEmbedding<T> {
    pub fn new(x: Matrix<T>, y: Matrix<T>, labels: Option<Vec<u32>>, k: usize) -> Result<Self> {
        check_pair(&x, &y)?;
        if let Some(l) = &labels {
            check_labels(x.rows(), Some(l))?;
        }
        check_k(x.rows(), k)?;
        Ok(Self { x, y, labels, k })
    }

    /// A uniform random subset of `m` rows in original order.
    pub fn subsample(&self, m: usize, seed: u64) -> Result<Self> {
        let n = self.x.rows();
        if m > n {
            return Err(DreError::InvalidConfig(format!("cannot subsample {m} of {n} rows")));
        }
        let mut idx = sample(&mut ChaCha8Rng::seed_from_u64(seed), n, m).into_vec();
        idx.sort_unstable();
        Self::new(
            self.x.select_rows(&idx),
            self.y.select_rows(&idx),
            self.labels.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            self.k,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub n: usize,
    pub k: usize,
    /// Label metrics are `None` when no labels were supplied.
    pub one_nn_accuracy: Option<f64>,
    pub neighborhood_hit: Option<f64>,
    pub trustworthiness: f64,
    pub continuity: f64,
    pub normalized_stress: f64,
    pub shepard_goodness: f64,
}

impl MetricsReport {
    /// `1 - stress`, the orientation used in comparison tables.
    pub fn one_minus_stress(&self) -> f64 {
        1.0 - self.normalized_stress
    }

    fn fields(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| v.to_string());
        vec![
            ("n", self.n.to_string()),
            ("k", self.k.to_string()),
            ("one_nn_accuracy", opt(self.one_nn_accuracy)),
            ("neighborhood_hit", opt(self.neighborhood_hit)),
            ("trustworthiness", self.trustworthiness.to_string()),
            ("continuity", self.continuity.to_string()),
            ("normalized_stress", self.normalized_stress.to_string()),
            ("one_minus_stress", self.one_minus_stress().to_string()),
            ("shepard_goodness", self.shepard_goodness.to_string()),
        ]
    }

    /// `key=value` lines; absent label metrics read `NA`.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// Header line plus one data row.
    pub fn to_csv(&self) -> String {
        let f = self.fields();
        let header: Vec<&str> = f.iter().map(|(k, _)| *k).collect();
        let row: Vec<&str> = f.iter().map(|(_, v)| v.as_str()).collect();
        format!("{}\n{}\n", header.join(","), row.join(","))
    }
}

/// All six measures. Distances are computed once per row of each space.
pub fn full_report<T: Scalar>(e: &LabeledEmbedding<T>) -> Result<MetricsReport> {
    let (x, y, k) = (&e.x, &e.y, e.k);
    check_pair(x, y)?;
    let n = x.rows();
    check_k(n, k)?;
    if n < 3 {
        return Err(DreError::UndefinedMetric("the report needs at least 3 points".into()));
    }
    let factor = rank_penalty_factor(n, k)?;
    let labels = match &e.labels {
        Some(l) => Some(check_labels(n, Some(l))?),
        None => None,
    };

    let pairs = n * (n - 1) / 2;
    let mut hs = Vec::with_capacity(pairs);
    let mut ls = Vec::with_capacity(pairs);
    let mut dx = vec![0.0; n];
    let mut dy = vec![0.0; n];
    let mut scratch = Vec::with_capacity(n);
    let (mut trust, mut cont) = (0usize, 0usize);
    let (mut nn_hits, mut k_hits) = (0usize, 0usize);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        sq_dist_row(x, i, &mut dx);
        sq_dist_row(y, i, &mut dy);
        let nx = knn_from_row(&dx, i, k, &mut scratch);
        let ny = knn_from_row(&dy, i, k, &mut scratch);
        for &j in &ny {
            if !nx.contains(&j) {
                trust += rank_in_row(&dx, i, j) - k;
            }
        }
        for &j in &nx {
            if !ny.contains(&j) {
                cont += rank_in_row(&dy, i, j) - k;
            }
        }
        if let Some(l) = labels {
            nn_hits += usize::from(l[ny[0]] == l[i]);
            k_hits += ny.iter().filter(|&&j| l[j] == l[i]).count();
        }
        for j in i + 1..n {
            let h = dx[j].sqrt();
            let lo = dy[j].sqrt();
            num += (h - lo) * (h - lo);
            den += h * h;
            hs.push(h);
            ls.push(lo);
        }
    }
    if den == 0.0 {
        return Err(DreError::UndefinedMetric("all high-dimensional points coincide".into()));
    }
    average_ranks(&mut hs);
    average_ranks(&mut ls);
    let shepard = pearson(&hs, &ls)?;
    Ok(MetricsReport {
        n,
        k,
        one_nn_accuracy: labels.map(|_| nn_hits as f64 / n as f64),
        neighborhood_hit: labels.map(|_| k_hits as f64 / (n * k) as f64),
        trustworthiness: 1.0 - factor * trust as f64,
        continuity: 1.0 - factor * cont as f64,
        normalized_stress: num / den,
        shepard_goodness: shepard,
    })
}
