//! Deliberately naive reference metrics: full sorts, explicit rank tables
//! and a separate ranking routine for Spearman.

use dre_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn dist(m: &Matrix<f64>, i: usize, j: usize) -> f64 {
    (0..m.cols()).map(|c| (m[(i, c)] - m[(j, c)]).powi(2)).sum::<f64>().sqrt()
}

/// Every other point ordered by (distance, index).
pub fn sorted_neighbours(m: &Matrix<f64>, i: usize) -> Vec<usize> {
    let mut v: Vec<(f64, usize)> = (0..m.rows()).filter(|&j| j != i).map(|j| (dist(m, i, j), j)).collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.into_iter().map(|(_, j)| j).collect()
}

pub fn naive_hit(y: &Matrix<f64>, labels: &[u32], k: usize) -> f64 {
    let n = y.rows();
    let mut total = 0.0;
    for i in 0..n {
        let nn = sorted_neighbours(y, i);
        total += nn[..k].iter().filter(|&&j| labels[j] == labels[i]).count() as f64 / k as f64;
    }
    total / n as f64
}

pub fn naive_trust(x: &Matrix<f64>, y: &Matrix<f64>, k: usize) -> f64 {
    let n = x.rows();
    let mut sum = 0.0;
    for i in 0..n {
        let ox = sorted_neighbours(x, i);
        let oy = sorted_neighbours(y, i);
        for &j in &oy[..k] {
            if !ox[..k].contains(&j) {
                let rank = ox.iter().position(|&l| l == j).unwrap() + 1;
                sum += rank as f64 - k as f64;
            }
        }
    }
    let (nf, kf) = (n as f64, k as f64);
    1.0 - 2.0 / (nf * kf * (2.0 * nf - 3.0 * kf - 1.0)) * sum
}

pub fn naive_stress(x: &Matrix<f64>, y: &Matrix<f64>) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..x.rows() {
        for j in 0..i {
            num += (dist(x, i, j) - dist(y, i, j)).powi(2);
            den += dist(x, i, j).powi(2);
        }
    }
    num / den
}

pub fn ranks_with_ties(v: &[f64]) -> Vec<f64> {
    // rank = 1 + #smaller + (#equal - 1) / 2
    v.iter()
        .map(|&a| {
            let smaller = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            1.0 + smaller + (equal - 1.0) / 2.0
        })
        .collect()
}

pub fn naive_spearman(x: &Matrix<f64>, y: &Matrix<f64>) -> f64 {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..x.rows() {
        for j in 0..i {
            a.push(dist(x, i, j));
            b.push(dist(y, i, j));
        }
    }
    let ra = ranks_with_ties(&a);
    let rb = ranks_with_ties(&b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let cov: f64 = ra.iter().zip(&rb).map(|(p, q)| (p - ma) * (q - mb)).sum();
    let va: f64 = ra.iter().map(|p| (p - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|q| (q - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Random data, a noisy 2-D projection of it, labels and K.
pub fn instance(seed: u64) -> (Matrix<f64>, Matrix<f64>, Vec<u32>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(20..=60);
    let d = rng.random_range(4..=6);
    let x = Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    // a noisy linear projection keeps the metrics away from trivial values
    let y = Matrix::from_fn(n, 2, |i, c| x[(i, c)] + 0.5 * x[(i, c + 2)] + rng.random_range(-0.3..0.3));
    let labels = (0..n).map(|_| rng.random_range(0..4)).collect();
    let k = rng.random_range(1..=7);
    (x, y, labels, k)
}
