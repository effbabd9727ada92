//! Central finite-difference checks of the analytic gradients.
//!
//! Relative error is measured over the whole gradient of one instance:
//! `|g - g_fd| / max(|g|, |g_fd|)` with Euclidean norms.

use dre_core::affinity::{tsne_p, AffinityKind, AffinityMatrix, PerplexityConfig};
use dre_core::loss::{ce_loss_grad, kl_loss_grad, TsneKernelConfig, UmapKernelConfig};
use dre_core::nn::{init_params, Mode, NetworkParams, NetworkSpec};
use dre_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const H: f64 = 1e-5;

/// One checked instance: a description and its relative error.
pub type Checked = (String, f64);

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub fn worst(checked: &[Checked]) -> f64 {
    checked.iter().map(|c| c.1).fold(0.0, f64::max)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, spread: f64) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-spread..spread))
}

/// Embedding whose points are at least 0.1 apart. Closer pairs put the
/// loss curvature on the scale of the step `H`, where central differences
/// stop being an accurate reference.
fn separated_embedding(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
    loop {
        let y = random_matrix(rng, rows, cols, 2.0);
        let min_sq = (0..rows)
            .flat_map(|i| (i + 1..rows).map(move |j| (i, j)))
            .map(|(i, j)| (0..cols).map(|c| (y[(i, c)] - y[(j, c)]).powi(2)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        if min_sq >= 0.01 {
            return y;
        }
    }
}

fn random_symmetric(rng: &mut ChaCha8Rng, b: usize, kind: AffinityKind) -> AffinityMatrix<f64> {
    let mut v = Matrix::zeros(b, b);
    for i in 0..b {
        for j in i + 1..b {
            // include exact zeros and ones so the boundary conventions are exercised
            let x: f64 = match rng.random_range(0..6) {
                0 => 0.0,
                1 if kind == AffinityKind::UmapFuzzy => 1.0,
                _ => rng.random_range(0.0..1.0),
            };
            v[(i, j)] = x;
            v[(j, i)] = x;
        }
    }
    if kind == AffinityKind::TsneJoint {
        let s = v.sum();
        v = v.map(|x| x / s);
    }
    AffinityMatrix { kind, values: v }
}

fn fd_embedding(y: &Matrix<f64>, f: impl Fn(&Matrix<f64>) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.as_slice().len());
    for k in 0..y.as_slice().len() {
        let mut plus = y.clone();
        plus.as_mut_slice()[k] += H;
        let mut minus = y.clone();
        minus.as_mut_slice()[k] -= H;
        out.push((f(&plus) - f(&minus)) / (2.0 * H));
    }
    out
}

/// KL gradients over batch sizes 3..8, dimensions 1..3 and alpha in {1, 0.5, 2}.
pub fn kl_instances(n: usize) -> Vec<Checked> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    (0..n)
        .map(|inst| {
            let b = 3 + inst % 6;
            let d = 1 + inst % 3;
            let alpha = [1.0, 0.5, 2.0][inst % 3];
            let cfg = TsneKernelConfig { alpha };
            let y = separated_embedding(&mut rng, b, d);
            let p = random_symmetric(&mut rng, b, AffinityKind::TsneJoint);
            let (_, g) = kl_loss_grad(&p, &y, &cfg).unwrap();
            let fd = fd_embedding(&y, |yy| kl_loss_grad(&p, yy, &cfg).unwrap().0);
            (format!("instance {inst} (B={b}, d={d}, alpha={alpha})"), rel_err(g.as_slice(), &fd))
        })
        .collect()
}

/// Cross-entropy gradients over three `(a, b)` kernels.
pub fn ce_instances(n: usize) -> Vec<Checked> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    (0..n)
        .map(|inst| {
            let b = 3 + inst % 6;
            let d = 1 + inst % 3;
            let cfg = [UmapKernelConfig { a: 1.0, b: 1.0 }, UmapKernelConfig { a: 1.5, b: 0.8 }, UmapKernelConfig { a: 0.6, b: 1.3 }][inst % 3];
            let y = separated_embedding(&mut rng, b, d);
            let v = random_symmetric(&mut rng, b, AffinityKind::UmapFuzzy);
            let (_, g) = ce_loss_grad(&v, &y, &cfg).unwrap();
            let fd = fd_embedding(&y, |yy| ce_loss_grad(&v, yy, &cfg).unwrap().0);
            (format!("instance {inst} (B={b}, d={d}, a={}, b={})", cfg.a, cfg.b), rel_err(g.as_slice(), &fd))
        })
        .collect()
}

/// KL loss of the network output against fixed affinities.
fn network_loss(params: &NetworkParams<f64>, x: &Matrix<f64>, p: &AffinityMatrix<f64>) -> (f64, Matrix<f64>, Vec<Matrix<f64>>) {
    let (y, trace) = params.forward(x, Mode::Train).unwrap();
    let (loss, dy) = kl_loss_grad(p, &y, &TsneKernelConfig::default()).unwrap();
    let pre = trace.layers.iter().map(|l| l.pre.clone()).collect();
    (loss, dy, pre)
}

fn same_relu_pattern(a: &[Matrix<f64>], b: &[Matrix<f64>], hidden: usize) -> bool {
    a.iter()
        .zip(b)
        .take(hidden)
        .all(|(x, y)| x.as_slice().iter().zip(y.as_slice()).all(|(p, q)| (*p > 0.0) == (*q > 0.0)))
}

/// Finite differences over every trainable parameter. Perturbations that
/// move a ReLU input across zero are not differentiable there and are left
/// out; the returned count says how many were checked.
pub fn check_network(spec: &NetworkSpec, seed: u64, batch: usize) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = init_params::<f64>(spec, seed).unwrap();
    // move batch norm away from the identity so gamma/beta paths are exercised
    for layer in &mut params.layers {
        if let Some(bn) = &mut layer.norm {
            bn.gamma.iter_mut().for_each(|g| *g = rng.random_range(0.5..1.5));
            bn.beta.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
        layer.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.2..0.2));
    }
    let x = random_matrix(&mut rng, batch, spec.input_dim, 1.0);
    let p = tsne_p(&random_matrix(&mut rng, batch, 3, 1.0), &PerplexityConfig { perplexity: 4.0, ..Default::default() })
        .unwrap()
        .affinity;
    let (_, dy, base_pre) = network_loss(&params, &x, &p);
    let (_, trace) = params.forward(&x, Mode::Train).unwrap();
    let grads = params.backward(&trace, &dy).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let hidden = spec.hidden_dims.len();

    let mut a = Vec::new();
    let mut n = Vec::new();
    let sizes: Vec<usize> = params.trainable().iter().map(|t| t.len()).collect();
    for (t, &len) in sizes.iter().enumerate() {
        for k in 0..len {
            let mut plus = params.clone();
            plus.trainable_mut()[t][k] += H;
            let mut minus = params.clone();
            minus.trainable_mut()[t][k] -= H;
            let (lp, _, pp) = network_loss(&plus, &x, &p);
            let (lm, _, pm) = network_loss(&minus, &x, &p);
            if !same_relu_pattern(&pp, &base_pre, hidden) || !same_relu_pattern(&pm, &base_pre, hidden) {
                continue;
            }
            a.push(analytic[t][k]);
            n.push((lp - lm) / (2.0 * H));
        }
    }
    (rel_err(&a, &n), a.len())
}

/// Random small networks: 1..3 hidden layers of width 2..6, batches of 6..12.
pub fn network_instances(n: u64) -> Vec<(Checked, usize)> {
    (0..n)
        .map(|inst| {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + inst);
            let depth = rng.random_range(1..=3);
            let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=6)).collect();
            let input = rng.random_range(2..=6);
            let out = rng.random_range(1..=3);
            let batch = rng.random_range(6..=12);
            let spec = NetworkSpec::new(input, hidden.clone(), vec![], out).unwrap();
            let (e, checked) = check_network(&spec, 5000 + inst, batch);
            ((format!("instance {inst} {input}->{hidden:?}->{out}, batch {batch}"), e), checked)
        })
        .collect()
}
