use dre_core::affinity::{AffinityKind, AffinityMatrix};
use dre_core::loss::{ce_loss_grad, compute_q, kl_loss_grad, TsneKernelConfig, UmapKernelConfig};
use dre_core::Matrix;
use proptest::prelude::*;

fn embedding() -> impl Strategy<Value = Matrix<f64>> {
    (3usize..9, 1usize..4).prop_flat_map(|(b, d)| {
        prop::collection::vec(-3.0f64..3.0, b * d).prop_map(move |v| Matrix::from_vec(b, d, v).unwrap())
    })
}

fn symmetric(b: usize, raw: &[f64], kind: AffinityKind) -> AffinityMatrix<f64> {
    let mut m = Matrix::zeros(b, b);
    let mut it = raw.iter().cycle();
    for i in 0..b {
        for j in i + 1..b {
            let v = *it.next().unwrap();
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    if kind == AffinityKind::TsneJoint {
        let s = m.sum();
        if s > 0.0 {
            m = m.map(|v| v / s);
        }
    }
    AffinityMatrix { kind, values: m }
}

fn case() -> impl Strategy<Value = (Matrix<f64>, Vec<f64>, f64, f64, f64)> {
    (
        embedding(),
        prop::collection::vec(0.0f64..1.0, 1..40),
        0.3f64..3.0,
        0.5f64..2.0,
        0.5f64..1.5,
    )
}

fn translate(y: &Matrix<f64>, shift: &[f64]) -> Matrix<f64> {
    Matrix::from_fn(y.rows(), y.cols(), |i, c| y[(i, c)] + shift[c % shift.len()])
}

/// Orthogonal map built from plane rotations over consecutive coordinates.
fn rotate(y: &Matrix<f64>, angle: f64) -> Matrix<f64> {
    let mut out = y.clone();
    let d = y.cols();
    if d < 2 {
        return out.map(|v| -v);
    }
    let (s, c) = angle.sin_cos();
    for a in 0..d - 1 {
        for i in 0..out.rows() {
            let (u, v) = (out[(i, a)], out[(i, a + 1)]);
            out[(i, a)] = c * u - s * v;
            out[(i, a + 1)] = s * u + c * v;
        }
    }
    out
}

fn close(a: &Matrix<f64>, b: &Matrix<f64>, tol: f64) -> bool {
    a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn q_sums_to_one((y, _, alpha, _, _) in case()) {
        let (q, _) = compute_q(&y, &TsneKernelConfig { alpha }).unwrap();
        prop_assert!((q.sum() - 1.0).abs() <= 1e-10);
        for i in 0..y.rows() {
            prop_assert_eq!(q[(i, i)], 0.0);
        }
    }

    #[test]
    fn kl_is_non_negative((y, raw, alpha, _, _) in case()) {
        let p = symmetric(y.rows(), &raw, AffinityKind::TsneJoint);
        prop_assume!(p.values.sum() > 0.0);
        let (loss, _) = kl_loss_grad(&p, &y, &TsneKernelConfig { alpha }).unwrap();
        prop_assert!(loss >= -1e-12);
    }

    #[test]
    fn losses_are_translation_invariant((y, raw, alpha, a, b) in case(), shift in prop::collection::vec(-5.0f64..5.0, 3)) {
        let moved = translate(&y, &shift);
        let p = symmetric(y.rows(), &raw, AffinityKind::TsneJoint);
        prop_assume!(p.values.sum() > 0.0);
        let cfg = TsneKernelConfig { alpha };
        let (l0, g0) = kl_loss_grad(&p, &y, &cfg).unwrap();
        let (l1, g1) = kl_loss_grad(&p, &moved, &cfg).unwrap();
        prop_assert!((l0 - l1).abs() <= 1e-10);
        prop_assert!(close(&g0, &g1, 1e-9));

        let v = symmetric(y.rows(), &raw, AffinityKind::UmapFuzzy);
        let ucfg = UmapKernelConfig { a, b };
        let (l0, g0) = ce_loss_grad(&v, &y, &ucfg).unwrap();
        let (l1, g1) = ce_loss_grad(&v, &moved, &ucfg).unwrap();
        prop_assert!((l0 - l1).abs() <= 1e-10, "{} vs {}", l0, l1);
        prop_assert!(close(&g0, &g1, 1e-9));
    }

    #[test]
    fn losses_are_rotation_invariant((y, raw, alpha, a, b) in case(), angle in 0.0f64..6.3) {
        let turned = rotate(&y, angle);
        let p = symmetric(y.rows(), &raw, AffinityKind::TsneJoint);
        prop_assume!(p.values.sum() > 0.0);
        let cfg = TsneKernelConfig { alpha };
        let l0 = kl_loss_grad(&p, &y, &cfg).unwrap().0;
        let l1 = kl_loss_grad(&p, &turned, &cfg).unwrap().0;
        prop_assert!((l0 - l1).abs() <= 1e-10);

        let v = symmetric(y.rows(), &raw, AffinityKind::UmapFuzzy);
        let ucfg = UmapKernelConfig { a, b };
        let l0 = ce_loss_grad(&v, &y, &ucfg).unwrap().0;
        let l1 = ce_loss_grad(&v, &turned, &ucfg).unwrap().0;
        prop_assert!((l0 - l1).abs() <= 1e-10, "{} vs {}", l0, l1);
    }
}
