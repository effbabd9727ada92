//! Metrics against the naive reference code in `common::naive`.

mod common;

use common::naive::{instance, naive_hit, naive_spearman, naive_stress, naive_trust, sorted_neighbours};
use dre_core::metrics::{
    continuity, full_report, knn_table, neighborhood_hit, normalized_stress, one_nn_accuracy, shepard_goodness, trustworthiness,
    LabeledEmbedding,
};
use dre_core::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn knn_matches_full_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = Matrix::from_fn(50, 4, |_, _| rng.random_range(-1.0..1.0));
    let t = knn_table(&m, 7).unwrap();
    for i in 0..50 {
        assert_eq!(t[i], sorted_neighbours(&m, i)[..7].to_vec());
    }
}

#[test]
fn all_metrics_match_naive_oracles() {
    for seed in 0..20 {
        let (x, y, labels, k) = instance(seed);
        let nn = one_nn_accuracy(&y, Some(&labels)).unwrap();
        assert!((nn - naive_hit(&y, &labels, 1)).abs() <= 1e-10, "1nn seed {seed}");
        let hit = neighborhood_hit(&y, Some(&labels), k).unwrap();
        assert!((hit - naive_hit(&y, &labels, k)).abs() <= 1e-10, "hit seed {seed}");
        let t = trustworthiness(&x, &y, k).unwrap();
        assert!((t - naive_trust(&x, &y, k)).abs() <= 1e-10, "trust seed {seed}");
        let c = continuity(&x, &y, k).unwrap();
        assert!((c - naive_trust(&y, &x, k)).abs() <= 1e-10, "continuity seed {seed}");
        let s = normalized_stress(&x, &y).unwrap();
        assert!((s - naive_stress(&x, &y)).abs() <= 1e-10, "stress seed {seed}");
        let g = shepard_goodness(&x, &y).unwrap();
        assert!((g - naive_spearman(&x, &y)).abs() <= 1e-10, "shepard seed {seed}");

        let report = full_report(&LabeledEmbedding::new(x.clone(), y.clone(), Some(labels.clone()), k).unwrap()).unwrap();
        assert_eq!(report.one_nn_accuracy, Some(nn));
        assert_eq!(report.neighborhood_hit, Some(hit));
        assert_eq!(report.trustworthiness, t);
        assert_eq!(report.continuity, c);
        assert_eq!(report.normalized_stress, s);
        assert_eq!(report.shepard_goodness, g);
    }
}

#[test]
fn trust_and_continuity_are_dual() {
    for seed in 100..110 {
        let (x, y, _, k) = instance(seed);
        assert_eq!(trustworthiness(&x, &y, k).unwrap(), continuity(&y, &x, k).unwrap());
    }
}

#[test]
fn identity_and_isometry_are_perfect() {
    let (x, _, labels, _) = instance(7);
    let r = full_report(&LabeledEmbedding::new(x.clone(), x.clone(), Some(labels.clone()), 7).unwrap()).unwrap();
    assert_eq!(r.trustworthiness, 1.0);
    assert_eq!(r.continuity, 1.0);
    assert_eq!(r.normalized_stress, 0.0);
    assert!((r.shepard_goodness - 1.0).abs() < 1e-12);
    assert!((r.neighborhood_hit.unwrap() - naive_hit(&x, &labels, 7)).abs() <= 1e-12);

    // rotate the first two coordinates and translate: distances preserved
    let (s, c) = 0.7f64.sin_cos();
    let iso = Matrix::from_fn(x.rows(), x.cols(), |i, j| match j {
        0 => c * x[(i, 0)] - s * x[(i, 1)] + 3.0,
        1 => s * x[(i, 0)] + c * x[(i, 1)] - 1.0,
        _ => x[(i, j)],
    });
    assert_eq!(trustworthiness(&x, &iso, 7).unwrap(), 1.0);
    assert_eq!(continuity(&x, &iso, 7).unwrap(), 1.0);
    assert!(normalized_stress(&x, &iso).unwrap() < 1e-25);
}

#[test]
fn reversed_distances_give_minus_one() {
    // X pair distances (01, 02, 12) = (1, 3, 2); Y gives (3, 1, 2)
    let x = Matrix::from_rows(&[[0.0], [1.0], [3.0]]).unwrap();
    let y = Matrix::from_rows(&[[0.0], [3.0], [1.0]]).unwrap();
    assert!((shepard_goodness(&x, &y).unwrap() + 1.0).abs() < 1e-12);
}

#[test]
fn collapsed_projection_has_unit_stress() {
    let (x, _, _, _) = instance(3);
    assert!((normalized_stress(&x, &Matrix::zeros(x.rows(), 2)).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn hit_with_k1_is_one_nn() {
    let (_, y, labels, _) = instance(11);
    assert_eq!(neighborhood_hit(&y, Some(&labels), 1).unwrap(), one_nn_accuracy(&y, Some(&labels)).unwrap());
}

#[test]
fn rank_metrics_ignore_scale_but_stress_does_not() {
    let (x, y, labels, k) = instance(21);
    let mut big = y.clone();
    big.scale(4.0);
    assert_eq!(trustworthiness(&x, &y, k).unwrap(), trustworthiness(&x, &big, k).unwrap());
    assert_eq!(continuity(&x, &y, k).unwrap(), continuity(&x, &big, k).unwrap());
    assert_eq!(neighborhood_hit(&y, Some(&labels), k).unwrap(), neighborhood_hit(&big, Some(&labels), k).unwrap());
    assert_eq!(one_nn_accuracy(&y, Some(&labels)).unwrap(), one_nn_accuracy(&big, Some(&labels)).unwrap());
    assert!((shepard_goodness(&x, &y).unwrap() - shepard_goodness(&x, &big).unwrap()).abs() < 1e-12);
    assert!((normalized_stress(&x, &y).unwrap() - normalized_stress(&x, &big).unwrap()).abs() > 1e-3);
}

fn permute(m: &Matrix<f64>, perm: &[usize]) -> Matrix<f64> {
    m.select_rows(perm)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn metrics_are_permutation_invariant(seed in 0u64..1000, shuffle_seed in 0u64..1000) {
        let (x, y, labels, k) = instance(seed);
        let n = x.rows();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(shuffle_seed);
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let a = full_report(&LabeledEmbedding::new(x.clone(), y.clone(), Some(labels.clone()), k).unwrap()).unwrap();
        let pl: Vec<u32> = perm.iter().map(|&i| labels[i]).collect();
        let b = full_report(&LabeledEmbedding::new(permute(&x, &perm), permute(&y, &perm), Some(pl), k).unwrap()).unwrap();
        // exact distance ties may reorder neighbours, so compare to rounding level
        prop_assert!((a.trustworthiness - b.trustworthiness).abs() < 1e-12);
        prop_assert!((a.continuity - b.continuity).abs() < 1e-12);
        prop_assert!((a.neighborhood_hit.unwrap() - b.neighborhood_hit.unwrap()).abs() < 1e-12);
        prop_assert!((a.one_nn_accuracy.unwrap() - b.one_nn_accuracy.unwrap()).abs() < 1e-12);
        prop_assert!((a.normalized_stress - b.normalized_stress).abs() < 1e-12);
        prop_assert!((a.shepard_goodness - b.shepard_goodness).abs() < 1e-12);
        for v in [a.trustworthiness, a.continuity, a.neighborhood_hit.unwrap()] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((-1.0..=1.0).contains(&a.shepard_goodness));
        prop_assert!(a.normalized_stress >= 0.0);
    }
}
