use dre_core::affinity::{
    affinities_from_features, conditional_p, fuzzy_v, joint_p, membership, pairwise_sq_dist, tsne_p, umap_rho_sigma, AffinityConfig,
    PerplexityConfig, UmapGraphConfig,
};
use dre_core::Matrix;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn batch() -> impl Strategy<Value = Matrix<f64>> {
    (6usize..28, 1usize..6).prop_flat_map(|(b, d)| matrix(b, d))
}

/// Perplexity of a probability row, `2^H` with `H` in bits.
fn perplexity_bits(p: &[f64]) -> f64 {
    2f64.powf(p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.log2()).sum())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn joint_p_is_a_symmetric_distribution(x in batch(), frac in 0.1f64..0.9) {
        let b = x.rows();
        let perplexity = 1.5 + frac * (b as f64 - 3.0);
        let cfg = PerplexityConfig { perplexity, ..Default::default() };
        let d = pairwise_sq_dist(&x).unwrap();
        let (pc, rows) = conditional_p(&d, &cfg).unwrap();
        for i in 0..b {
            prop_assert_eq!(d[(i, i)], 0.0);
            if rows[i].converged {
                let row: Vec<f64> = (0..b).filter(|&j| j != i).map(|j| pc[(i, j)]).collect();
                prop_assert!((perplexity_bits(&row) - perplexity).abs() <= 1e-3 + 1e-9);
            }
        }
        let p = joint_p(&pc).unwrap().values;
        prop_assert!((p.sum() - 1.0).abs() <= 1e-10);
        for i in 0..b {
            prop_assert_eq!(p[(i, i)], 0.0);
            for j in 0..b {
                prop_assert!(p[(i, j)] >= 0.0);
                prop_assert_eq!(p[(i, j)], p[(j, i)]);
                prop_assert_eq!(d[(i, j)], d[(j, i)]);
                prop_assert!(d[(i, j)] >= 0.0);
            }
        }
    }

    #[test]
    fn fuzzy_v_is_a_symmetric_membership(x in batch(), k in 2usize..5) {
        let b = x.rows();
        let v = fuzzy_v(&x, &UmapGraphConfig { k, ..Default::default() }).unwrap().affinity.values;
        let d = pairwise_sq_dist(&x).unwrap();
        for i in 0..b {
            prop_assert_eq!(v[(i, i)], 0.0);
            for j in 0..b {
                prop_assert!((0.0..=1.0).contains(&v[(i, j)]));
                prop_assert_eq!(v[(i, j)], v[(j, i)]);
            }
            // the nearest neighbour has directed membership 1, which survives the union
            let nn = (0..b).filter(|&j| j != i).min_by(|&a, &c| d[(i, a)].total_cmp(&d[(i, c)]).then(a.cmp(&c))).unwrap();
            prop_assert_eq!(v[(i, nn)], 1.0);
        }
    }

    #[test]
    fn umap_rows_hit_log2k(row in prop::collection::vec(0.0f64..10.0, 5..40), k in 2usize..5) {
        let cfg = UmapGraphConfig { k, ..Default::default() };
        let c = umap_rho_sigma(&row, &cfg).unwrap();
        if c.converged {
            let s: f64 = c.neighbors.iter().map(|&j| membership(row[j], c.rho, c.sigma)).sum();
            prop_assert!((s - (k as f64).log2()).abs() <= 1e-3);
        }
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(c.rho, min);
    }

    #[test]
    fn membership_never_decreases_with_sigma(d in 0.0f64..20.0, rho in 0.0f64..5.0, s1 in 1e-3f64..50.0, s2 in 1e-3f64..50.0) {
        let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
        prop_assert!(membership(d, rho, hi) >= membership(d, rho, lo));
    }

    #[test]
    fn identity_features_reproduce_raw_affinities(x in batch(), k in 2usize..5) {
        let b = x.rows();
        let tsne = PerplexityConfig { perplexity: (b as f64 - 1.0) / 3.0, ..Default::default() };
        prop_assert_eq!(
            affinities_from_features(&x.clone(), &AffinityConfig::Tsne(tsne)).unwrap().affinity,
            tsne_p(&x, &tsne).unwrap().affinity
        );
        let umap = UmapGraphConfig { k, ..Default::default() };
        prop_assert_eq!(
            affinities_from_features(&x.clone(), &AffinityConfig::Umap(umap)).unwrap().affinity,
            fuzzy_v(&x, &umap).unwrap().affinity
        );
    }
}
