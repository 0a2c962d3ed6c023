use proptest::prelude::*;
use sivc_core::eval::{auc, edge_confusion};
use sivc_core::glasso::glasso_fit;
use sivc_core::mixture::{fit_mixture_traced, EmConfig};
use sivc_core::prox::{fgl_prox, ggl_prox, soft_threshold};
use sivc_core::volume::PooledRegion;
use sivc_core::{CohortCovariance, DMatrix, GlassoConfig};

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn penalties() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.0..2.0f64, 0.0..2.0f64, 0.1..5.0f64)
}

/// SPD matrix `A A^T / k + I / 2` from a flat entry vector.
fn spd(p: usize, entries: &[f64]) -> DMatrix<f64> {
    let a = DMatrix::from_column_slice(p, p, &entries[..p * p]);
    (&a * a.transpose()) / p as f64 + DMatrix::identity(p, p) * 0.5
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn soft_threshold_is_nonexpansive(x in -10.0..10.0f64, y in -10.0..10.0f64, t in 0.0..5.0f64) {
        prop_assert!((soft_threshold(x, t) - soft_threshold(y, t)).abs() <= (x - y).abs() + 1e-12);
    }

    #[test]
    fn fgl_prox_is_nonexpansive(a in prop::array::uniform2(-5.0..5.0f64), b in prop::array::uniform2(-5.0..5.0f64), (l1, l2, rho) in penalties()) {
        let (mut pa, mut pb) = ([0.0; 2], [0.0; 2]);
        fgl_prox(&a, &mut pa, l1, l2, rho).unwrap();
        fgl_prox(&b, &mut pb, l1, l2, rho).unwrap();
        prop_assert!(dist(&pa, &pb) <= dist(&a, &b) + 1e-12);
    }

    #[test]
    fn ggl_prox_is_nonexpansive(
        a in prop::collection::vec(-5.0..5.0f64, 3),
        b in prop::collection::vec(-5.0..5.0f64, 3),
        (l1, l2, rho) in penalties(),
    ) {
        let (mut pa, mut pb) = (vec![0.0; 3], vec![0.0; 3]);
        ggl_prox(&a, &mut pa, l1, l2, rho);
        ggl_prox(&b, &mut pb, l1, l2, rho);
        prop_assert!(dist(&pa, &pb) <= dist(&a, &b) + 1e-12);
    }

    #[test]
    fn fgl_prox_commutes_with_swap(a in prop::array::uniform2(-5.0..5.0f64), (l1, l2, rho) in penalties()) {
        let (mut p, mut q) = ([0.0; 2], [0.0; 2]);
        fgl_prox(&a, &mut p, l1, l2, rho).unwrap();
        fgl_prox(&[a[1], a[0]], &mut q, l1, l2, rho).unwrap();
        prop_assert_eq!(p, [q[1], q[0]]);
    }

    #[test]
    fn auc_stays_in_unit_interval(points in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), 0..20)) {
        let a = auc(&points);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn confusion_partitions_pairs(
        p in 2usize..9,
        e in prop::collection::vec(prop::sample::select(vec![0.0, 0.5, -0.3]), 81),
        g in prop::collection::vec(prop::sample::select(vec![0.0, 1.0]), 81),
    ) {
        let est = DMatrix::from_column_slice(p, p, &e[..p * p]);
        let gold = DMatrix::from_column_slice(p, p, &g[..p * p]);
        let c = edge_confusion(&est, &gold, 1e-8).unwrap();
        prop_assert_eq!(c.total(), p * (p - 1) / 2);
        // swapping roles exchanges false positives and false negatives
        let r = edge_confusion(&gold, &est, 1e-8).unwrap();
        prop_assert_eq!((r.tp, r.fp, r.fn_, r.tn), (c.tp, c.fn_, c.fp, c.tn));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn glasso_is_permutation_equivariant(
        entries in prop::collection::vec(-1.0..1.0f64, 36),
        perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
        lambda in 0.02..0.3f64,
    ) {
        let p = 6;
        let s = spd(p, &entries);
        let permuted = DMatrix::from_fn(p, p, |i, j| s[(perm[i], perm[j])]);
        let cfg = GlassoConfig { tol: 1e-9, max_iter: 20_000, ..GlassoConfig::with_lambda(lambda) };
        let a = glasso_fit(&CohortCovariance::unlabeled(s, 50).unwrap(), &cfg).unwrap().phi;
        let b = glasso_fit(&CohortCovariance::unlabeled(permuted, 50).unwrap(), &cfg).unwrap().phi;
        for i in 0..p {
            for j in 0..p {
                prop_assert!((b[(i, j)] - a[(perm[i], perm[j])]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn em_log_likelihood_never_decreases(
        counts in prop::collection::vec(0.0..10.0f64, 64),
        k in 1usize..4,
        seed in any::<u64>(),
    ) {
        let coords: Vec<[f64; 3]> = (0..64).map(|i| [(i % 4) as f64, ((i / 4) % 4) as f64, (i / 16) as f64]).collect();
        let region = PooledRegion { region_id: 1, coords, counts };
        prop_assume!(region.total_counts() > 1.0);
        if let Ok((_, trace)) = fit_mixture_traced(&region, k, seed, &EmConfig::default()) {
            for w in trace.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-8 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
            }
        }
    }
}
