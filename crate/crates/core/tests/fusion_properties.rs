use proptest::prelude::*;
use rarefuse_core::estimators::{EstimatorKind, EstimatorResult};
use rarefuse_core::fusion::{
    componentwise_weight_residual, dominance_criterion, fuse, optimal_weights,
    optimal_weights_diagonal, CovarianceMatrix, CovarianceModel,
};

/// `B Bᵀ + shift I` from a flat list of entries of `B`.
fn spd_from(k: usize, b: &[f64], shift: f64) -> CovarianceMatrix {
    let mut entries = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let dot: f64 = (0..k).map(|l| b[i * k + l] * b[j * k + l]).sum();
            entries[i * k + j] = dot + if i == j { shift } else { 0.0 };
        }
    }
    // Exact symmetry: B Bᵀ is computed identically for (i, j) and (j, i).
    CovarianceMatrix::from_row_major(k, entries).unwrap()
}

fn spd_strategy() -> impl Strategy<Value = CovarianceMatrix> {
    (2usize..=6).prop_flat_map(|k| {
        (
            proptest::collection::vec(-1.0f64..1.0, k * k),
            0.05f64..2.0,
        )
            .prop_map(move |(b, shift)| spd_from(k, &b, shift))
    })
}

fn result(estimate: f64, sample_variance: f64, n: usize) -> EstimatorResult {
    EstimatorResult {
        estimate,
        n,
        sample_variance,
        hits: 1,
        density_id: "q".into(),
        kind: EstimatorKind::ImportanceSampling,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn diagonal_fusion_beats_best_input(variances in proptest::collection::vec(1e-8f64..1e8, 2..10)) {
        let d = optimal_weights_diagonal(&variances).unwrap();
        let best = variances.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(d.variance < best, "{} !< {}", d.variance, best);
        prop_assert!(d.weights.iter().all(|w| *w > 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn kkt_conditions_hold(cov in spd_strategy()) {
        let w = optimal_weights(&cov).unwrap();
        let k = cov.k();
        prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let sa = cov.mul_vec(&w.weights);
        let residual = sa.iter().map(|x| (x + w.multiplier).abs()).fold(0.0, f64::max);
        prop_assert!(residual <= 1e-10 * cov.norm_inf(), "residual {residual}");
        prop_assert!((w.variance + w.multiplier).abs() <= 1e-10 * w.variance);
        prop_assert!(componentwise_weight_residual(&cov, &w.weights) <= 1e-10);
        prop_assert_eq!(w.weights.len(), k);
    }

    #[test]
    fn weights_are_scale_invariant(cov in spd_strategy(), c in 1e-6f64..1e6) {
        let k = cov.k();
        let scaled: Vec<f64> = cov.rows().concat().iter().map(|x| x * c).collect();
        let scaled = CovarianceMatrix::from_row_major(k, scaled).unwrap();
        let a = optimal_weights(&cov).unwrap();
        let b = optimal_weights(&scaled).unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            prop_assert!((x - y).abs() <= 1e-9 * (1.0 + x.abs()));
        }
        prop_assert!((b.variance / (c * a.variance) - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn weights_follow_permutations(cov in spd_strategy(), rotate in 0usize..6) {
        let k = cov.k();
        let perm: Vec<usize> = (0..k).map(|i| (i + rotate) % k).collect();
        let mut entries = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..k {
                entries[i * k + j] = cov.get(perm[i], perm[j]);
            }
        }
        let permuted = CovarianceMatrix::from_row_major(k, entries).unwrap();
        let a = optimal_weights(&cov).unwrap();
        let b = optimal_weights(&permuted).unwrap();
        for i in 0..k {
            prop_assert!((b.weights[i] - a.weights[perm[i]]).abs() <= 1e-9 * (1.0 + a.weights[perm[i]].abs()));
        }
        let estimates: Vec<f64> = (0..k).map(|i| 1e-3 * (1.0 + i as f64)).collect();
        let fa: f64 = a.weights.iter().zip(&estimates).map(|(w, e)| w * e).sum();
        let fb: f64 = (0..k).map(|i| b.weights[i] * estimates[perm[i]]).sum();
        prop_assert!((fa - fb).abs() <= 1e-12);
    }

    #[test]
    fn diagonal_paths_agree(variances in proptest::collection::vec(1e-3f64..1e3, 1..8)) {
        let full = optimal_weights(&CovarianceMatrix::diagonal(&variances).unwrap()).unwrap();
        let diag = optimal_weights_diagonal(&variances).unwrap();
        for (x, y) in full.weights.iter().zip(&diag.weights) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        prop_assert!((full.variance / diag.variance - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn fused_estimate_is_convex_combination(
        inputs in proptest::collection::vec((1e-6f64..1e-2, 1e-8f64..1e-2, 2usize..5000), 1..6)
    ) {
        let results: Vec<EstimatorResult> =
            inputs.iter().map(|&(e, v, n)| result(e, v, n)).collect();
        let f = fuse(&results, &CovarianceModel::Independent).unwrap();
        let lo = inputs.iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
        let hi = inputs.iter().map(|x| x.0).fold(0.0, f64::max);
        prop_assert!(f.estimate >= lo * (1.0 - 1e-12) && f.estimate <= hi * (1.0 + 1e-12));
        prop_assert!((f.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        let min_var = results.iter().map(|r| r.estimator_variance()).fold(f64::INFINITY, f64::min);
        if results.len() >= 2 {
            prop_assert!(f.variance < min_var);
        }
    }

    #[test]
    fn fused_variance_satisfies_dominance_for_worst_input(
        variances in proptest::collection::vec(1e-4f64..1e4, 2..8)
    ) {
        // With equal budgets, fusing beats the worst density whenever the criterion holds.
        let worst = variances.iter().copied().fold(0.0, f64::max);
        let d = optimal_weights_diagonal(&variances).unwrap();
        let k = variances.len() as f64;
        if dominance_criterion(&variances, worst).unwrap() {
            // Same total budget on the worst density alone: variance worst / k.
            prop_assert!(d.variance < worst / k * (1.0 + 1e-12));
        }
    }
}

#[test]
fn excluded_inputs_keep_zero_weight() {
    let results = vec![result(1e-3, 1e-4, 100), result(0.0, 0.0, 100), result(2e-3, 4e-4, 100)];
    let f = fuse(&results, &CovarianceModel::Independent).unwrap();
    assert_eq!(f.excluded, vec![1]);
    assert_eq!(f.weights[1], 0.0);
    assert!((f.weights[0] - 0.8).abs() < 1e-14 && (f.weights[2] - 0.2).abs() < 1e-14);
}
