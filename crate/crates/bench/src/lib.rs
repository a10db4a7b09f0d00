//! Fixtures shared by the criterion benches.

use rarefuse_core::fusion::CovarianceMatrix;

/// Deterministic well-conditioned covariance `B Bᵀ + k I` with trigonometric `B`.
pub fn spd_fixture(k: usize, seed: u32) -> CovarianceMatrix {
    let b = |i: usize, j: usize| ((7 * i + 3 * j) as f64 + f64::from(seed)).sin();
    let mut entries = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            let dot: f64 = (0..k).map(|l| b(i, l) * b(j, l)).sum();
            entries[i * k + j] = dot + if i == j { k as f64 } else { 0.0 };
        }
    }
    CovarianceMatrix::from_row_major(k, entries).expect("symmetric by construction")
}
