//! Minimum-variance linear fusion of unbiased estimators.
//!
//! Given `k` unbiased estimates with covariance `Σ`, the affine combination
//! `Σ α_i P_i` with `Σ α_i = 1` stays unbiased; its variance `αᵀΣα` is
//! minimized by `α = Σ⁻¹1 / (1ᵀΣ⁻¹1)`. The general case is solved through
//! the KKT system
//!
//! ```text
//! [ Σ   1 ] [ α ]   [ 0 ]
//! [ 1ᵀ  0 ] [ λ ] = [ 1 ]
//! ```
//!
//! with a symmetric-indefinite factorization and one refinement step. For
//! independent estimators `Σ` is diagonal and the weights reduce to inverse
//! variance weighting, which is what the sampling pipeline uses.

mod ldlt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::EstimatorResult;
use crate::numeric::compensated_sum;
use ldlt::{Square, SymmetricIndefinite};

/// Condition estimates above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Estimator variance substituted for a zero sample variance with a positive estimate.
pub const VARIANCE_FLOOR: f64 = 1e-300;

/// Symmetric `k × k` covariance of `k` estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CovarianceMatrix {
    k: usize,
    entries: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for CovarianceMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<CovarianceMatrix> for Vec<Vec<f64>> {
    fn from(c: CovarianceMatrix) -> Self {
        c.rows()
    }
}

impl CovarianceMatrix {
    pub fn from_row_major(k: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != k * k {
            return Err(Error::DimensionMismatch {
                expected: k * k,
                got: entries.len(),
            });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("covariance entries must be finite".into()));
        }
        let scale = entries.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..k {
            for j in 0..i {
                if (entries[i * k + j] - entries[j * k + i]).abs() > 1e-14 * scale {
                    return Err(Error::InvalidArgument("covariance is not symmetric".into()));
                }
            }
        }
        Ok(Self { k, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        if let Some(r) = rows.iter().find(|r| r.len() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: r.len(),
            });
        }
        Self::from_row_major(k, rows.concat())
    }

    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        let k = variances.len();
        let mut entries = vec![0.0; k * k];
        for (i, v) in variances.iter().enumerate() {
            entries[i * k + i] = *v;
        }
        Self::from_row_major(k, entries)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.k + j]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.k.max(1)).map(<[f64]>::to_vec).take(self.k).collect()
    }

    pub fn diagonal_entries(&self) -> Vec<f64> {
        (0..self.k).map(|i| self.get(i, i)).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        (0..self.k).all(|i| (0..self.k).all(|j| i == j || self.get(i, j) == 0.0))
    }

    /// Rows and columns at `indices`, in that order.
    pub fn submatrix(&self, indices: &[usize]) -> Self {
        let k = indices.len();
        let entries = indices
            .iter()
            .flat_map(|&i| indices.iter().map(move |&j| (i, j)))
            .map(|(i, j)| self.get(i, j))
            .collect();
        Self { k, entries }
    }

    /// Infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        self.entries
            .chunks(self.k.max(1))
            .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.square().mul_vec(x)
    }

    /// `xᵀ Σ x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        compensated_sum(self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b))
    }

    /// 1-norm condition number; infinite when exactly singular.
    pub fn condition_estimate(&self) -> f64 {
        let s = self.square();
        SymmetricIndefinite::factor(&s).map_or(f64::INFINITY, |f| f.condition_one(&s))
    }

    fn square(&self) -> Square {
        Square::from_row_major(self.k, &self.entries)
    }
}

/// Solution of the equality-constrained weight problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalWeights {
    pub weights: Vec<f64>,
    /// Lagrange multiplier `λ` of the KKT system; equals `-variance`.
    pub multiplier: f64,
    /// `αᵀΣα`, the variance of the fused estimator.
    pub variance: f64,
}

/// Minimum-variance weights for a general (possibly correlated) covariance.
pub fn optimal_weights(cov: &CovarianceMatrix) -> Result<OptimalWeights> {
    let k = cov.k();
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one estimator".into()));
    }
    if cov.diagonal_entries().iter().any(|v| *v <= 0.0) {
        return Err(Error::InvalidArgument(
            "covariance diagonal must be strictly positive".into(),
        ));
    }
    // Work with Σ / ‖Σ‖∞ so that the constraint row and Σ are commensurate.
    let scale = cov.norm_inf();
    let mut sigma = Square::zeros(k);
    for i in 0..k {
        for j in 0..k {
            sigma.set(i, j, cov.get(i, j) / scale);
        }
    }
    let factored = SymmetricIndefinite::factor(&sigma).ok_or(Error::SingularCovariance {
        condition: f64::INFINITY,
    })?;
    if factored.inertia().1 > 0 {
        return Err(Error::IndefiniteCovariance);
    }
    let condition = factored.condition_one(&sigma);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::SingularCovariance { condition });
    }

    let mut kkt = Square::zeros(k + 1);
    for i in 0..k {
        for j in 0..k {
            kkt.set(i, j, sigma.get(i, j));
        }
        kkt.set(i, k, 1.0);
        kkt.set(k, i, 1.0);
    }
    let kkt_factored = SymmetricIndefinite::factor(&kkt).ok_or(Error::SingularCovariance {
        condition: f64::INFINITY,
    })?;
    let mut rhs = vec![0.0; k + 1];
    rhs[k] = 1.0;
    let mut x = kkt_factored.solve(&rhs);
    let kx = kkt.mul_vec(&x);
    let residual: Vec<f64> = rhs.iter().zip(&kx).map(|(b, a)| b - a).collect();
    for (xi, di) in x.iter_mut().zip(kkt_factored.solve(&residual)) {
        *xi += di;
    }

    let multiplier = x[k] * scale;
    x.truncate(k);
    let variance = cov.quadratic_form(&x);
    Ok(OptimalWeights {
        weights: x,
        multiplier,
        variance,
    })
}

/// Inverse-variance weights for independent estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalWeights {
    pub weights: Vec<f64>,
    pub variance: f64,
}

/// `α_i = (1/σ_i²) / Σ_l (1/σ_l²)`, fused variance `1 / Σ_l (1/σ_l²)`.
pub fn optimal_weights_diagonal(variances: &[f64]) -> Result<DiagonalWeights> {
    if variances.is_empty() {
        return Err(Error::InvalidArgument("need at least one estimator".into()));
    }
    if variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidArgument(
            "variances must be positive and finite".into(),
        ));
    }
    // Precisions relative to the smallest variance, to stay clear of overflow.
    let smallest = variances.iter().copied().fold(f64::INFINITY, f64::min);
    let relative: Vec<f64> = variances.iter().map(|v| smallest / v).collect();
    let total = compensated_sum(relative.iter().copied());
    Ok(DiagonalWeights {
        weights: relative.iter().map(|r| r / total).collect(),
        variance: smallest / total,
    })
}

/// How estimator covariances are obtained for [`fuse`].
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceModel {
    /// Independent estimators: `Σ̂ = diag(σ̂_i² / n_i)`.
    Independent,
    /// Caller-supplied covariance of all inputs, in input order.
    Supplied(CovarianceMatrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedResult {
    pub estimate: f64,
    /// One weight per input; excluded inputs carry weight 0.
    pub weights: Vec<f64>,
    pub multiplier: f64,
    pub variance: f64,
    /// Covariance of the inputs that took part, in input order.
    pub covariance_used: CovarianceMatrix,
    /// Inputs without any observed failure (zero estimate, zero variance).
    pub excluded: Vec<usize>,
    /// Inputs whose zero variance was floored at [`VARIANCE_FLOOR`].
    pub floored: Vec<usize>,
    /// Every input was excluded; the estimate is 0 and carries no information.
    pub no_information: bool,
    pub inputs: Vec<EstimatorResult>,
}

impl FusedResult {
    pub fn rmse(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn cv(&self) -> Result<f64> {
        if self.estimate <= 0.0 {
            return Err(Error::UndefinedCv);
        }
        Ok(self.variance.sqrt() / self.estimate)
    }

    /// Total number of samples behind the fused estimate.
    pub fn total_samples(&self) -> usize {
        self.inputs.iter().map(|r| r.n).sum()
    }
}

/// Fuses unbiased estimates into the minimum-variance affine combination.
///
/// Inputs that saw no failures at all (estimate and sample variance both 0)
/// are dropped and the remaining weights renormalize. A zero sample variance
/// with a positive estimate is floored at [`VARIANCE_FLOOR`].
pub fn fuse(results: &[EstimatorResult], covariance: &CovarianceModel) -> Result<FusedResult> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("nothing to fuse".into()));
    }
    if let CovarianceModel::Supplied(cov) = covariance {
        if cov.k() != results.len() {
            return Err(Error::DimensionMismatch {
                expected: results.len(),
                got: cov.k(),
            });
        }
    }
    let mut excluded = Vec::new();
    let mut floored = Vec::new();
    let mut included = Vec::new();
    for (i, r) in results.iter().enumerate() {
        if r.sample_variance == 0.0 && r.estimate == 0.0 {
            log::warn!("excluding estimator {i} ({}) from fusion: no failures observed", r.density_id);
            excluded.push(i);
        } else {
            if r.sample_variance == 0.0 {
                log::warn!("estimator {i} ({}) has zero variance; flooring", r.density_id);
                floored.push(i);
            }
            included.push(i);
        }
    }
    let k = results.len();
    if included.is_empty() {
        return Ok(FusedResult {
            estimate: 0.0,
            weights: vec![0.0; k],
            multiplier: 0.0,
            variance: 0.0,
            covariance_used: CovarianceMatrix::diagonal(&[])?,
            excluded,
            floored,
            no_information: true,
            inputs: results.to_vec(),
        });
    }

    let (sub_weights, multiplier, variance, covariance_used) = match covariance {
        CovarianceModel::Independent => {
            let variances: Vec<f64> = included
                .iter()
                .map(|&i| results[i].estimator_variance().max(VARIANCE_FLOOR))
                .collect();
            let d = optimal_weights_diagonal(&variances)?;
            (d.weights, -d.variance, d.variance, CovarianceMatrix::diagonal(&variances)?)
        }
        CovarianceModel::Supplied(cov) => {
            let sub = cov.submatrix(&included);
            let w = optimal_weights(&sub)?;
            (w.weights, w.multiplier, w.variance, sub)
        }
    };
    let mut weights = vec![0.0; k];
    for (&i, w) in included.iter().zip(&sub_weights) {
        weights[i] = *w;
    }
    let estimate = compensated_sum(included.iter().zip(&sub_weights).map(|(&i, w)| w * results[i].estimate));
    Ok(FusedResult {
        estimate,
        weights,
        multiplier,
        variance,
        covariance_used,
        excluded,
        floored,
        no_information: false,
        inputs: results.to_vec(),
    })
}

/// Largest deviation of `weights` from the component-wise optimality formula
///
/// ```text
/// α_i = (1/Σ_ii) [ (1 + Σ_l (1/Σ_ll) Σ_{j≠l} α_j Σ_lj) / Σ_l (1/Σ_ll) − Σ_{j≠i} α_j Σ_ij ]
/// ```
///
/// which every stationary point of the KKT system satisfies.
pub fn componentwise_weight_residual(cov: &CovarianceMatrix, weights: &[f64]) -> f64 {
    let k = cov.k();
    let coupling = |i: usize| -> f64 {
        (0..k)
            .filter(|&j| j != i)
            .map(|j| weights[j] * cov.get(i, j))
            .sum()
    };
    let precision: Vec<f64> = (0..k).map(|i| 1.0 / cov.get(i, i)).collect();
    let total_precision: f64 = precision.iter().sum();
    let common = (1.0 + (0..k).map(|l| precision[l] * coupling(l)).sum::<f64>()) / total_precision;
    (0..k)
        .map(|i| (weights[i] - precision[i] * (common - coupling(i))).abs())
        .fold(0.0, f64::max)
}

/// True iff `candidate_variance > k / Σ(1/σ_i²)`: with equal per-estimator
/// budgets, fusing all `k` estimators beats spending the whole budget on the
/// candidate density.
pub fn dominance_criterion(variances: &[f64], candidate_variance: f64) -> Result<bool> {
    if variances.is_empty()
        || variances.iter().any(|v| !(*v > 0.0))
        || !(candidate_variance > 0.0)
    {
        return Err(Error::InvalidArgument(
            "dominance criterion needs positive variances".into(),
        ));
    }
    let total: f64 = variances.iter().map(|v| 1.0 / v).sum();
    Ok(candidate_variance > variances.len() as f64 / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::EstimatorKind;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn est(estimate: f64, sample_variance: f64, n: usize) -> EstimatorResult {
        EstimatorResult {
            estimate,
            n,
            sample_variance,
            hits: 0,
            density_id: "q".into(),
            kind: EstimatorKind::ImportanceSampling,
        }
    }

    #[test]
    fn equal_variances() {
        let w = optimal_weights(&CovarianceMatrix::diagonal(&[1.0, 1.0]).unwrap()).unwrap();
        assert!(close(&w.weights, &[0.5, 0.5], 1e-15));
        assert!((w.variance - 0.5).abs() < 1e-15);
        assert!((w.multiplier + 0.5).abs() < 1e-15);
    }

    #[test]
    fn inverse_variance_by_hand() {
        let w = optimal_weights(&CovarianceMatrix::diagonal(&[1.0, 4.0]).unwrap()).unwrap();
        assert!(close(&w.weights, &[0.8, 0.2], 1e-15));
        assert!((w.variance - 0.8).abs() < 1e-15);
    }

    #[test]
    fn correlated_symmetric_pair() {
        let cov = CovarianceMatrix::from_rows(&[vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let w = optimal_weights(&cov).unwrap();
        assert!(close(&w.weights, &[0.5, 0.5], 1e-15));
        assert!((w.variance - 0.75).abs() < 1e-15);
    }

    #[test]
    fn strong_correlation_yields_negative_weight() {
        // Σ⁻¹1 = (4 - 1.5, 1 - 1.5) / det, so α = (1.25, -0.25).
        let cov = CovarianceMatrix::from_rows(&[vec![1.0, 1.5], vec![1.5, 4.0]]).unwrap();
        let w = optimal_weights(&cov).unwrap();
        assert!(close(&w.weights, &[1.25, -0.25], 1e-14), "{:?}", w.weights);
        // 1.25² + 0.25² * 4 - 2 * 1.25 * 0.25 * 1.5
        assert!((w.variance - 0.875).abs() < 1e-14);
        assert!(componentwise_weight_residual(&cov, &w.weights) < 1e-12);
    }

    #[test]
    fn singular_and_indefinite_rejected() {
        let singular = CovarianceMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(matches!(
            optimal_weights(&singular),
            Err(Error::SingularCovariance { .. })
        ));
        let nearly = CovarianceMatrix::from_rows(&[vec![1.0, 1.0 - 1e-14], vec![1.0 - 1e-14, 1.0]])
            .unwrap();
        assert!(matches!(
            optimal_weights(&nearly),
            Err(Error::SingularCovariance { .. })
        ));
        let indefinite = CovarianceMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(optimal_weights(&indefinite), Err(Error::IndefiniteCovariance));
        assert!(CovarianceMatrix::from_rows(&[vec![1.0, 0.1], vec![0.2, 1.0]]).is_err());
    }

    #[test]
    fn diagonal_corollary() {
        let d = optimal_weights_diagonal(&[1.0, 1.0, 1.0]).unwrap();
        assert!(close(&d.weights, &[1.0 / 3.0; 3], 1e-15));
        assert!((d.variance - 1.0 / 3.0).abs() < 1e-15);
        let d = optimal_weights_diagonal(&[2.0, 3.0, 6.0]).unwrap();
        assert!(close(&d.weights, &[0.5, 1.0 / 3.0, 1.0 / 6.0], 1e-15));
        assert!((d.variance - 1.0).abs() < 1e-15);
        let d = optimal_weights_diagonal(&[1e-6, 1.0, 1.0]).unwrap();
        assert!((d.weights[0] - 1.0).abs() < 3e-6);
        assert!((d.variance - 1e-6).abs() < 1e-11);
        assert!(optimal_weights_diagonal(&[1.0, 0.0]).is_err());
        assert!(optimal_weights_diagonal(&[]).is_err());
    }

    #[test]
    fn componentwise_residual_examples() {
        let cov = CovarianceMatrix::diagonal(&[1.0, 4.0]).unwrap();
        assert!(componentwise_weight_residual(&cov, &[0.8, 0.2]) <= 1e-12);
        let eye = CovarianceMatrix::diagonal(&[1.0, 1.0]).unwrap();
        assert!((componentwise_weight_residual(&eye, &[1.0, 0.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn dominance_examples() {
        assert!(!dominance_criterion(&[1.0, 1.0, 1.0], 1.0).unwrap());
        assert!(dominance_criterion(&[1.0, 1.0, 1.0], 1.01).unwrap());
        assert!(!dominance_criterion(&[1.0, 100.0, 100.0], 2.9).unwrap());
        assert!(dominance_criterion(&[1.0, 100.0, 100.0], 2.95).unwrap());
        assert!(dominance_criterion(&[1.0, -1.0], 2.0).is_err());
        assert!(dominance_criterion(&[1.0], 0.0).is_err());
    }

    #[test]
    fn fuse_single_input_is_identity() {
        let r = est(0.01, 0.04, 100);
        let f = fuse(&[r.clone()], &CovarianceModel::Independent).unwrap();
        assert_eq!(f.estimate, r.estimate);
        assert_eq!(f.weights, vec![1.0]);
        assert!((f.variance - r.estimator_variance()).abs() < 1e-18);
    }

    #[test]
    fn fuse_excludes_empty_estimators() {
        let inputs = [est(0.0, 0.0, 100), est(0.01, 0.01, 100), est(0.02, 0.04, 100)];
        let f = fuse(&inputs, &CovarianceModel::Independent).unwrap();
        assert_eq!(f.excluded, vec![0]);
        assert_eq!(f.weights[0], 0.0);
        assert!(close(&f.weights[1..], &[0.8, 0.2], 1e-15));
        assert!((f.estimate - (0.8 * 0.01 + 0.2 * 0.02)).abs() < 1e-17);
        assert_eq!(f.covariance_used.k(), 2);
    }

    #[test]
    fn fuse_all_empty_is_no_information() {
        let inputs = [est(0.0, 0.0, 10), est(0.0, 0.0, 10)];
        let f = fuse(&inputs, &CovarianceModel::Independent).unwrap();
        assert!(f.no_information);
        assert_eq!(f.estimate, 0.0);
        assert_eq!(f.excluded, vec![0, 1]);
    }

    #[test]
    fn fuse_floors_zero_variance_with_positive_estimate() {
        let inputs = [est(1.0, 0.0, 10), est(0.5, 0.25, 10)];
        let f = fuse(&inputs, &CovarianceModel::Independent).unwrap();
        assert_eq!(f.floored, vec![0]);
        assert!((f.weights[0] - 1.0).abs() < 1e-12);
        assert!((f.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fuse_with_supplied_covariance() {
        let inputs = [est(0.0, 0.0, 10), est(0.01, 1.0, 1), est(0.03, 1.0, 1)];
        let cov = CovarianceMatrix::from_rows(&[
            vec![9.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.5],
            vec![0.0, 0.5, 1.0],
        ])
        .unwrap();
        let f = fuse(&inputs, &CovarianceModel::Supplied(cov)).unwrap();
        assert_eq!(f.excluded, vec![0]);
        assert!(close(&f.weights, &[0.0, 0.5, 0.5], 1e-15));
        assert!((f.variance - 0.75).abs() < 1e-15);
        assert!((f.estimate - 0.02).abs() < 1e-17);
        let wrong = CovarianceMatrix::diagonal(&[1.0]).unwrap();
        assert!(fuse(&inputs, &CovarianceModel::Supplied(wrong)).is_err());
    }

    #[test]
    fn covariance_json_is_rows() {
        let cov = CovarianceMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let json = serde_json::to_string(&cov).unwrap();
        assert_eq!(json, "[[2.0,0.5],[0.5,1.0]]");
        assert_eq!(serde_json::from_str::<CovarianceMatrix>(&json).unwrap(), cov);
    }
}
