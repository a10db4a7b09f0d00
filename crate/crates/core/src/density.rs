//! Probability densities over the input domain.
//!
//! Two families are supported: the uniform box, used as the nominal density
//! of bounded parameter domains, and Gaussian mixtures, used both as nominal
//! densities (independent standard normals) and as biasing densities fitted
//! to failure samples. Densities are immutable once built and are shared
//! freely across worker threads.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, std_normal_quantile};

/// Default relative covariance regularization used when fitting biasing densities.
pub const DEFAULT_REGULARIZATION: f64 = 1e-10;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Axis-aligned box with constant density `1 / volume`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BoxSpec", into = "BoxSpec")]
pub struct UniformBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
    log_volume: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxSpec {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<BoxSpec> for UniformBox {
    type Error = Error;

    fn try_from(spec: BoxSpec) -> Result<Self> {
        UniformBox::new(spec.lower, spec.upper)
    }
}

impl From<UniformBox> for BoxSpec {
    fn from(b: UniformBox) -> Self {
        BoxSpec {
            lower: b.lower,
            upper: b.upper,
        }
    }
}

impl UniformBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidDensity("box has zero dimensions".into()));
        }
        if lower
            .iter()
            .zip(&upper)
            .any(|(l, u)| !(l.is_finite() && u.is_finite() && l < u))
        {
            return Err(Error::InvalidDensity(
                "box bounds must be finite with lower < upper".into(),
            ));
        }
        let log_volume = lower.iter().zip(&upper).map(|(l, u)| (u - l).ln()).sum();
        Ok(Self {
            lower,
            upper,
            log_volume,
        })
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn volume(&self) -> f64 {
        self.log_volume.exp()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| l <= x && x <= u)
    }

    fn log_pdf(&self, z: &[f64]) -> f64 {
        if self.contains(z) {
            -self.log_volume
        } else {
            f64::NEG_INFINITY
        }
    }

    fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| l + (u - l) * rng.random::<f64>())
            .collect()
    }
}

/// One weighted multivariate normal component.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    weight: f64,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    /// Lower Cholesky factor of `covariance`.
    factor: DMatrix<f64>,
    /// `-0.5 * (d ln 2π + ln det Σ)`.
    log_norm: f64,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: covariance.nrows(),
            });
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidDensity("component weight must be positive".into()));
        }
        if mean.iter().chain(covariance.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidDensity("non-finite mean or covariance".into()));
        }
        let scale = covariance.amax();
        for i in 0..d {
            for j in 0..i {
                if (covariance[(i, j)] - covariance[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidDensity("covariance is not symmetric".into()));
                }
            }
        }
        let covariance = (&covariance + covariance.transpose()) * 0.5;
        let factor = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidDensity("covariance is not positive definite".into()))?
            .unpack();
        let log_det: f64 = 2.0 * factor.diagonal().iter().map(|x| x.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::InvalidDensity("covariance is numerically singular".into()));
        }
        Ok(Self {
            weight,
            mean: DVector::from_vec(mean),
            covariance,
            factor,
            log_norm: -0.5 * (d as f64 * LN_2PI + log_det),
        })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Lower Cholesky factor of the covariance.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    fn log_density(&self, z: &[f64]) -> f64 {
        let diff = DVector::from_iterator(z.len(), z.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        // The factor is lower triangular with a positive diagonal, so this solve succeeds.
        let whitened = self
            .factor
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor has a positive diagonal");
        self.log_norm - 0.5 * whitened.norm_squared()
    }

    /// Maps standard-normal coordinates through `mean + L xi`.
    fn transform(&self, xi: &[f64]) -> Vec<f64> {
        let xi = DVector::from_column_slice(xi);
        (&self.mean + &self.factor * xi).iter().copied().collect()
    }
}

/// Finite mixture of multivariate normals. Every component has full support,
/// so the mixture is positive everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureSpec", into = "MixtureSpec")]
pub struct GaussianMixture {
    dim: usize,
    components: Vec<GaussianComponent>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MixtureSpec {
    components: Vec<ComponentSpec>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentSpec {
    weight: f64,
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
}

impl TryFrom<MixtureSpec> for GaussianMixture {
    type Error = Error;

    fn try_from(spec: MixtureSpec) -> Result<Self> {
        let components = spec
            .components
            .into_iter()
            .map(|c| {
                let d = c.mean.len();
                if c.covariance.len() != d || c.covariance.iter().any(|row| row.len() != d) {
                    return Err(Error::InvalidDensity("covariance must be d x d".into()));
                }
                let cov = DMatrix::from_fn(d, d, |i, j| c.covariance[i][j]);
                GaussianComponent::new(c.weight, c.mean, cov)
            })
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(components)
    }
}

impl From<GaussianMixture> for MixtureSpec {
    fn from(m: GaussianMixture) -> Self {
        MixtureSpec {
            components: m
                .components
                .into_iter()
                .map(|c| ComponentSpec {
                    weight: c.weight,
                    mean: c.mean.iter().copied().collect(),
                    covariance: c
                        .covariance
                        .row_iter()
                        .map(|row| row.iter().copied().collect())
                        .collect(),
                })
                .collect(),
        }
    }
}

impl GaussianMixture {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        let Some(first) = components.first() else {
            return Err(Error::InvalidDensity("mixture has no components".into()));
        };
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::InvalidDensity("mixture has zero dimensions".into()));
        }
        if let Some(c) = components.iter().find(|c| c.mean.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: c.mean.len(),
            });
        }
        let total = compensated_sum(components.iter().map(|c| c.weight));
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidDensity(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        Ok(Self { dim, components })
    }

    /// Single-component mixture.
    pub fn gaussian(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![GaussianComponent::new(1.0, mean, covariance)?])
    }

    /// Independent standard normals in `dim` dimensions.
    pub fn standard_normal(dim: usize) -> Result<Self> {
        Self::gaussian(vec![0.0; dim], DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    fn log_pdf(&self, z: &[f64]) -> f64 {
        if let [only] = self.components.as_slice() {
            return only.log_density(z);
        }
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + c.log_density(z))
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return max;
        }
        max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
    }

    fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let component = if self.components.len() == 1 {
            &self.components[0]
        } else {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            self.components
                .iter()
                .find(|c| {
                    acc += c.weight;
                    u < acc
                })
                .unwrap_or_else(|| self.components.last().expect("non-empty mixture"))
        };
        let xi: Vec<f64> = (0..self.dim).map(|_| rng.sample(StandardNormal)).collect();
        component.transform(&xi)
    }
}

/// Nominal or biasing density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Density {
    UniformBox(UniformBox),
    GaussianMixture(GaussianMixture),
}

impl From<UniformBox> for Density {
    fn from(b: UniformBox) -> Self {
        Density::UniformBox(b)
    }
}

impl From<GaussianMixture> for Density {
    fn from(m: GaussianMixture) -> Self {
        Density::GaussianMixture(m)
    }
}

impl Density {
    pub fn dim(&self) -> usize {
        match self {
            Density::UniformBox(b) => b.dim(),
            Density::GaussianMixture(m) => m.dim(),
        }
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: z.len(),
            });
        }
        Ok(())
    }

    /// Natural log of the density; `-inf` outside the support.
    pub fn log_pdf(&self, z: &[f64]) -> Result<f64> {
        self.check_dim(z)?;
        Ok(match self {
            Density::UniformBox(b) => b.log_pdf(z),
            Density::GaussianMixture(m) => m.log_pdf(z),
        })
    }

    pub fn pdf(&self, z: &[f64]) -> Result<f64> {
        self.log_pdf(z).map(f64::exp)
    }

    /// `count` i.i.d. draws from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<Vec<f64>> {
        (0..count)
            .map(|_| match self {
                Density::UniformBox(b) => b.sample_one(rng),
                Density::GaussianMixture(m) => m.sample_one(rng),
            })
            .collect()
    }

    /// Probability-integral transform from `[0,1]^d` onto this density.
    ///
    /// Defined for boxes (affine map) and single-component Gaussians
    /// (`mean + L Φ⁻¹(u)`). Coordinates are clamped away from 0 and 1 so the
    /// Gaussian map stays finite.
    pub fn from_unit_cube(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(u)?;
        match self {
            Density::UniformBox(b) => Ok(u
                .iter()
                .zip(b.lower.iter().zip(&b.upper))
                .map(|(t, (l, h))| l + (h - l) * t.clamp(0.0, 1.0))
                .collect()),
            Density::GaussianMixture(m) => match m.components.as_slice() {
                [only] => {
                    let xi: Vec<f64> = u
                        .iter()
                        .map(|t| std_normal_quantile(t.clamp(1e-16, 1.0 - 1e-16)))
                        .collect();
                    Ok(only.transform(&xi))
                }
                _ => Err(Error::NotTransformable(
                    "multi-component mixtures have no closed-form transform".into(),
                )),
            },
        }
    }
}

/// Fits a one-component Gaussian to `samples`.
///
/// Mean and unbiased covariance (divisor `n - 1`) are computed with compensated
/// sums, then every variance is inflated by `regularization` times itself. At
/// least `d + 2` samples are required.
pub fn fit_gaussian(samples: &[Vec<f64>], regularization: f64) -> Result<GaussianMixture> {
    if !(regularization >= 0.0 && regularization.is_finite()) {
        return Err(Error::InvalidArgument(
            "regularization must be a nonnegative finite number".into(),
        ));
    }
    let Some(first) = samples.first() else {
        return Err(Error::InsufficientFailureSamples {
            found: 0,
            required: 2,
        });
    };
    let d = first.len();
    let n = samples.len();
    if n < d + 2 {
        return Err(Error::InsufficientFailureSamples {
            found: n,
            required: d + 2,
        });
    }
    if let Some(bad) = samples.iter().find(|s| s.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    let mean: Vec<f64> = (0..d)
        .map(|i| compensated_sum(samples.iter().map(|s| s[i])) / n as f64)
        .collect();
    let mut cov = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let c = compensated_sum(samples.iter().map(|s| (s[i] - mean[i]) * (s[j] - mean[j])))
                / (n - 1) as f64;
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    if (0..d).any(|i| cov[(i, i)] <= 0.0) {
        return Err(Error::DegenerateSamples);
    }
    for i in 0..d {
        cov[(i, i)] *= 1.0 + regularization;
    }
    let fitted = GaussianMixture::gaussian(mean, cov).map_err(|e| match e {
        Error::InvalidDensity(_) => Error::DegenerateSamples,
        other => other,
    })?;
    // A pivot that lost all significant digits means a numerically singular fit.
    let component = &fitted.components()[0];
    let factor = component.cholesky_factor();
    let covariance = component.covariance();
    if (0..d).any(|i| factor[(i, i)].powi(2) <= 64.0 * f64::EPSILON * covariance[(i, i)]) {
        return Err(Error::DegenerateSamples);
    }
    Ok(fitted)
}
