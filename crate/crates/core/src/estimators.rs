//! Plain Monte Carlo and importance-sampling failure probability estimators.

use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{Error, Result};
use crate::model::{indicator, Model, LimitState};
use crate::numeric::{compensated_sum, CompensatedSum};
use crate::rng::{par_batches, RngStream};

/// Label used for estimators that sample the nominal density.
pub const NOMINAL_ID: &str = "nominal";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "MC")]
    MonteCarlo,
    #[serde(rename = "IS")]
    ImportanceSampling,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::MonteCarlo => "MC",
            EstimatorKind::ImportanceSampling => "IS",
        }
    }
}

/// One unbiased failure probability estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub estimate: f64,
    /// Samples used.
    pub n: usize,
    /// Unbiased sample variance of the (weighted) indicator draws.
    pub sample_variance: f64,
    /// Raw failure count, also in IS mode.
    pub hits: usize,
    pub density_id: String,
    pub kind: EstimatorKind,
}

impl EstimatorResult {
    /// Variance of the estimate itself, `sample_variance / n`.
    pub fn estimator_variance(&self) -> f64 {
        self.sample_variance / self.n as f64
    }

    pub fn rmse(&self) -> f64 {
        rmse(self)
    }

    pub fn cv(&self) -> Result<f64> {
        cv(self)
    }

    pub const CSV_HEADER: [&'static str; 8] = [
        "density_id",
        "kind",
        "n",
        "estimate",
        "sample_variance",
        "hits",
        "rmse",
        "cv",
    ];

    /// Fields in [`Self::CSV_HEADER`] order; an undefined CV is left empty.
    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.density_id.clone(),
            self.kind.as_str().to_string(),
            self.n.to_string(),
            format_float(self.estimate),
            format_float(self.sample_variance),
            self.hits.to_string(),
            format_float(self.rmse()),
            self.cv().map(format_float).unwrap_or_default(),
        ]
    }
}

/// Decimal rendering with 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// `(1/n) Σ I_G(z_i)` with `z_i` drawn from `nominal`.
pub fn monte_carlo_estimate(
    model: &dyn Model,
    ls: &LimitState,
    nominal: &Density,
    n: usize,
    stream: RngStream,
) -> Result<EstimatorResult> {
    if n == 0 {
        return Err(Error::InvalidArgument("Monte Carlo needs n >= 1".into()));
    }
    let batches = par_batches(stream, n, |rng, len| -> Result<usize> {
        let mut hits = 0;
        for z in nominal.sample(rng, len) {
            hits += indicator(model, ls, &z)? as usize;
        }
        Ok(hits)
    });
    let hits = batches.into_iter().sum::<Result<usize>>()?;
    let p = hits as f64 / n as f64;
    let sample_variance = if n > 1 {
        n as f64 / (n - 1) as f64 * p * (1.0 - p)
    } else {
        0.0
    };
    Ok(EstimatorResult {
        estimate: p,
        n,
        sample_variance,
        hits,
        density_id: NOMINAL_ID.to_string(),
        kind: EstimatorKind::MonteCarlo,
    })
}

/// Importance-sampling estimate with draws from `biasing`.
///
/// Each draw contributes `I_G(z) p(z) / q(z)`. Draws outside the nominal
/// support contribute zero and are not passed to the model.
pub fn importance_sampling_estimate(
    model: &dyn Model,
    ls: &LimitState,
    nominal: &Density,
    biasing: &Density,
    density_id: &str,
    n: usize,
    stream: RngStream,
) -> Result<EstimatorResult> {
    if n < 2 {
        return Err(Error::InvalidArgument(
            "importance sampling needs n >= 2 for a sample variance".into(),
        ));
    }
    if nominal.dim() != biasing.dim() {
        return Err(Error::DimensionMismatch {
            expected: nominal.dim(),
            got: biasing.dim(),
        });
    }
    let batches = par_batches(stream, n, |rng, len| -> Result<(Vec<f64>, usize)> {
        let mut weights = Vec::with_capacity(len);
        let mut hits = 0;
        for z in biasing.sample(rng, len) {
            let log_q = biasing.log_pdf(&z)?;
            if log_q == f64::NEG_INFINITY {
                return Err(Error::ZeroBiasingDensity);
            }
            let log_p = nominal.log_pdf(&z)?;
            if log_p == f64::NEG_INFINITY {
                weights.push(0.0);
                continue;
            }
            if indicator(model, ls, &z)? {
                hits += 1;
                weights.push((log_p - log_q).exp());
            } else {
                weights.push(0.0);
            }
        }
        Ok((weights, hits))
    });
    let mut weights = Vec::with_capacity(n);
    let mut hits = 0;
    for batch in batches {
        let (w, h) = batch?;
        weights.extend(w);
        hits += h;
    }
    let (estimate, sample_variance) = mean_and_variance(&weights);
    Ok(EstimatorResult {
        estimate,
        n,
        sample_variance,
        hits,
        density_id: density_id.to_string(),
        kind: EstimatorKind::ImportanceSampling,
    })
}

/// Mean and unbiased two-pass variance; exactly zero variance when all values agree.
fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    if values.windows(2).all(|w| w[0] == w[1]) {
        return (values[0], 0.0);
    }
    let mut acc = CompensatedSum::new();
    acc.extend(values.iter().map(|w| (w - mean) * (w - mean)));
    (mean, acc.value() / (n - 1.0))
}

/// Root-mean-squared error `sqrt(sample_variance / n)`.
pub fn rmse(result: &EstimatorResult) -> f64 {
    (result.sample_variance / result.n as f64).sqrt()
}

/// Coefficient of variation `sqrt(sample_variance / (n estimate²))`.
pub fn cv(result: &EstimatorResult) -> Result<f64> {
    if result.estimate <= 0.0 {
        return Err(Error::UndefinedCv);
    }
    Ok((result.sample_variance / (result.n as f64 * result.estimate * result.estimate)).sqrt())
}

/// CV of plain Monte Carlo with `n` samples for true probability `p`.
pub fn theoretical_mc_cv(p: f64, n: usize) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("P must lie in (0, 1), got {p}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    Ok(((1.0 - p) / (n as f64 * p)).sqrt())
}
