//! Biasing densities from surrogate failure sets.
//!
//! Nominal samples are pushed through a cheap surrogate; the points it flags
//! as failures are fitted with a single Gaussian. When too few failures turn
//! up to fit one, the nominal density is used instead. An optional relaxation
//! widens the flagged set during construction only; estimators always use the
//! true limit state.

use serde::{Deserialize, Serialize};

use crate::density::{fit_gaussian, Density, DEFAULT_REGULARIZATION};
use crate::error::{Error, Result};
use crate::model::{limit_value, LimitState, Model};
use crate::rng::{par_batches, RngStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasingBuildReport {
    pub samples_drawn: usize,
    pub failures_found: usize,
    pub fell_back_to_nominal: bool,
    pub density: Density,
    /// A sample counts as failed when `g < threshold_used`.
    pub threshold_used: f64,
    /// The points that were fitted, in draw order.
    #[serde(skip)]
    pub failure_samples: Vec<Vec<f64>>,
}

/// Builds a biasing density for `surrogate` from `m` nominal draws.
///
/// `threshold_relax`, when given, must be nonnegative and replaces the failure
/// test `g < 0` by `g < threshold_relax`.
pub fn build_biasing_density(
    surrogate: &dyn Model,
    ls: &LimitState,
    nominal: &Density,
    m: usize,
    stream: RngStream,
    threshold_relax: Option<f64>,
) -> Result<BiasingBuildReport> {
    let threshold = threshold_relax.unwrap_or(0.0);
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "threshold relaxation must be finite and >= 0, got {threshold}"
        )));
    }
    let batches = par_batches(stream, m, |rng, len| -> Result<Vec<Vec<f64>>> {
        let mut failed = Vec::new();
        for z in nominal.sample(rng, len) {
            if limit_value(surrogate, ls, &z)? < threshold {
                failed.push(z);
            }
        }
        Ok(failed)
    });
    let mut failure_samples = Vec::new();
    for batch in batches {
        failure_samples.extend(batch?);
    }
    let failures_found = failure_samples.len();
    let fitted = match fit_gaussian(&failure_samples, DEFAULT_REGULARIZATION) {
        Ok(g) => Some(g),
        Err(Error::InsufficientFailureSamples { .. } | Error::DegenerateSamples) => None,
        Err(e) => return Err(e),
    };
    if fitted.is_none() {
        log::warn!(
            "{}: {failures_found} failure samples out of {m}; using the nominal density",
            surrogate.cost_tag()
        );
    }
    Ok(BiasingBuildReport {
        samples_drawn: m,
        failures_found,
        fell_back_to_nominal: fitted.is_none(),
        density: fitted.map_or_else(|| nominal.clone(), Density::from),
        threshold_used: threshold,
        failure_samples,
    })
}
