//! Model and limit-state abstractions.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Deterministic map from a parameter vector to a quantity of interest.
pub trait Model: Send + Sync {
    fn input_dim(&self) -> usize;

    fn output_dim(&self) -> usize;

    /// Free-form label used in reports.
    fn cost_tag(&self) -> &str;

    fn evaluate(&self, z: &[f64]) -> Result<Vec<f64>>;
}

type ModelFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A [`Model`] backed by a closure.
#[derive(Clone)]
pub struct FnModel {
    tag: String,
    input_dim: usize,
    output_dim: usize,
    f: Arc<ModelFn>,
}

impl FnModel {
    pub fn new<F>(tag: impl Into<String>, input_dim: usize, output_dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        Self {
            tag: tag.into(),
            input_dim,
            output_dim,
            f: Arc::new(f),
        }
    }

    /// Scalar-output convenience constructor.
    pub fn scalar<F>(tag: impl Into<String>, input_dim: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::new(tag, input_dim, 1, move |z| vec![f(z)])
    }
}

impl fmt::Debug for FnModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnModel")
            .field("tag", &self.tag)
            .field("input_dim", &self.input_dim)
            .field("output_dim", &self.output_dim)
            .finish()
    }
}

impl Model for FnModel {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.output_dim
    }

    fn cost_tag(&self) -> &str {
        &self.tag
    }

    fn evaluate(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: z.len(),
            });
        }
        let y = (self.f)(z);
        if y.len() != self.output_dim {
            return Err(Error::Model(format!(
                "{} returned {} outputs, expected {}",
                self.tag,
                y.len(),
                self.output_dim
            )));
        }
        Ok(y)
    }
}

type LimitFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Limit-state function `g`; the system fails where `g(f(z)) < 0`.
#[derive(Clone)]
pub struct LimitState {
    label: String,
    g: Arc<LimitFn>,
}

impl fmt::Debug for LimitState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LimitState").field("label", &self.label).finish()
    }
}

impl LimitState {
    pub fn new<F>(label: impl Into<String>, g: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            g: Arc::new(g),
        }
    }

    /// `g(y) = threshold - y[0]`: failure when the scalar output exceeds `threshold`.
    pub fn exceedance(threshold: f64) -> Self {
        Self::new(format!("{threshold} - y"), move |y| threshold - y[0])
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn value(&self, qoi: &[f64]) -> f64 {
        (self.g)(qoi)
    }
}

/// `g(f(z))`, with non-finite outputs reported as model failures.
pub fn limit_value(model: &dyn Model, ls: &LimitState, z: &[f64]) -> Result<f64> {
    let y = model.evaluate(z)?;
    let g = ls.value(&y);
    if g.is_nan() {
        return Err(Error::Model(format!(
            "{} produced a NaN limit-state value at {z:?}",
            model.cost_tag()
        )));
    }
    Ok(g)
}

/// 1 if `z` is a failure configuration, i.e. `g(f(z)) < 0` strictly.
pub fn indicator(model: &dyn Model, ls: &LimitState, z: &[f64]) -> Result<bool> {
    Ok(limit_value(model, ls, z)? < 0.0)
}
