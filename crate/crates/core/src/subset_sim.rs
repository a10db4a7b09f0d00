//! Subset simulation with component-wise Metropolis conditional sampling.
//!
//! All chains live in the unit hypercube; points are mapped onto the nominal
//! density by its probability-integral transform before each model call, so
//! the proposal needs no tuning per problem. Intermediate thresholds are the
//! `⌈p0 N⌉`-th smallest limit-state value of each level.

use rayon::prelude::*;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::density::Density;
use crate::error::{Error, Result};
use crate::estimators::format_float;
use crate::model::{limit_value, LimitState, Model};
use crate::rng::{par_batches, RngStream, SeededGenerator};

pub const DEFAULT_P0: f64 = 0.1;
pub const DEFAULT_PROPOSAL_WIDTH: f64 = 0.5;
pub const DEFAULT_MAX_LEVELS: usize = 20;
pub const MIN_SAMPLES_PER_LEVEL: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsetConfig {
    pub samples_per_level: usize,
    pub p0: f64,
    pub max_levels: usize,
    /// Half-width of the uniform coordinate proposal in the unit hypercube.
    pub proposal_width: f64,
}

impl Default for SubsetConfig {
    fn default() -> Self {
        Self {
            samples_per_level: 2000,
            p0: DEFAULT_P0,
            max_levels: DEFAULT_MAX_LEVELS,
            proposal_width: DEFAULT_PROPOSAL_WIDTH,
        }
    }
}

impl SubsetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_level < MIN_SAMPLES_PER_LEVEL {
            return Err(Error::InvalidArgument(format!(
                "subset simulation needs N >= {MIN_SAMPLES_PER_LEVEL}"
            )));
        }
        if !(self.p0 > 0.0 && self.p0 < 1.0) {
            return Err(Error::InvalidArgument("p0 must lie in (0, 1)".into()));
        }
        if self.max_levels == 0 {
            return Err(Error::InvalidArgument("max_levels must be >= 1".into()));
        }
        if !(self.proposal_width >= 0.0 && self.proposal_width.is_finite()) {
            return Err(Error::InvalidArgument("proposal width must be >= 0".into()));
        }
        Ok(())
    }
}

/// A chain position in the unit hypercube with its limit-state value.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub u: Vec<f64>,
    pub g: f64,
}

/// Samples of one level, grouped by Markov chain.
#[derive(Debug, Clone, Default)]
pub struct LevelTrace {
    pub chains: Vec<Vec<ChainState>>,
    /// Threshold picked from this level's samples (before clamping).
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetResult {
    pub estimate: f64,
    pub levels: usize,
    /// `b_1 > b_2 > ... > b_L`; `b_L = 0` when converged.
    pub thresholds: Vec<f64>,
    pub samples_per_level: usize,
    pub total_model_evals: usize,
    pub approx_cv: f64,
    /// Per-level coefficients of variation `δ_j`.
    pub level_cvs: Vec<f64>,
    pub p0: f64,
    pub converged: bool,
}

impl SubsetResult {
    pub const CSV_HEADER: [&'static str; 5] = [
        "samples",
        "samples_each_level",
        "levels",
        "failure_prob",
        "estimated_cov",
    ];

    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.total_model_evals.to_string(),
            self.samples_per_level.to_string(),
            self.levels.to_string(),
            format_float(self.estimate),
            format_float(self.approx_cv),
        ]
    }
}

fn reflect_unit(x: f64) -> f64 {
    let y = x.rem_euclid(2.0);
    if y > 1.0 {
        2.0 - y
    } else {
        y
    }
}

fn evaluate_at(
    u: &[f64],
    model: &dyn Model,
    ls: &LimitState,
    nominal: &Density,
) -> Result<f64> {
    let z = nominal.from_unit_cube(u)?;
    limit_value(model, ls, &z)
}

/// One modified-Metropolis move restricted to `{g ≤ threshold}`.
///
/// Every coordinate takes a uniform step of half-width `proposal_width`,
/// reflected into `[0, 1]`. The coordinate-wise acceptance ratio is the
/// nominal density ratio, identically 1 in the hypercube, so every coordinate
/// move is kept; the composite candidate is then accepted iff it stays in the
/// intermediate failure set, otherwise the current state is repeated.
pub fn mcmc_conditional_step(
    state: &ChainState,
    threshold: f64,
    model: &dyn Model,
    ls: &LimitState,
    nominal: &Density,
    proposal_width: f64,
    rng: &mut SeededGenerator,
) -> Result<ChainState> {
    if proposal_width == 0.0 {
        return Ok(state.clone());
    }
    let u: Vec<f64> = state
        .u
        .iter()
        .map(|&x| reflect_unit(x + proposal_width * (2.0 * rng.random::<f64>() - 1.0)))
        .collect();
    let g = evaluate_at(&u, model, ls, nominal)?;
    if g <= threshold {
        Ok(ChainState { u, g })
    } else {
        Ok(state.clone())
    }
}

/// Correlation factor `γ` of a level's indicator sequence.
///
/// With `N_c` chains, `N` samples and `R(k)` the lag-`k` autocovariance of the
/// indicator pooled over all within-chain pairs,
/// `γ = 2 Σ_{k ≥ 1} (1 − k N_c / N) R(k) / R(0)` for lags while the weight is
/// positive, where `R(0) = p (1 − p)`. Chains of length one contribute nothing.
fn correlation_factor(chains: &[Vec<ChainState>], hit: impl Fn(&ChainState) -> bool, p: f64) -> f64 {
    let r0 = p * (1.0 - p);
    if r0 <= 0.0 {
        return 0.0;
    }
    let n: usize = chains.iter().map(Vec::len).sum();
    let nc = chains.len() as f64;
    let indicators: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| c.iter().map(|s| hit(s) as u8 as f64).collect())
        .collect();
    let longest = indicators.iter().map(Vec::len).max().unwrap_or(0);
    let mut gamma = 0.0;
    for lag in 1..longest {
        let weight = 1.0 - lag as f64 * nc / n as f64;
        if weight <= 0.0 {
            break;
        }
        let (mut sum, mut pairs) = (0.0, 0usize);
        for seq in indicators.iter().filter(|s| s.len() > lag) {
            sum += seq.iter().zip(&seq[lag..]).map(|(a, b)| a * b).sum::<f64>();
            pairs += seq.len() - lag;
        }
        if pairs == 0 {
            break;
        }
        gamma += 2.0 * weight * (sum / pairs as f64 - p * p) / r0;
    }
    gamma
}

fn level_cv_squared(p: f64, n: usize, gamma: f64) -> f64 {
    if p <= 0.0 {
        return f64::INFINITY;
    }
    (1.0 - p) / (n as f64 * p) * (1.0 + gamma)
}

/// Subset simulation estimate of `P(g(f(Z)) < 0)`.
pub fn subset_simulation(
    model: &dyn Model,
    ls: &LimitState,
    nominal: &Density,
    config: &SubsetConfig,
    stream: RngStream,
) -> Result<SubsetResult> {
    subset_simulation_traced(model, ls, nominal, config, stream).map(|(r, _)| r)
}

/// [`subset_simulation`] that also returns every level's chains.
pub fn subset_simulation_traced(
    model: &dyn Model,
    ls: &LimitState,
    nominal: &Density,
    config: &SubsetConfig,
    stream: RngStream,
) -> Result<(SubsetResult, Vec<LevelTrace>)> {
    config.validate()?;
    let n = config.samples_per_level;
    let p0 = config.p0;
    let d = nominal.dim();
    let seed_count = ((p0 * n as f64).ceil() as usize).clamp(1, n);

    // Level 1: independent nominal draws, each its own chain of length one.
    let first = par_batches(stream.fork(0), n, |rng, len| -> Result<Vec<ChainState>> {
        (0..len)
            .map(|_| {
                let u: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                let g = evaluate_at(&u, model, ls, nominal)?;
                Ok(ChainState { u, g })
            })
            .collect()
    });
    let mut chains: Vec<Vec<ChainState>> = Vec::with_capacity(n);
    for batch in first {
        chains.extend(batch?.into_iter().map(|s| vec![s]));
    }

    let mut evals = n;
    let mut thresholds = Vec::new();
    let mut level_cvs = Vec::new();
    let mut traces = Vec::new();
    let mut level = 1;
    loop {
        let mut values: Vec<f64> = chains.iter().flatten().map(|s| s.g).collect();
        values.sort_by(f64::total_cmp);
        let b = values[seed_count - 1];
        let stagnated = thresholds.last().is_some_and(|&prev| b >= prev);
        let last = b <= 0.0 || level == config.max_levels || stagnated;

        if last {
            let hits = chains.iter().flatten().filter(|s| s.g < 0.0).count();
            let p_final = hits as f64 / n as f64;
            let gamma = correlation_factor(&chains, |s| s.g < 0.0, p_final);
            level_cvs.push(level_cv_squared(p_final, n, gamma).sqrt());
            let converged = b <= 0.0;
            thresholds.push(if converged { 0.0 } else { b });
            traces.push(LevelTrace { chains, threshold: b });
            if !converged {
                log::warn!("subset simulation stopped at level {level} without reaching the failure set");
            }
            let estimate = p0.powi(level as i32 - 1) * p_final;
            let approx_cv = level_cvs.iter().map(|c| c * c).sum::<f64>().sqrt();
            return Ok((
                SubsetResult {
                    estimate,
                    levels: level,
                    thresholds,
                    samples_per_level: n,
                    total_model_evals: evals,
                    approx_cv,
                    level_cvs,
                    p0,
                    converged,
                },
                traces,
            ));
        }

        let gamma = correlation_factor(&chains, |s| s.g <= b, p0);
        level_cvs.push(level_cv_squared(p0, n, gamma).sqrt());
        thresholds.push(b);

        let seeds: Vec<ChainState> = chains.iter().flatten().filter(|s| s.g <= b).cloned().collect();
        traces.push(LevelTrace { chains, threshold: b });
        let (base, extra) = (n / seeds.len(), n % seeds.len());
        let level_stream = stream.fork(level as u64);
        let grown = seeds
            .into_par_iter()
            .enumerate()
            .map(|(i, seed)| -> Result<Vec<ChainState>> {
                let len = base + usize::from(i < extra);
                let mut rng = level_stream.batch_generator(i as u64);
                let mut chain = Vec::with_capacity(len);
                chain.push(seed);
                while chain.len() < len {
                    let next = mcmc_conditional_step(
                        chain.last().expect("chain starts at its seed"),
                        b,
                        model,
                        ls,
                        nominal,
                        config.proposal_width,
                        &mut rng,
                    )?;
                    chain.push(next);
                }
                Ok(chain)
            })
            .collect::<Result<Vec<_>>>()?;
        chains = grown.into_iter().filter(|c| !c.is_empty()).collect();
        let new_samples: usize = chains.iter().map(|c| c.len().saturating_sub(1)).sum();
        evals += if config.proposal_width == 0.0 { 0 } else { new_samples };
        level += 1;
    }
}
