//! Built-in benchmark problems and their independent failure-probability oracles.
//!
//! * `linear-gaussian`: standard normal inputs in `d` dimensions, QoI
//!   `sum(z) / sqrt(d)`, failure above `beta`. Exact answer `Φ(-beta)`.
//! * `arrhenius-2d`: uniform inputs `(A, E)` on a box, smooth Arrhenius-type
//!   QoI, failure above a threshold. Answered by midpoint-grid quadrature.
//!
//! Each benchmark carries a good, a poor and a useless surrogate.

pub mod constants;

use std::sync::Arc;

use rayon::prelude::*;

use crate::density::{Density, GaussianMixture, UniformBox};
use crate::error::{Error, Result};
use crate::model::{indicator, FnModel, LimitState, Model};
use crate::numeric::std_normal_cdf;

pub const LINEAR_GAUSSIAN: &str = "linear-gaussian";
pub const ARRHENIUS_2D: &str = "arrhenius-2d";

/// Registered benchmark names.
pub const BENCHMARK_NAMES: [&str; 2] = [LINEAR_GAUSSIAN, ARRHENIUS_2D];

pub const DEFAULT_BETA: f64 = 3.5;
pub const DEFAULT_LINEAR_DIM: usize = 2;

/// How the reference failure probability of a benchmark is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum Oracle {
    /// `P = Φ(-beta)`.
    NormalTail { beta: f64 },
    /// Tensor midpoint rule for the high-fidelity indicator over a box.
    GridQuadrature { domain: UniformBox },
}

impl Oracle {
    pub fn describe(&self) -> String {
        match self {
            Oracle::NormalTail { beta } => format!("closed form Phi(-{beta})"),
            Oracle::GridQuadrature { domain } => {
                format!("midpoint-grid quadrature over a {}-d box", domain.dim())
            }
        }
    }
}

#[derive(Clone)]
pub struct Benchmark {
    pub name: String,
    pub nominal: Density,
    pub high_fidelity: Arc<dyn Model>,
    pub surrogates: Vec<Arc<dyn Model>>,
    pub limit_state: LimitState,
    pub oracle: Oracle,
}

impl std::fmt::Debug for Benchmark {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Benchmark")
            .field("name", &self.name)
            .field("dim", &self.dim())
            .field("surrogates", &self.surrogates.len())
            .field("oracle", &self.oracle)
            .finish()
    }
}

impl Benchmark {
    pub fn dim(&self) -> usize {
        self.nominal.dim()
    }
}

/// Linear limit state in standard normal space.
pub fn linear_gaussian(dim: usize, beta: f64) -> Result<Benchmark> {
    if dim == 0 || !beta.is_finite() {
        return Err(Error::InvalidArgument(
            "linear-gaussian needs d >= 1 and finite beta".into(),
        ));
    }
    let scale = 1.0 / (dim as f64).sqrt();
    let qoi = move |z: &[f64]| z.iter().sum::<f64>() * scale;
    let hf = FnModel::scalar("hfm", dim, qoi);
    let shifted = FnModel::scalar("shifted", dim, move |z| qoi(z) + 0.2);
    let scaled = FnModel::scalar("scaled", dim, move |z| qoi(z) * 0.9);
    let constant = FnModel::scalar("constant", dim, |_| 0.0);
    Ok(Benchmark {
        name: if dim == DEFAULT_LINEAR_DIM && beta == DEFAULT_BETA {
            LINEAR_GAUSSIAN.to_string()
        } else {
            format!("{LINEAR_GAUSSIAN}(d={dim},beta={beta})")
        },
        nominal: GaussianMixture::standard_normal(dim)?.into(),
        high_fidelity: Arc::new(hf),
        surrogates: vec![Arc::new(shifted), Arc::new(scaled), Arc::new(constant)],
        limit_state: LimitState::exceedance(beta),
        oracle: Oracle::NormalTail { beta },
    })
}

/// Arrhenius-type QoI `T_B + C1 ln(1 + A exp(-E / (R T_A)))`.
pub fn arrhenius_qoi(a: f64, e: f64) -> f64 {
    use constants::*;
    T_B + C1 * (a * (-e / (GAS_CONSTANT * T_A)).exp()).ln_1p()
}

fn arrhenius_gradient(a: f64, e: f64) -> [f64; 2] {
    use constants::*;
    let rt = GAS_CONSTANT * T_A;
    let decay = (-e / rt).exp();
    let x = a * decay;
    [C1 * decay / (1.0 + x), -C1 * x / ((1.0 + x) * rt)]
}

pub fn arrhenius_2d() -> Result<Benchmark> {
    arrhenius_2d_with_threshold(constants::THRESHOLD)
}

/// `arrhenius-2d` with a custom failure threshold on the QoI.
pub fn arrhenius_2d_with_threshold(threshold: f64) -> Result<Benchmark> {
    use constants::*;
    let domain = UniformBox::new(vec![A_LOWER, E_LOWER], vec![A_UPPER, E_UPPER])?;
    let hf = FnModel::scalar("hfm", 2, |z| arrhenius_qoi(z[0], z[1]));

    let (a0, e0) = (0.5 * (A_LOWER + A_UPPER), 0.5 * (E_LOWER + E_UPPER));
    let f0 = arrhenius_qoi(a0, e0);
    let [da, de] = arrhenius_gradient(a0, e0);
    let taylor = FnModel::scalar("taylor", 2, move |z| f0 + da * (z[0] - a0) + de * (z[1] - e0));
    let perturbed = FnModel::scalar("perturbed-e", 2, |z| {
        arrhenius_qoi(z[0], z[1] * (1.0 + E_PERTURBATION))
    });
    let constant = FnModel::scalar("constant", 2, move |_| f0);

    Ok(Benchmark {
        name: if threshold == THRESHOLD {
            ARRHENIUS_2D.to_string()
        } else {
            format!("{ARRHENIUS_2D}(tau={threshold})")
        },
        nominal: domain.clone().into(),
        high_fidelity: Arc::new(hf),
        surrogates: vec![Arc::new(taylor), Arc::new(perturbed), Arc::new(constant)],
        limit_state: LimitState::exceedance(threshold),
        oracle: Oracle::GridQuadrature { domain },
    })
}

/// Resolves a benchmark by name.
///
/// Parameters may follow in parentheses:
/// `linear-gaussian(d=3,beta=2.5)` or `arrhenius-2d(tau=2490)`.
pub fn benchmark_by_name(spec: &str) -> Result<Benchmark> {
    let spec = spec.trim();
    let (name, params) = match spec.split_once('(') {
        Some((name, rest)) => {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| Error::UnknownBenchmark(spec.to_string()))?;
            (name.trim(), parse_params(inner, spec)?)
        }
        None => (spec, Vec::new()),
    };
    let lookup = |key: &str| params.iter().find(|(k, _)| k == key).map(|(_, v)| *v);
    let allow = |keys: &[&str]| -> Result<()> {
        match params.iter().find(|(k, _)| !keys.contains(&k.as_str())) {
            Some((k, _)) => Err(Error::InvalidArgument(format!(
                "unknown parameter '{k}' for benchmark {name}"
            ))),
            None => Ok(()),
        }
    };
    match name {
        LINEAR_GAUSSIAN => {
            allow(&["d", "beta"])?;
            let d = lookup("d").unwrap_or(DEFAULT_LINEAR_DIM as f64);
            if d < 1.0 || d.fract() != 0.0 {
                return Err(Error::InvalidArgument(format!("d must be a positive integer, got {d}")));
            }
            linear_gaussian(d as usize, lookup("beta").unwrap_or(DEFAULT_BETA))
        }
        ARRHENIUS_2D => {
            allow(&["tau"])?;
            arrhenius_2d_with_threshold(lookup("tau").unwrap_or(constants::THRESHOLD))
        }
        _ => Err(Error::UnknownBenchmark(spec.to_string())),
    }
}

fn parse_params(inner: &str, spec: &str) -> Result<Vec<(String, f64)>> {
    inner
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (k, v) = p
                .split_once('=')
                .ok_or_else(|| Error::UnknownBenchmark(spec.to_string()))?;
            let v: f64 = v.trim().parse().map_err(|_| {
                Error::InvalidArgument(format!("parameter '{}' is not a number", k.trim()))
            })?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

/// Minimum grid resolution accepted by the quadrature oracle.
pub const MIN_ORACLE_RESOLUTION: usize = 101;

/// Reference failure probability of `benchmark`.
///
/// `resolution` is the number of midpoints per axis for quadrature oracles and
/// is ignored by closed-form ones.
pub fn oracle_failure_probability(benchmark: &Benchmark, resolution: usize) -> Result<f64> {
    match &benchmark.oracle {
        Oracle::NormalTail { beta } => Ok(std_normal_cdf(-beta)),
        Oracle::GridQuadrature { domain } => {
            if resolution < MIN_ORACLE_RESOLUTION {
                return Err(Error::InvalidArgument(format!(
                    "quadrature oracle needs resolution >= {MIN_ORACLE_RESOLUTION}, got {resolution}"
                )));
            }
            grid_failure_fraction(benchmark, domain, resolution)
        }
    }
}

fn grid_failure_fraction(benchmark: &Benchmark, domain: &UniformBox, r: usize) -> Result<f64> {
    let d = domain.dim();
    let axes: Vec<Vec<f64>> = domain
        .lower()
        .iter()
        .zip(domain.upper())
        .map(|(l, u)| {
            let h = (u - l) / r as f64;
            (0..r).map(|i| l + (i as f64 + 0.5) * h).collect()
        })
        .collect();
    let cells = (r as f64).powi(d as i32);
    let inner_count = r.pow(d as u32 - 1);
    let hf = benchmark.high_fidelity.as_ref();
    let ls = &benchmark.limit_state;
    let counts = (0..r)
        .into_par_iter()
        .map(|i0| -> Result<u64> {
            let mut z = vec![0.0; d];
            z[0] = axes[0][i0];
            let mut hits = 0u64;
            for mut flat in 0..inner_count {
                for axis in (1..d).rev() {
                    z[axis] = axes[axis][flat % r];
                    flat /= r;
                }
                hits += indicator(hf, ls, &z)? as u64;
            }
            Ok(hits)
        })
        .collect::<Result<Vec<u64>>>()?;
    Ok(counts.iter().sum::<u64>() as f64 / cells)
}
