//! Rare-event probability estimation with multifidelity importance sampling.
//!
//! Surrogate models shape biasing densities, the high-fidelity model is
//! sampled under each of them, and the resulting estimators are combined with
//! minimum-variance weights. Subset simulation is provided as a baseline.

pub mod benchmarks;
pub mod density;
pub mod error;
pub mod estimators;
pub mod fusion;
pub mod mfis;
pub mod model;
pub mod numeric;
pub mod rng;
pub mod subset_sim;

pub use benchmarks::{benchmark_by_name, oracle_failure_probability, Benchmark, Oracle};
pub use density::{fit_gaussian, Density, GaussianComponent, GaussianMixture, UniformBox};
pub use error::{Error, Result};
pub use estimators::{
    importance_sampling_estimate, monte_carlo_estimate, theoretical_mc_cv, EstimatorKind,
    EstimatorResult,
};
pub use fusion::{
    fuse, optimal_weights, optimal_weights_diagonal, CovarianceMatrix, CovarianceModel,
    FusedResult, OptimalWeights,
};
pub use mfis::{build_biasing_density, BiasingBuildReport};
pub use model::{FnModel, LimitState, Model};
pub use rng::RngStream;
pub use subset_sim::{subset_simulation, SubsetConfig, SubsetResult};
