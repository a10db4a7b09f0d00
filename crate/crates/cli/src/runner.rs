//! End-to-end experiment campaigns.
//!
//! Phase 1 builds one biasing density per surrogate (and optionally a
//! reference density from the high-fidelity model). Phase 2 runs, for every
//! total budget and repetition, the per-density importance samplers with the
//! true limit state and fuses them. Phase 3 runs subset simulation.

use std::time::Instant;

use rarefuse_core::benchmarks::{benchmark_by_name, oracle_failure_probability, Benchmark, Oracle};
use rarefuse_core::density::Density;
use rarefuse_core::estimators::{
    importance_sampling_estimate, monte_carlo_estimate, EstimatorResult,
};
use rarefuse_core::fusion::{fuse, CovarianceModel};
use rarefuse_core::mfis::{build_biasing_density, BiasingBuildReport};
use rarefuse_core::rng::RngStream;
use rarefuse_core::subset_sim::{subset_simulation, SubsetResult};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Mode};
use crate::error::CliError;

/// Grid resolution used for the quadrature oracle quoted in reports.
pub const REPORT_ORACLE_RESOLUTION: usize = 2001;

pub const FUSED_ID: &str = "fused";
pub const REFERENCE_ID: &str = "reference";
pub const MC_ID: &str = "mc";

const DENSITY_STREAM: u64 = 1;
const REFERENCE_DENSITY_STREAM: u64 = 2;
const ESTIMATE_STREAM: u64 = 3;
const FULL_BUDGET_STREAM: u64 = 4;
const REFERENCE_STREAM: u64 = 5;
const MC_STREAM: u64 = 6;
const SUBSET_STREAM: u64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    /// Some density would receive fewer than two samples.
    Insufficient,
    /// Every input was excluded from fusion.
    NoInformation,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Insufficient => "insufficient",
            RowStatus::NoInformation => "no_information",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityRecord {
    pub id: String,
    /// Cost tag of the model whose failure set shaped the density.
    pub source: String,
    #[serde(flatten)]
    pub build: BiasingBuildReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub repetition: usize,
    pub n_total: usize,
    pub estimator_id: String,
    /// `MC`, `IS` or `fused`.
    pub kind: String,
    pub n: usize,
    pub estimate: Option<f64>,
    /// Variance of the estimate.
    pub variance: Option<f64>,
    pub hits: usize,
    pub rmse: Option<f64>,
    pub cv: Option<f64>,
    pub status: RowStatus,
}

impl EstimateRow {
    fn from_result(repetition: usize, n_total: usize, r: &EstimatorResult) -> Self {
        Self {
            repetition,
            n_total,
            estimator_id: r.density_id.clone(),
            kind: r.kind.as_str().to_string(),
            n: r.n,
            estimate: Some(r.estimate),
            variance: Some(r.estimator_variance()),
            hits: r.hits,
            rmse: Some(r.rmse()),
            cv: r.cv().ok(),
            status: RowStatus::Ok,
        }
    }

    fn insufficient(repetition: usize, n_total: usize, id: &str, kind: &str, n: usize) -> Self {
        Self {
            repetition,
            n_total,
            estimator_id: id.to_string(),
            kind: kind.to_string(),
            n,
            estimate: None,
            variance: None,
            hits: 0,
            rmse: None,
            cv: None,
            status: RowStatus::Insufficient,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightRow {
    pub repetition: usize,
    pub n_total: usize,
    /// One weight per biasing density, in density order; empty when insufficient.
    pub weights: Vec<f64>,
    pub excluded: Vec<usize>,
    pub status: RowStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSummary {
    pub description: String,
    pub resolution: Option<usize>,
    pub probability: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvaluationCounts {
    pub surrogate: usize,
    pub high_fidelity_density: usize,
    pub high_fidelity_estimation: usize,
    pub high_fidelity_subset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub benchmark: String,
    pub oracle: OracleSummary,
    pub densities: Vec<DensityRecord>,
    pub estimates: Vec<EstimateRow>,
    pub weights: Vec<WeightRow>,
    pub subset: Vec<SubsetResult>,
    pub evaluations: EvaluationCounts,
    pub timings: Vec<PhaseTiming>,
    pub warnings: Vec<String>,
}

impl CampaignReport {
    /// Ids of the surrogate-built densities, in fusion order.
    pub fn density_ids(&self) -> Vec<String> {
        self.densities
            .iter()
            .filter(|d| d.id != REFERENCE_ID)
            .map(|d| d.id.clone())
            .collect()
    }
}

fn density_id(i: usize) -> String {
    format!("q{}", i + 1)
}

fn oracle_summary(b: &Benchmark) -> Result<OracleSummary, CliError> {
    let resolution = match b.oracle {
        Oracle::NormalTail { .. } => None,
        Oracle::GridQuadrature { .. } => Some(REPORT_ORACLE_RESOLUTION),
    };
    Ok(OracleSummary {
        description: b.oracle.describe(),
        resolution,
        probability: oracle_failure_probability(b, resolution.unwrap_or(0))?,
    })
}

struct Timer {
    timings: Vec<PhaseTiming>,
}

impl Timer {
    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(PhaseTiming {
            phase: phase.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

struct TaskOutput {
    rows: Vec<EstimateRow>,
    weights: WeightRow,
}

/// Runs the campaign described by `config` without touching the file system.
pub fn execute(config: &ExperimentConfig) -> Result<CampaignReport, CliError> {
    config.validate()?;
    let b = benchmark_by_name(&config.benchmark)?;
    let root = RngStream::new(config.seed);
    let mut timer = Timer { timings: Vec::new() };
    let mut warnings = Vec::new();
    let mut evaluations = EvaluationCounts::default();

    let oracle = timer.time("oracle", || oracle_summary(&b))?;

    let mut densities = Vec::new();
    if config.mode.builds_densities() {
        densities = timer.time("build_densities", || build_densities(config, &b, root))?;
        for d in &densities {
            if d.id == REFERENCE_ID {
                evaluations.high_fidelity_density += d.build.samples_drawn;
            } else {
                evaluations.surrogate += d.build.samples_drawn;
            }
            if d.build.fell_back_to_nominal {
                warnings.push(format!(
                    "density {} ({}) fell back to the nominal density: {} failures in {} samples",
                    d.id, d.source, d.build.failures_found, d.build.samples_drawn
                ));
            }
        }
    }

    let mut estimates = Vec::new();
    let mut weights = Vec::new();
    if config.mode.runs_convergence() || config.mode.runs_fusion_comparison() {
        let tasks: Vec<(usize, usize)> = config
            .n_grid
            .iter()
            .flat_map(|&n| (0..config.repetitions).map(move |rep| (n, rep)))
            .collect();
        let outputs = timer.time("estimation", || {
            tasks
                .par_iter()
                .map(|&(n, rep)| estimate_task(config, &b, &densities, root, n, rep))
                .collect::<Result<Vec<_>, CliError>>()
        })?;
        for out in outputs {
            if out.weights.status == RowStatus::Insufficient && out.weights.repetition == 0 {
                warnings.push(format!(
                    "n = {} leaves some density with fewer than 2 samples; rows flagged insufficient",
                    out.weights.n_total
                ));
            }
            evaluations.high_fidelity_estimation += out
                .rows
                .iter()
                .filter(|r| r.kind != FUSED_ID && r.status == RowStatus::Ok)
                .map(|r| r.n)
                .sum::<usize>();
            estimates.extend(out.rows);
            weights.push(out.weights);
        }
    }

    let mut subset = Vec::new();
    if config.mode.runs_subset() {
        let cfg = config.subset.to_core();
        subset = timer.time("subset", || {
            (0..config.repetitions)
                .into_par_iter()
                .map(|rep| {
                    subset_simulation(
                        b.high_fidelity.as_ref(),
                        &b.limit_state,
                        &b.nominal,
                        &cfg,
                        root.fork(SUBSET_STREAM).fork(rep as u64),
                    )
                })
                .collect::<Result<Vec<_>, _>>()
        })?;
        for (rep, r) in subset.iter().enumerate() {
            evaluations.high_fidelity_subset += r.total_model_evals;
            if !r.converged {
                warnings.push(format!(
                    "subset simulation repetition {rep} stopped after {} levels without reaching the failure set",
                    r.levels
                ));
            }
        }
    }

    Ok(CampaignReport {
        config: config.clone(),
        config_hash: config.hash(),
        benchmark: b.name.clone(),
        oracle,
        densities,
        estimates,
        weights,
        subset,
        evaluations,
        timings: timer.timings,
        warnings,
    })
}

fn build_densities(
    config: &ExperimentConfig,
    b: &Benchmark,
    root: RngStream,
) -> Result<Vec<DensityRecord>, CliError> {
    let mut records = Vec::new();
    for (i, surrogate) in b.surrogates.iter().enumerate() {
        let build = build_biasing_density(
            surrogate.as_ref(),
            &b.limit_state,
            &b.nominal,
            config.m,
            root.fork(DENSITY_STREAM).fork(i as u64),
            config.threshold_relax,
        )?;
        records.push(DensityRecord {
            id: density_id(i),
            source: surrogate.cost_tag().to_string(),
            build,
        });
    }
    if config.reference && (config.mode.runs_convergence() || config.mode == Mode::BuildDensities) {
        let build = build_biasing_density(
            b.high_fidelity.as_ref(),
            &b.limit_state,
            &b.nominal,
            config.m,
            root.fork(REFERENCE_DENSITY_STREAM),
            None,
        )?;
        records.push(DensityRecord {
            id: REFERENCE_ID.to_string(),
            source: b.high_fidelity.cost_tag().to_string(),
            build,
        });
    }
    Ok(records)
}

fn importance(
    b: &Benchmark,
    q: &Density,
    id: &str,
    n: usize,
    stream: RngStream,
) -> Result<EstimatorResult, CliError> {
    Ok(importance_sampling_estimate(
        b.high_fidelity.as_ref(),
        &b.limit_state,
        &b.nominal,
        q,
        id,
        n,
        stream,
    )?)
}

fn estimate_task(
    config: &ExperimentConfig,
    b: &Benchmark,
    densities: &[DensityRecord],
    root: RngStream,
    n: usize,
    rep: usize,
) -> Result<TaskOutput, CliError> {
    let biasing: Vec<&DensityRecord> = densities.iter().filter(|d| d.id != REFERENCE_ID).collect();
    let k = biasing.len();
    let counts = config.split.allocate(n, k);
    let task = |label: u64| root.fork(label).fork(n as u64).fork(rep as u64);
    let mut rows = Vec::new();

    let weights = if counts.iter().any(|&c| c < 2) {
        for (d, &c) in biasing.iter().zip(&counts) {
            rows.push(EstimateRow::insufficient(rep, n, &d.id, "IS", c));
        }
        rows.push(EstimateRow::insufficient(rep, n, FUSED_ID, FUSED_ID, n));
        WeightRow {
            repetition: rep,
            n_total: n,
            weights: Vec::new(),
            excluded: Vec::new(),
            status: RowStatus::Insufficient,
        }
    } else {
        let results = biasing
            .iter()
            .zip(&counts)
            .enumerate()
            .map(|(i, (d, &c))| importance(b, &d.build.density, &d.id, c, task(ESTIMATE_STREAM).fork(i as u64)))
            .collect::<Result<Vec<_>, _>>()?;
        rows.extend(results.iter().map(|r| EstimateRow::from_result(rep, n, r)));
        let fused = fuse(&results, &CovarianceModel::Independent)?;
        let status = if fused.no_information {
            RowStatus::NoInformation
        } else {
            RowStatus::Ok
        };
        rows.push(EstimateRow {
            repetition: rep,
            n_total: n,
            estimator_id: FUSED_ID.to_string(),
            kind: FUSED_ID.to_string(),
            n: fused.total_samples(),
            estimate: Some(fused.estimate),
            variance: Some(fused.variance),
            hits: results.iter().map(|r| r.hits).sum(),
            rmse: Some(fused.rmse()),
            cv: fused.cv().ok(),
            status,
        });
        WeightRow {
            repetition: rep,
            n_total: n,
            weights: fused.weights,
            excluded: fused.excluded,
            status,
        }
    };

    if config.mode.runs_fusion_comparison() && n >= 2 {
        for (i, d) in biasing.iter().enumerate() {
            let id = format!("{}:full", d.id);
            let r = importance(b, &d.build.density, &id, n, task(FULL_BUDGET_STREAM).fork(i as u64))?;
            rows.push(EstimateRow::from_result(rep, n, &r));
        }
    }
    if config.mode.runs_convergence() {
        if let Some(reference) = densities.iter().find(|d| d.id == REFERENCE_ID) {
            if n >= 2 {
                let r = importance(b, &reference.build.density, REFERENCE_ID, n, task(REFERENCE_STREAM))?;
                rows.push(EstimateRow::from_result(rep, n, &r));
            } else {
                rows.push(EstimateRow::insufficient(rep, n, REFERENCE_ID, "IS", n));
            }
        }
        if config.mc_baseline {
            let mut r = monte_carlo_estimate(
                b.high_fidelity.as_ref(),
                &b.limit_state,
                &b.nominal,
                n,
                task(MC_STREAM),
            )?;
            r.density_id = MC_ID.to_string();
            rows.push(EstimateRow::from_result(rep, n, &r));
        }
    }
    Ok(TaskOutput { rows, weights })
}
