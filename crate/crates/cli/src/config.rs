//! Experiment configuration: a flat JSON document, unknown keys rejected.

use std::path::{Path, PathBuf};

use rarefuse_core::benchmarks::benchmark_by_name;
use rarefuse_core::subset_sim::{SubsetConfig, DEFAULT_MAX_LEVELS, DEFAULT_P0, DEFAULT_PROPOSAL_WIDTH};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const DEFAULT_SURROGATE_BUDGET: usize = 20_000;
pub const DEFAULT_SUBSET_SAMPLES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    BuildDensities,
    Convergence,
    Fuse,
    Subset,
    All,
}

impl Mode {
    pub fn builds_densities(self) -> bool {
        !matches!(self, Mode::Subset)
    }

    pub fn runs_convergence(self) -> bool {
        matches!(self, Mode::Convergence | Mode::All)
    }

    pub fn runs_fusion_comparison(self) -> bool {
        matches!(self, Mode::Fuse | Mode::All)
    }

    pub fn runs_subset(self) -> bool {
        matches!(self, Mode::Subset | Mode::All)
    }
}

/// How a total budget `n` is divided among the biasing densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Split {
    /// `"equal"`: `⌊n/k⌋` each, remainder to the first densities.
    Named(SplitName),
    /// Fractions per density, summing to one.
    Fractions(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Equal,
}

impl Default for Split {
    fn default() -> Self {
        Split::Named(SplitName::Equal)
    }
}

impl Split {
    /// Per-density sample counts summing to `n`.
    pub fn allocate(&self, n: usize, k: usize) -> Vec<usize> {
        match self {
            Split::Named(SplitName::Equal) => {
                let (base, extra) = (n / k, n % k);
                (0..k).map(|i| base + usize::from(i < extra)).collect()
            }
            Split::Fractions(f) => {
                let mut counts: Vec<usize> = f.iter().map(|x| (x * n as f64).floor() as usize).collect();
                let assigned: usize = counts.iter().sum();
                for i in 0..n.saturating_sub(assigned) {
                    counts[i % k] += 1;
                }
                counts
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetSection {
    #[serde(rename = "N", default = "default_subset_samples")]
    pub samples_per_level: usize,
    #[serde(default = "default_p0")]
    pub p0: f64,
    #[serde(default = "default_max_levels")]
    pub max_levels: usize,
}

impl Default for SubsetSection {
    fn default() -> Self {
        Self {
            samples_per_level: DEFAULT_SUBSET_SAMPLES,
            p0: DEFAULT_P0,
            max_levels: DEFAULT_MAX_LEVELS,
        }
    }
}

impl SubsetSection {
    pub fn to_core(self) -> SubsetConfig {
        SubsetConfig {
            samples_per_level: self.samples_per_level,
            p0: self.p0,
            max_levels: self.max_levels,
            proposal_width: DEFAULT_PROPOSAL_WIDTH,
        }
    }
}

fn default_subset_samples() -> usize {
    DEFAULT_SUBSET_SAMPLES
}

fn default_p0() -> f64 {
    DEFAULT_P0
}

fn default_max_levels() -> usize {
    DEFAULT_MAX_LEVELS
}

fn default_m() -> usize {
    DEFAULT_SURROGATE_BUDGET
}

fn default_n_grid() -> Vec<usize> {
    vec![1000, 10_000]
}

fn default_repetitions() -> usize {
    1
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: String,
    pub mode: Mode,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default)]
    pub split: Split,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub threshold_relax: Option<f64>,
    #[serde(default)]
    pub subset: SubsetSection,
    /// Also run an importance sampler on a density built from the high-fidelity model.
    #[serde(default = "default_true")]
    pub reference: bool,
    /// Also run plain Monte Carlo with the full budget.
    #[serde(default = "default_true")]
    pub mc_baseline: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: Self =
            serde_json::from_str(text).map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |msg: String| Err(CliError::InvalidConfig(msg));
        let benchmark =
            benchmark_by_name(&self.benchmark).map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        if self.n_grid.is_empty() {
            return invalid("n_grid must not be empty".into());
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("n_grid must be strictly ascending".into());
        }
        if self.n_grid[0] == 0 {
            return invalid("n_grid entries must be positive".into());
        }
        if self.repetitions == 0 {
            return invalid("repetitions must be >= 1".into());
        }
        if self.m == 0 && self.mode.builds_densities() {
            return invalid("m must be >= 1".into());
        }
        if let Some(t) = self.threshold_relax {
            if !(t >= 0.0 && t.is_finite()) {
                return invalid(format!("threshold_relax must be finite and >= 0, got {t}"));
            }
        }
        if let Split::Fractions(f) = &self.split {
            let k = benchmark.surrogates.len();
            if f.len() != k {
                return invalid(format!("split needs {k} fractions, got {}", f.len()));
            }
            if f.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return invalid("split fractions must be positive".into());
            }
            if (f.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return invalid("split fractions must sum to 1".into());
            }
        }
        self.subset
            .to_core()
            .validate()
            .map_err(|e| CliError::InvalidConfig(format!("subset: {e}")))?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON rendering, shortened to 16 digits.
    /// The output directory does not take part.
    pub fn hash(&self) -> String {
        let mut identity = self.clone();
        identity.output_dir = PathBuf::new();
        let canonical = serde_json::to_string(&identity).expect("config always serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> String {
        r#"{"benchmark": "linear-gaussian", "mode": "all", "output_dir": "out"}"#.to_string()
    }

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_json(&minimal()).unwrap();
        assert_eq!(c.m, 20_000);
        assert_eq!(c.split, Split::Named(SplitName::Equal));
        assert_eq!(c.subset.samples_per_level, 2000);
        assert_eq!(c.repetitions, 1);
        assert!(c.reference && c.mc_baseline);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = minimal().replace("\"mode\"", "\"colour\": 1, \"mode\"");
        assert!(matches!(
            ExperimentConfig::from_json(&text),
            Err(CliError::InvalidConfig(_))
        ));
        let nested = minimal().replace("\"mode\"", "\"subset\": {\"N\": 500, \"q\": 1}, \"mode\"");
        assert!(ExperimentConfig::from_json(&nested).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        for patch in [
            r#""n_grid": [], "mode""#,
            r#""n_grid": [100, 100], "mode""#,
            r#""repetitions": 0, "mode""#,
            r#""threshold_relax": -1, "mode""#,
            r#""split": [0.5, 0.5], "mode""#,
            r#""split": "thirds", "mode""#,
            r#""subset": {"N": 10}, "mode""#,
        ] {
            let text = minimal().replace("\"mode\"", patch);
            assert!(ExperimentConfig::from_json(&text).is_err(), "{patch}");
        }
        let unknown = minimal().replace("linear-gaussian", "nope");
        assert!(ExperimentConfig::from_json(&unknown).is_err());
    }

    #[test]
    fn equal_split_gives_remainder_to_first() {
        assert_eq!(Split::default().allocate(1000, 3), vec![334, 333, 333]);
        assert_eq!(Split::default().allocate(5, 3), vec![2, 2, 1]);
        let f = Split::Fractions(vec![0.5, 0.25, 0.25]);
        assert_eq!(f.allocate(1001, 3), vec![501, 250, 250]);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::from_json(&minimal()).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
