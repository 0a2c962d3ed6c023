//! TOML run configuration. Unknown keys are rejected at every level.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sivc_core::eval::{Criterion, Model};
use sivc_core::gold::SyntheticSpec;

use crate::error::{Error, Result, ResultExt};

/// Root seed used when neither the config nor the command line sets one.
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub cluster: ClusterConfig,
    pub fit: FitConfig,
    pub simulate: SimulateConfig,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        Self::parse(&text).at(path)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterMode {
    /// Gaussian-mixture nodes with responsibility-weighted averages.
    #[default]
    Gmm,
    /// One node per region, plain voxel mean.
    RoiAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectEntry {
    pub path: PathBuf,
    /// Defaults to the file stem.
    pub id: Option<String>,
    pub cohort: String,
}

impl SubjectEntry {
    pub fn subject_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            self.path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub atlas: Option<PathBuf>,
    pub subjects: Vec<SubjectEntry>,
    pub exclude: Vec<u32>,
    pub mode: ClusterMode,
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub em_tol: f64,
    pub em_max_iter: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            atlas: None,
            subjects: Vec::new(),
            exclude: Vec::new(),
            mode: ClusterMode::Gmm,
            k_min: 1,
            k_max: 25,
            restarts: 5,
            em_tol: 1e-8,
            em_max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelName {
    #[default]
    Gl,
    Fgl,
    Ggl,
}

impl From<ModelName> for Model {
    fn from(m: ModelName) -> Self {
        match m {
            ModelName::Gl => Model::Gl,
            ModelName::Fgl => Model::Fgl,
            ModelName::Ggl => Model::Ggl,
        }
    }
}

impl std::str::FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.parse::<Model>()? {
            Model::Gl => Ok(ModelName::Gl),
            Model::Fgl => Ok(ModelName::Fgl),
            Model::Ggl => Ok(ModelName::Ggl),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceNorm {
    /// Divide by `n`.
    #[default]
    Ml,
    /// Divide by `n - 1`.
    Unbiased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Subject-matrix CSVs; the file stem is the cohort id.
    pub inputs: Vec<PathBuf>,
    pub model: ModelName,
    pub lambda1: f64,
    pub lambda2: f64,
    pub normalization: CovarianceNorm,
    pub normalize_n: bool,
    pub penalize_diagonal: bool,
    pub tol: f64,
    pub max_iter: usize,
    pub partial_correlations: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            model: ModelName::Gl,
            lambda1: 0.1,
            lambda2: 0.1,
            normalization: CovarianceNorm::Ml,
            normalize_n: false,
            penalize_diagonal: false,
            tol: 1e-6,
            max_iter: 1000,
            partial_correlations: false,
        }
    }
}

/// Synthetic gold-standard parameters; the seed comes from the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpecConfig {
    pub p: usize,
    pub groups: usize,
    pub edge_density: f64,
    pub shared_fraction: f64,
    pub weight_min: f64,
    pub weight_max: f64,
}

impl Default for SpecConfig {
    fn default() -> Self {
        let d = SyntheticSpec::default();
        Self {
            p: d.p,
            groups: d.groups,
            edge_density: d.edge_density,
            shared_fraction: d.shared_fraction,
            weight_min: d.weight_range.0,
            weight_max: d.weight_range.1,
        }
    }
}

impl SpecConfig {
    pub fn to_spec(self, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            p: self.p,
            groups: self.groups,
            edge_density: self.edge_density,
            shared_fraction: self.shared_fraction,
            weight_range: (self.weight_min, self.weight_max),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct SimulateConfig {
    /// Subjects sampled per cohort; 0 writes only the gold standard.
    pub n: usize,
    pub spec: SpecConfig,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Tune `lambda2` against the gold standard, then sweep `lambda1` per subset.
    #[default]
    GoldDriven,
    /// Select penalties by BIC on one pool, evaluate on a disjoint pool.
    CrossValidation,
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gold-driven" => Ok(Self::GoldDriven),
            "cross-validation" => Ok(Self::CrossValidation),
            _ => Err(Error::Config(format!("unknown experiment {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionName {
    #[default]
    Bic,
    Aic,
}

impl From<CriterionName> for Criterion {
    fn from(c: CriterionName) -> Self {
        match c {
            CriterionName::Bic => Criterion::Bic,
            CriterionName::Aic => Criterion::Aic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Directory holding a gold manifest; a synthetic gold is generated otherwise.
    pub gold: Option<PathBuf>,
    pub spec: SpecConfig,
    pub models: Vec<ModelName>,
    pub sizes: Vec<usize>,
    pub replicates: usize,
    /// Subjects simulated per cohort for resampling. Split in half for cross-validation.
    pub pool_size: usize,
    pub with_replacement: bool,
    /// Subjects per cohort used to tune `lambda2` in the gold-driven experiment.
    pub tune_n: usize,
    pub tune_lambda1_grid: Vec<f64>,
    pub lambda2_grid: Vec<f64>,
    /// Explicit sweep grid; overrides the log-spaced `lambda1_max/min/points`.
    pub lambda1_grid: Option<Vec<f64>>,
    pub lambda1_max: f64,
    pub lambda1_min: f64,
    pub lambda1_points: usize,
    pub criterion: CriterionName,
    pub tol: f64,
    pub max_iter: usize,
    pub zero_tol: f64,
    pub plots: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::GoldDriven,
            gold: None,
            spec: SpecConfig::default(),
            models: vec![ModelName::Gl, ModelName::Fgl, ModelName::Ggl],
            sizes: vec![25, 50, 100],
            replicates: 10,
            pool_size: 5000,
            with_replacement: true,
            tune_n: 500,
            tune_lambda1_grid: vec![0.001, 0.003, 0.01, 0.03, 0.1],
            lambda2_grid: vec![0.001, 0.01, 0.03, 0.1, 0.3],
            lambda1_grid: None,
            lambda1_max: 1.0,
            lambda1_min: 0.005,
            lambda1_points: 25,
            criterion: CriterionName::Bic,
            tol: 1e-6,
            max_iter: 2000,
            zero_tol: 1e-8,
            plots: true,
        }
    }
}

impl ExperimentConfig {
    /// The `lambda1` sweep, strongest penalty first.
    pub fn sweep_grid(&self) -> Result<Vec<f64>> {
        if let Some(g) = &self.lambda1_grid {
            if g.is_empty() || g.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                return Err(Error::Config(
                    "lambda1_grid must be nonempty and non-negative".into(),
                ));
            }
            let mut g = g.clone();
            g.sort_by(|a, b| b.total_cmp(a));
            return Ok(g);
        }
        if !(self.lambda1_max >= self.lambda1_min && self.lambda1_min > 0.0)
            || self.lambda1_points == 0
        {
            return Err(Error::Config(
                "need lambda1_max >= lambda1_min > 0 and lambda1_points > 0".into(),
            ));
        }
        if self.lambda1_points == 1 {
            return Ok(vec![self.lambda1_max]);
        }
        let (hi, lo) = (self.lambda1_max.ln(), self.lambda1_min.ln());
        let last = (self.lambda1_points - 1) as f64;
        Ok((0..self.lambda1_points)
            .map(|i| (hi + (lo - hi) * i as f64 / last).exp())
            .collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() || self.sizes.is_empty() {
            return Err(Error::Config("models and sizes must be nonempty".into()));
        }
        if self.replicates < 2 {
            return Err(Error::Config(
                "at least 2 replicates are needed for summary statistics".into(),
            ));
        }
        if self.sizes.contains(&0) || self.sizes.contains(&1) {
            return Err(Error::Config("every sample size must be at least 2".into()));
        }
        if self.lambda2_grid.is_empty() || self.tune_lambda1_grid.is_empty() {
            return Err(Error::Config("penalty grids must be nonempty".into()));
        }
        self.sweep_grid().map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.seed(), DEFAULT_SEED);
        assert_eq!(c.experiment.sizes, vec![25, 50, 100]);
    }

    #[test]
    fn sections_parse() {
        let c = RunConfig::parse(
            r#"
            seed = 7
            [cluster]
            atlas = "a.siva"
            mode = "roi-average"
            [[cluster.subjects]]
            path = "s1.sivc"
            cohort = "f"
            [fit]
            model = "fgl"
            lambda2 = 0.5
            [experiment]
            kind = "cross-validation"
            sizes = [100, 250]
            [experiment.spec]
            p = 10
            "#,
        )
        .unwrap();
        assert_eq!(c.seed(), 7);
        assert_eq!(c.cluster.mode, ClusterMode::RoiAverage);
        assert_eq!(c.cluster.subjects[0].subject_id(), "s1");
        assert_eq!(c.fit.model, ModelName::Fgl);
        assert_eq!(c.experiment.kind, ExperimentKind::CrossValidation);
        assert_eq!(c.experiment.spec.p, 10);
        assert_eq!(c.experiment.spec.groups, 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("sed = 1").is_err());
        assert!(RunConfig::parse("[fit]\nlambda = 1.0").is_err());
        assert!(RunConfig::parse("[experiment.spec]\nq = 1").is_err());
    }

    #[test]
    fn log_grid_endpoints() {
        let g = ExperimentConfig::default().sweep_grid().unwrap();
        assert_eq!(g.len(), 25);
        assert!((g[0] - 1.0).abs() < 1e-12 && (g[24] - 0.005).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
    }
}
