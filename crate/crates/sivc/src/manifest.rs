//! JSON artifacts: cluster models, run manifests, gold-standard and joint-fit metadata.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sivc_core::gold::{GoldStandard, Provenance, SyntheticSpec};
use sivc_core::joint::JointEstimate;
use sivc_core::mixture::{ClusterModel, MixtureModel};

use crate::error::{Error, Result, ResultExt};

pub const TOOL: &str = "sivc";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureRecord {
    #[serde(rename = "K")]
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<[f64; 3]>,
    /// Row-major 3x3 per component.
    pub covariances: Vec<[f64; 9]>,
    pub log_likelihood: f64,
    pub bic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterModelFile {
    pub regions: BTreeMap<u32, MixtureRecord>,
}

impl From<&ClusterModel> for ClusterModelFile {
    fn from(model: &ClusterModel) -> Self {
        let regions = model
            .mixtures
            .iter()
            .map(|(&r, m)| {
                let rec = MixtureRecord {
                    k: m.k,
                    weights: m.weights.clone(),
                    means: m.means.clone(),
                    covariances: m
                        .covariances
                        .iter()
                        .map(|c| std::array::from_fn(|i| c[i / 3][i % 3]))
                        .collect(),
                    log_likelihood: m.log_likelihood,
                    bic: m.bic,
                };
                (r, rec)
            })
            .collect();
        Self { regions }
    }
}

impl ClusterModelFile {
    pub fn to_model(&self) -> Result<ClusterModel> {
        let mut mixtures = BTreeMap::new();
        for (&region_id, rec) in &self.regions {
            if rec.weights.len() != rec.k
                || rec.means.len() != rec.k
                || rec.covariances.len() != rec.k
            {
                return Err(Error::Config(format!(
                    "region {region_id}: component arrays disagree with K"
                )));
            }
            mixtures.insert(
                region_id,
                MixtureModel {
                    region_id,
                    k: rec.k,
                    weights: rec.weights.clone(),
                    means: rec.means.clone(),
                    covariances: rec
                        .covariances
                        .iter()
                        .map(|c| std::array::from_fn(|i| std::array::from_fn(|j| c[3 * i + j])))
                        .collect(),
                    log_likelihood: rec.log_likelihood,
                    bic: rec.bic,
                },
            );
        }
        Ok(ClusterModel::new(mixtures))
    }
}

/// Written into every output directory. Contains nothing time- or host-dependent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub artifacts: Vec<String>,
    pub details: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            command: command.into(),
            config_hash: config_hash(config)?,
            seeds: BTreeMap::new(),
            artifacts: Vec::new(),
            details: serde_json::Value::Null,
        })
    }
}

/// SHA-256 of the canonical JSON form of an effective configuration.
pub fn config_hash(config: &impl Serialize) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecRecord {
    pub p: usize,
    pub groups: usize,
    pub edge_density: f64,
    pub shared_fraction: f64,
    pub weight_range: (f64, f64),
    pub seed: u64,
}

impl From<SyntheticSpec> for SpecRecord {
    fn from(s: SyntheticSpec) -> Self {
        Self {
            p: s.p,
            groups: s.groups,
            edge_density: s.edge_density,
            shared_fraction: s.shared_fraction,
            weight_range: s.weight_range,
            seed: s.seed,
        }
    }
}

impl From<SpecRecord> for SyntheticSpec {
    fn from(s: SpecRecord) -> Self {
        Self {
            p: s.p,
            groups: s.groups,
            edge_density: s.edge_density,
            shared_fraction: s.shared_fraction,
            weight_range: s.weight_range,
            seed: s.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldManifest {
    pub seed: u64,
    pub spec: Option<SpecRecord>,
    pub shared_fraction: f64,
    pub edge_counts: Vec<usize>,
    pub provenance: String,
    /// Matrix files relative to the manifest, one per cohort.
    pub matrices: Vec<String>,
}

impl GoldManifest {
    pub fn new(gold: &GoldStandard, matrices: Vec<String>) -> Self {
        Self {
            seed: gold.seed,
            spec: gold.spec.map(SpecRecord::from),
            shared_fraction: gold.shared_fraction,
            edge_counts: gold.edge_counts.clone(),
            provenance: match gold.provenance {
                Provenance::Synthetic => "synthetic",
                Provenance::DerivedFromData => "derived_from_data",
            }
            .into(),
            matrices,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointManifest {
    pub penalty: String,
    pub lambda1: f64,
    pub lambda2: f64,
    pub iterations: usize,
    pub objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

impl JointManifest {
    pub fn new(penalty: &str, est: &JointEstimate) -> Self {
        let lambda = est.estimates.first().map(|e| e.lambda).unwrap_or_default();
        Self {
            penalty: penalty.into(),
            lambda1: lambda.lambda1,
            lambda2: lambda.lambda2,
            iterations: est.iterations,
            objective: est.objective,
            primal_residual: est.primal_residual,
            dual_residual: est.dual_residual,
        }
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).at(path)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).at(path)?;
    serde_json::from_str(&text).at(path)
}

pub fn save_cluster_model(path: &Path, model: &ClusterModel) -> Result<()> {
    write_json(path, &ClusterModelFile::from(model))
}

pub fn load_cluster_model(path: &Path) -> Result<ClusterModel> {
    read_json::<ClusterModelFile>(path)?.to_model().at(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cluster_model_json_round_trip() {
        let m = MixtureModel {
            region_id: 4,
            k: 1,
            weights: vec![1.0],
            means: vec![[1.0, 2.0, 3.0]],
            covariances: vec![[[2.0, 0.5, 0.0], [0.5, 1.0, 0.1], [0.0, 0.1, 3.0]]],
            log_likelihood: -12.5,
            bic: 40.0,
        };
        let model = ClusterModel::new([(4, m)].into_iter().collect());
        let file = ClusterModelFile::from(&model);
        assert_eq!(file.regions[&4].covariances[0][1], 0.5);
        let text = serde_json::to_string(&file).unwrap();
        assert!(text.contains("\"K\":1"));
        let back: ClusterModelFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_model().unwrap(), model);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = config_hash(&serde_json::json!({"x": 1})).unwrap();
        assert_eq!(a, config_hash(&serde_json::json!({"x": 1})).unwrap());
        assert_ne!(a, config_hash(&serde_json::json!({"x": 2})).unwrap());
        assert_eq!(a.len(), 64);
    }
}
