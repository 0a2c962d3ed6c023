//! Functional clusters inside atlas regions.
//!
//! Every region is fitted with count-weighted Gaussian mixtures for a range
//! of K; the lowest-BIC fit defines that region's network nodes. Node values
//! per subject are responsibility-weighted count averages.

mod averages;
mod em;
mod kmeans;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, Vector3};

pub use averages::{
    cluster_averages, node_label, responsibility_weighted_means, roi_averages, roi_label,
};
pub use em::{fit_mixture, fit_mixture_traced, EmConfig};
pub use kmeans::{distinct_positive, weighted_kmeans, weighted_kmeanspp_init, Point};

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::volume::PooledRegion;
use em::Component;

/// Spatial dimension of voxel coordinates.
pub const DIM: usize = 3;

/// Free parameters of a `k`-component, `d`-dimensional full-covariance mixture,
/// counting all `k` mixing weights: `k * d/2 * (d+3) + k`.
pub const fn parameter_count(k: usize, d: usize) -> usize {
    k * d * (d + 3) / 2 + k
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    pub region_id: u32,
    pub k: usize,
    pub weights: Vec<f64>,
    pub means: Vec<[f64; 3]>,
    pub covariances: Vec<[[f64; 3]; 3]>,
    pub log_likelihood: f64,
    pub bic: f64,
}

impl MixtureModel {
    fn from_components(region_id: u32, comps: &[Component], log_likelihood: f64) -> Self {
        Self {
            region_id,
            k: comps.len(),
            weights: comps.iter().map(|c| c.weight).collect(),
            means: comps
                .iter()
                .map(|c| [c.mean[0], c.mean[1], c.mean[2]])
                .collect(),
            covariances: comps
                .iter()
                .map(|c| core::array::from_fn(|i| core::array::from_fn(|j| c.cov[(i, j)])))
                .collect(),
            log_likelihood,
            bic: f64::NAN,
        }
    }

    pub(crate) fn components(&self) -> Result<Vec<Component>> {
        (0..self.k)
            .map(|j| {
                let c = &self.covariances[j];
                Component::new(
                    self.weights[j],
                    Vector3::from(self.means[j]),
                    nalgebra::Matrix3::from_fn(|r, s| c[r][s]),
                )
            })
            .collect()
    }

    /// Descending weight, ties by lexicographic mean.
    fn sort_components(&mut self) {
        let mut order: Vec<usize> = (0..self.k).collect();
        order.sort_by(|&a, &b| {
            self.weights[b]
                .partial_cmp(&self.weights[a])
                .unwrap_or(core::cmp::Ordering::Equal)
                .then_with(|| {
                    self.means[a]
                        .partial_cmp(&self.means[b])
                        .unwrap_or(core::cmp::Ordering::Equal)
                })
        });
        self.weights = order.iter().map(|&j| self.weights[j]).collect();
        self.means = order.iter().map(|&j| self.means[j]).collect();
        self.covariances = order.iter().map(|&j| self.covariances[j]).collect();
    }

    /// Soft memberships: voxels x K, rows sum to 1.
    pub fn responsibilities(&self, coords: &[Point]) -> Result<DMatrix<f64>> {
        let comps = self.components()?;
        let mut out = DMatrix::zeros(coords.len(), self.k);
        let mut row = alloc::vec![0.0; self.k];
        for (i, x) in coords.iter().enumerate() {
            em::responsibilities_at(&comps, x, &mut row);
            for j in 0..self.k {
                out[(i, j)] = row[j];
            }
        }
        Ok(out)
    }
}

/// `-2 ln L + rho ln(total_counts)` with `rho = parameter_count(K, 3)`.
pub fn bic_score(model: &MixtureModel, total_counts: f64) -> f64 {
    -2.0 * model.log_likelihood + parameter_count(model.k, DIM) as f64 * libm::log(total_counts)
}

/// Outcome of the K sweep for one region.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSelection {
    pub model: MixtureModel,
    /// Best-of-restarts BIC per evaluated K, ascending K.
    pub bic_by_k: Vec<(usize, f64)>,
    /// K values skipped because the region has too few voxels with counts.
    pub skipped: Vec<usize>,
}

/// Fit every K in `k_range` (best of `restarts` by likelihood) and keep the
/// lowest BIC; ties go to the smaller K.
pub fn select_model(
    region: &PooledRegion,
    k_range: &[usize],
    restarts: usize,
    seed: u64,
    cfg: &EmConfig,
) -> Result<ModelSelection> {
    let mut ks: Vec<usize> = k_range.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() || ks[0] == 0 {
        return Err(Error::InvalidArgument(
            "K range must be nonempty and positive".into(),
        ));
    }
    let available = distinct_positive(&region.coords, &region.counts);
    if available == 0 {
        return Err(Error::EmptyRegion(region.region_id));
    }
    let mut best: Option<MixtureModel> = None;
    let mut bic_by_k = Vec::new();
    let mut skipped = Vec::new();
    for &k in &ks {
        if k > available {
            log::warn!(
                "region {}: skipping K={k}, only {available} voxels carry counts",
                region.region_id
            );
            skipped.push(k);
            continue;
        }
        let mut best_k: Option<MixtureModel> = None;
        let mut last_err = None;
        for r in 0..restarts.max(1) {
            let s = derive_seed(seed, &[u64::from(region.region_id), k as u64, r as u64]);
            match fit_mixture(region, k, s, cfg) {
                Ok(m) => {
                    if best_k
                        .as_ref()
                        .is_none_or(|b| m.log_likelihood > b.log_likelihood)
                    {
                        best_k = Some(m);
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
        let m = match (best_k, last_err) {
            (Some(m), _) => m,
            (None, Some(e)) => return Err(e),
            (None, None) => unreachable!("at least one restart runs"),
        };
        bic_by_k.push((k, m.bic));
        if best.as_ref().is_none_or(|b| m.bic < b.bic) {
            best = Some(m);
        }
    }
    let model = best.ok_or(Error::TooManyClusters {
        requested: ks[0],
        available,
    })?;
    Ok(ModelSelection {
        model,
        bic_by_k,
        skipped,
    })
}

/// Selected mixtures of every region and the induced node order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub mixtures: BTreeMap<u32, MixtureModel>,
    /// `(region_id, component)` in ascending region, then component order.
    pub node_labels: Vec<(u32, usize)>,
}

impl ClusterModel {
    pub fn new(mixtures: BTreeMap<u32, MixtureModel>) -> Self {
        let node_labels = mixtures
            .iter()
            .flat_map(|(&r, m)| (0..m.k).map(move |k| (r, k)))
            .collect();
        Self {
            mixtures,
            node_labels,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.node_labels.len()
    }

    pub fn node_names(&self) -> Vec<String> {
        self.node_labels
            .iter()
            .map(|&(r, k)| node_label(r, k))
            .collect()
    }

    pub fn get(&self, region_id: u32) -> Result<&MixtureModel> {
        self.mixtures
            .get(&region_id)
            .ok_or(Error::ModelMismatch(region_id))
    }
}

impl core::fmt::Display for ClusterModel {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let ks: Vec<String> = self
            .mixtures
            .iter()
            .map(|(r, m)| format!("{r}:{}", m.k))
            .collect();
        write!(
            f,
            "{} regions, {} nodes [{}]",
            self.mixtures.len(),
            self.n_nodes(),
            ks.join(" ")
        )
    }
}
