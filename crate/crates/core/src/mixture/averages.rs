use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::kmeans::Point;
use super::ClusterModel;
use crate::covariance::SubjectMatrix;
use crate::error::{Error, Result};
use crate::volume::RegionData;

pub fn node_label(region_id: u32, component: usize) -> String {
    format!("r{region_id}_k{component}")
}

pub fn roi_label(region_id: u32) -> String {
    format!("r{region_id}")
}

/// `value[s, k] = sum_i gamma_ik I_s(x_i) / sum_i gamma_ik`; 0 when a component has no mass.
///
/// `gamma` is voxels x K, `counts` is subjects x voxels.
pub fn responsibility_weighted_means(
    gamma: &DMatrix<f64>,
    counts: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if gamma.nrows() != counts.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "{} responsibility rows for {} voxels",
            gamma.nrows(),
            counts.ncols()
        )));
    }
    let mut out = counts * gamma;
    for (k, mass) in gamma.column_iter().map(|c| c.sum()).enumerate() {
        let mut col = out.column_mut(k);
        if mass > 0.0 {
            col /= mass;
        } else {
            col.fill(0.0);
        }
    }
    Ok(out)
}

fn check_subjects(regions: &[RegionData], subject_ids: &[String]) -> Result<()> {
    if regions.is_empty() {
        return Err(Error::NoRegions);
    }
    if let Some(r) = regions.iter().find(|r| r.n_subjects() != subject_ids.len()) {
        return Err(Error::ShapeMismatch(format!(
            "region {} has {} subjects, {} ids given",
            r.region_id,
            r.n_subjects(),
            subject_ids.len()
        )));
    }
    Ok(())
}

/// Per-subject node values from the pooled model's responsibilities.
pub fn cluster_averages(
    model: &ClusterModel,
    regions: &[RegionData],
    subject_ids: &[String],
    cohort_id: &str,
) -> Result<SubjectMatrix> {
    check_subjects(regions, subject_ids)?;
    if let Some(r) = regions
        .iter()
        .find(|r| !model.mixtures.contains_key(&r.region_id))
    {
        return Err(Error::ModelMismatch(r.region_id));
    }
    let n = subject_ids.len();
    let mut blocks = Vec::with_capacity(model.mixtures.len());
    for (&rid, mixture) in &model.mixtures {
        let region = regions
            .iter()
            .find(|r| r.region_id == rid)
            .ok_or(Error::ModelMismatch(rid))?;
        let coords: Vec<Point> = region.coords.iter().map(|c| c.map(f64::from)).collect();
        let gamma = mixture.responsibilities(&coords)?;
        blocks.push(responsibility_weighted_means(
            &gamma,
            &region.per_subject_counts,
        )?);
    }
    let values = DMatrix::from_fn(n, model.n_nodes(), |s, c| {
        let (rid, k) = model.node_labels[c];
        let b = model
            .mixtures
            .keys()
            .position(|&r| r == rid)
            .expect("node region exists");
        blocks[b][(s, k)]
    });
    SubjectMatrix::new(cohort_id, subject_ids.to_vec(), model.node_names(), values)
}

/// One node per region: the unweighted mean count over its voxels.
pub fn roi_averages(
    regions: &[RegionData],
    subject_ids: &[String],
    cohort_id: &str,
) -> Result<SubjectMatrix> {
    check_subjects(regions, subject_ids)?;
    let values = DMatrix::from_fn(subject_ids.len(), regions.len(), |s, r| {
        let row = regions[r].per_subject_counts.row(s);
        row.sum() / row.len() as f64
    });
    SubjectMatrix::new(
        cohort_id,
        subject_ids.to_vec(),
        regions.iter().map(|r| roi_label(r.region_id)).collect(),
        values,
    )
}
