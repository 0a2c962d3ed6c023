//! Count rasters, atlas labels and per-region voxel extraction.
//!
//! Rasters are stored x-fastest: voxel `(x, y, z)` lives at
//! `x + nx * (y + ny * z)`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub type Dims = [usize; 3];
pub type Voxel = [u32; 3];

/// Background label in atlas rasters.
pub const BACKGROUND: u32 = 0;

fn check_dims(dims: Dims) -> Result<usize> {
    if dims.contains(&0) {
        return Err(Error::InvalidGeometry(format!(
            "dims must be positive, got {dims:?}"
        )));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidGeometry(format!("dims {dims:?} overflow")))
}

pub fn voxel_of(dims: Dims, index: usize) -> Voxel {
    let x = index % dims[0];
    let y = (index / dims[0]) % dims[1];
    let z = index / (dims[0] * dims[1]);
    [x as u32, y as u32, z as u32]
}

pub fn index_of(dims: Dims, v: Voxel) -> usize {
    v[0] as usize + dims[0] * (v[1] as usize + dims[1] * v[2] as usize)
}

/// One subject's count raster.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledVolume {
    dims: Dims,
    voxel_size: [f64; 3],
    counts: Vec<f64>,
    pub subject_id: String,
    pub cohort_id: String,
}

impl LabeledVolume {
    pub fn new(
        dims: Dims,
        voxel_size: [f64; 3],
        counts: Vec<f64>,
        subject_id: impl Into<String>,
        cohort_id: impl Into<String>,
    ) -> Result<Self> {
        let len = check_dims(dims)?;
        if voxel_size.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidGeometry(format!(
                "voxel size must be positive, got {voxel_size:?}"
            )));
        }
        if counts.len() != len {
            return Err(Error::InvalidGeometry(format!(
                "raster has {} values, dims need {len}",
                counts.len()
            )));
        }
        if let Some((index, &value)) = counts
            .iter()
            .enumerate()
            .find(|(_, c)| !(c.is_finite() && **c >= 0.0))
        {
            return Err(Error::InvalidCounts { index, value });
        }
        Ok(Self {
            dims,
            voxel_size,
            counts,
            subject_id: subject_id.into(),
            cohort_id: cohort_id.into(),
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn voxel_size(&self) -> [f64; 3] {
        self.voxel_size
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }
}

/// Integer atlas: 0 is background, every other value a region id.
#[derive(Debug, Clone, PartialEq)]
pub struct AtlasVolume {
    dims: Dims,
    labels: Vec<u32>,
}

impl AtlasVolume {
    pub fn new(dims: Dims, labels: Vec<u32>) -> Result<Self> {
        let len = check_dims(dims)?;
        if labels.len() != len {
            return Err(Error::InvalidGeometry(format!(
                "atlas has {} labels, dims need {len}",
                labels.len()
            )));
        }
        Ok(Self { dims, labels })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn region_ids(&self) -> BTreeSet<u32> {
        self.labels
            .iter()
            .copied()
            .filter(|&l| l != BACKGROUND)
            .collect()
    }
}

/// Voxels of one atlas region and the counts every subject has there.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionData {
    pub region_id: u32,
    pub coords: Vec<Voxel>,
    /// subjects x voxels, row order follows the input volume order.
    pub per_subject_counts: DMatrix<f64>,
}

impl RegionData {
    pub fn n_voxels(&self) -> usize {
        self.coords.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.per_subject_counts.nrows()
    }

    /// Sum counts over subjects; this is the input to mixture fitting.
    pub fn pooled(&self) -> PooledRegion {
        let counts = (0..self.n_voxels())
            .map(|v| self.per_subject_counts.column(v).sum())
            .collect();
        PooledRegion {
            region_id: self.region_id,
            coords: self.coords.iter().map(|c| c.map(f64::from)).collect(),
            counts,
        }
    }
}

/// Region coordinates with one aggregate count per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledRegion {
    pub region_id: u32,
    pub coords: Vec<[f64; 3]>,
    pub counts: Vec<f64>,
}

impl PooledRegion {
    pub fn total_counts(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// Pool several regions with the same id and voxel set (e.g. per-cohort extracts).
    pub fn merge(parts: &[RegionData]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyInput)?;
        let mut pooled = first.pooled();
        for part in &parts[1..] {
            if part.region_id != first.region_id || part.coords != first.coords {
                return Err(Error::ShapeMismatch(format!(
                    "region {} voxel sets differ between parts",
                    first.region_id
                )));
            }
            for (acc, add) in pooled.counts.iter_mut().zip(part.pooled().counts) {
                *acc += add;
            }
        }
        Ok(pooled)
    }
}

/// Partition every volume by atlas label.
///
/// Returns one [`RegionData`] per distinct nonzero label not in `exclude`, in
/// ascending region order; voxels within a region are in raster order.
pub fn extract_regions(
    volumes: &[LabeledVolume],
    atlas: &AtlasVolume,
    exclude: &BTreeSet<u32>,
) -> Result<Vec<RegionData>> {
    if volumes.is_empty() {
        return Err(Error::EmptyInput);
    }
    for v in volumes {
        if v.dims != atlas.dims {
            return Err(Error::GeometryMismatch {
                expected: atlas.dims,
                found: v.dims,
            });
        }
    }
    let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (index, &label) in atlas.labels.iter().enumerate() {
        if label != BACKGROUND && !exclude.contains(&label) {
            members.entry(label).or_default().push(index);
        }
    }
    if members.is_empty() {
        return Err(Error::NoRegions);
    }
    Ok(members
        .into_iter()
        .map(|(region_id, indices)| {
            let coords = indices.iter().map(|&i| voxel_of(atlas.dims, i)).collect();
            let per_subject_counts = DMatrix::from_fn(volumes.len(), indices.len(), |s, v| {
                volumes[s].counts[indices[v]]
            });
            RegionData {
                region_id,
                coords,
                per_subject_counts,
            }
        })
        .collect())
}
