//! Sparse inverse covariance estimation for group functional connectivity.
//!
//! The crate is `no_std` and only needs an allocator. It covers the whole
//! numerical pipeline:
//!
//! * [`volume`]: count rasters, atlas labels and per-region voxel extraction.
//! * [`mixture`]: count-weighted Gaussian mixtures (weighted kmeans++ seeding,
//!   EM, BIC over K) and per-subject cluster averages.
//! * [`covariance`]: centering, empirical covariance and partial correlations.
//! * [`glasso`] and [`joint`]: the graphical lasso and the fused / group joint
//!   graphical lasso, all solved by one ADMM engine.
//! * [`gold`]: synthetic sparse SPD reference networks and Gaussian sampling.
//! * [`eval`]: edge confusion, SSE, L1 distance, ROC sweeps, regularization
//!   search and resampling.
//!
//! File formats, experiment orchestration and the command line live in the
//! `sivc` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod admm;
pub mod covariance;
pub mod error;
pub mod eval;
pub mod glasso;
pub mod gold;
pub mod joint;
pub mod linalg;
pub mod mixture;
pub mod prox;
pub mod rng;
pub mod volume;

pub use admm::{AdmmState, Start};
pub use covariance::{
    empirical_covariance, mean_center, partial_correlations, CohortCovariance, Normalization,
    PrecisionEstimate, SubjectMatrix,
};
pub use error::{Error, Result};
pub use glasso::{glasso_fit, GlassoConfig};
pub use gold::{generate_gold, sample_cohort, GoldStandard, Provenance, SyntheticSpec};
pub use joint::{joint_fit, JointConfig, JointEstimate, Penalty};
pub use nalgebra::DMatrix;
pub use volume::{extract_regions, AtlasVolume, LabeledVolume, RegionData};
