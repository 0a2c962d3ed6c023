use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Last ADMM iterate handed back when a fit runs out of iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct Unconverged {
    pub iterate: Vec<DMatrix<f64>>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("counts must be finite and non-negative (voxel {index}: {value})")]
    InvalidCounts { index: usize, value: f64 },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("volume dimensions {found:?} do not match atlas dimensions {expected:?}")]
    GeometryMismatch {
        expected: [usize; 3],
        found: [usize; 3],
    },
    #[error("no labeled regions remain after exclusion")]
    NoRegions,
    #[error("input is empty")]
    EmptyInput,
    #[error("requested {requested} clusters but only {available} voxels carry counts")]
    TooManyClusters { requested: usize, available: usize },
    #[error("region {0} has no counts")]
    EmptyRegion(u32),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("region {0} is not covered by the cluster model")]
    ModelMismatch(u32),
    #[error("need at least 2 subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error(
        "no convergence after {} iterations (primal {:.3e}, dual {:.3e})",
        .0.iterations, .0.primal_residual, .0.dual_residual
    )]
    NoConvergence(Box<Unconverged>),
    #[error("covariance is singular and lambda is zero")]
    SingularInput,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("fused penalty supports exactly two groups, got {0}")]
    UnsupportedGroupCount(usize),
    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),
    #[error("every grid point failed")]
    GridFailed,
    #[error("cohort has {available} subjects, {requested} requested without replacement")]
    InsufficientData { requested: usize, available: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
