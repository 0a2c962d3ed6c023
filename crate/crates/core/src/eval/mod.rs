//! Recovery metrics, penalty paths and tuning of the three estimators.

mod metrics;
mod resample;
mod roc;
mod select;

use alloc::vec::Vec;

use nalgebra::DMatrix;

pub use metrics::{edge_confusion, l1_distance, sse, EdgeConfusion};
pub use resample::{disjoint_split, stratified_subsets, SubsetPlan};
pub use roc::{auc, roc_sweep, RocPoint, RocSweep, SweepFailure};
pub use select::{
    bic_select_regularization, grid_search_lambda2, information_criterion, Criterion, GridCell,
    GridChoice,
};

use crate::admm::{AdmmState, Start};
use crate::covariance::CohortCovariance;
use crate::error::{Error, Result};
use crate::glasso::{glasso_fit_from, GlassoConfig};
use crate::joint::{joint_fit_from, JointConfig, Penalty};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Model {
    /// Separate graphical lasso per cohort.
    Gl,
    Fgl,
    Ggl,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Gl, Model::Fgl, Model::Ggl];

    pub fn name(self) -> &'static str {
        match self {
            Model::Gl => "GL",
            Model::Fgl => "FGL",
            Model::Ggl => "GGL",
        }
    }

    pub fn is_joint(self) -> bool {
        self != Model::Gl
    }
}

impl core::fmt::Display for Model {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gl" | "glasso" => Ok(Model::Gl),
            "fgl" | "fused" => Ok(Model::Fgl),
            "ggl" | "group" => Ok(Model::Ggl),
            _ => Err(Error::InvalidArgument(alloc::format!(
                "unknown model '{s}'"
            ))),
        }
    }
}

/// Solver settings shared by every fit along a path or grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    /// Use unit likelihood weights in the joint models.
    pub normalize_n: bool,
    /// Entries with `|x| <= zero_tol` are not edges.
    pub zero_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 2000,
            rho: 1.0,
            normalize_n: true,
            zero_tol: 1e-8,
        }
    }
}

/// Warm-start iterates: one per cohort for GL, a single joint one otherwise.
pub type PathState = Vec<AdmmState>;

/// Fit `model` at `(lambda1, lambda2)`; `lambda2` is ignored for GL.
pub fn fit_model(
    covs: &[CohortCovariance],
    model: Model,
    lambda1: f64,
    lambda2: f64,
    opts: &FitOptions,
    warm: Option<&PathState>,
) -> Result<(Vec<DMatrix<f64>>, PathState)> {
    match model {
        Model::Gl => {
            let cfg = GlassoConfig {
                lambda: lambda1,
                tol: opts.tol,
                max_iter: opts.max_iter,
                rho: opts.rho,
                ..GlassoConfig::default()
            };
            let mut phis = Vec::with_capacity(covs.len());
            let mut states = Vec::with_capacity(covs.len());
            for (g, cov) in covs.iter().enumerate() {
                let start = match warm.and_then(|w| w.get(g)) {
                    Some(s) => Start::Warm(s),
                    None => Start::Diagonal,
                };
                let (est, state) = glasso_fit_from(cov, &cfg, start)?;
                phis.push(est.phi);
                states.push(state);
            }
            Ok((phis, states))
        }
        Model::Fgl | Model::Ggl => {
            let penalty = if model == Model::Fgl {
                Penalty::Fused
            } else {
                Penalty::Group
            };
            let cfg = JointConfig {
                tol: opts.tol,
                max_iter: opts.max_iter,
                rho: opts.rho,
                normalize_n: opts.normalize_n,
                ..JointConfig::new(penalty, lambda1, lambda2)
            };
            let start = match warm.and_then(|w| w.first()) {
                Some(s) => Start::Warm(s),
                None => Start::Diagonal,
            };
            let (est, state) = joint_fit_from(covs, &cfg, start)?;
            Ok((
                est.estimates.into_iter().map(|e| e.phi).collect(),
                alloc::vec![state],
            ))
        }
    }
}

/// Grid values sorted descending with duplicates and non-finite values removed.
pub(crate) fn descending(grid: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = grid.iter().copied().filter(|x| x.is_finite()).collect();
    g.sort_by(|a, b| b.partial_cmp(a).expect("finite"));
    g.dedup();
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_names_round_trip() {
        for m in Model::ALL {
            assert_eq!(m.name().parse::<Model>().unwrap(), m);
        }
        assert!("xyz".parse::<Model>().is_err());
    }

    #[test]
    fn grid_is_sorted_descending() {
        assert_eq!(
            descending(&[0.1, 0.5, f64::NAN, 0.5, 0.3]),
            alloc::vec![0.5, 0.3, 0.1]
        );
    }
}
