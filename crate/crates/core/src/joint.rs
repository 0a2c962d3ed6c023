//! Joint graphical lasso over `G` cohorts with the fused (FGL) or group (GGL)
//! penalty.
//!
//! Maximizes `sum_g n_g [log det Phi_g - tr(S_g Phi_g)] - P({Phi})` where
//!
//! * FGL: `P = lambda1 sum_g sum_{i!=j} |Phi_g,ij| + lambda2 sum_{g<g'} sum_{i!=j} |Phi_g,ij - Phi_g',ij|`
//! * GGL: `P = lambda1 sum_g sum_{i!=j} |Phi_g,ij| + lambda2 sum_{i!=j} sqrt(sum_g Phi_g,ij^2)`
//!
//! Diagonals are never penalized except for the optional FGL diagonal fusion.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::admm::{self, AdmmOptions, AdmmState, Start, ZPenalty};
use crate::covariance::{CohortCovariance, LambdaRecord, PrecisionEstimate};
use crate::error::{Error, Result};
use crate::linalg::{inverse_spd, log_det_spd, trace_product};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Penalty {
    Fused,
    Group,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointConfig {
    pub penalty: Penalty,
    pub lambda1: f64,
    pub lambda2: f64,
    /// Initial ADMM step.
    pub rho: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Replace every `n_g` by 1 in the likelihood weights.
    pub normalize_n: bool,
    /// Also fuse diagonal entries under FGL.
    pub fuse_diagonal: bool,
    pub adaptive_rho: bool,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            penalty: Penalty::Fused,
            lambda1: 0.1,
            lambda2: 0.1,
            rho: 1.0,
            tol: 1e-6,
            max_iter: 1000,
            normalize_n: false,
            fuse_diagonal: false,
            adaptive_rho: true,
        }
    }
}

impl JointConfig {
    pub fn new(penalty: Penalty, lambda1: f64, lambda2: f64) -> Self {
        Self {
            penalty,
            lambda1,
            lambda2,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let ok_lambda = |l: f64| l.is_finite() && l >= 0.0;
        if !ok_lambda(self.lambda1) || !ok_lambda(self.lambda2) {
            return Err(Error::InvalidArgument(format!(
                "penalties must be non-negative, got ({}, {})",
                self.lambda1, self.lambda2
            )));
        }
        if !(self.rho > 0.0) || !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidArgument(
                "rho, tol and max_iter must be positive".into(),
            ));
        }
        Ok(())
    }

    fn z_penalty(&self) -> ZPenalty {
        match self.penalty {
            Penalty::Fused => ZPenalty::Fused {
                lambda1: self.lambda1,
                lambda2: self.lambda2,
                fuse_diagonal: self.fuse_diagonal,
            },
            Penalty::Group => ZPenalty::Group {
                lambda1: self.lambda1,
                lambda2: self.lambda2,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointEstimate {
    pub estimates: Vec<PrecisionEstimate>,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

impl JointEstimate {
    pub fn precisions(&self) -> Vec<&DMatrix<f64>> {
        self.estimates.iter().map(|e| &e.phi).collect()
    }
}

pub(crate) fn likelihood_weights(covs: &[CohortCovariance], normalize_n: bool) -> Vec<f64> {
    covs.iter()
        .map(|c| if normalize_n { 1.0 } else { c.n as f64 })
        .collect()
}

fn check_inputs(covs: &[CohortCovariance], penalty: Penalty) -> Result<()> {
    let first = covs.first().ok_or(Error::EmptyInput)?;
    let p = first.dim();
    if let Some(bad) = covs.iter().find(|c| c.dim() != p) {
        return Err(Error::ShapeMismatch(format!(
            "cohort {} has {} nodes, expected {p}",
            bad.cohort_id,
            bad.dim()
        )));
    }
    if let Some(bad) = covs.iter().find(|c| c.n < 2) {
        return Err(Error::TooFewSubjects(bad.n));
    }
    if penalty == Penalty::Fused && covs.len() > 2 {
        return Err(Error::UnsupportedGroupCount(covs.len()));
    }
    Ok(())
}

pub fn joint_fit(covs: &[CohortCovariance], cfg: &JointConfig) -> Result<JointEstimate> {
    joint_fit_from(covs, cfg, Start::Diagonal).map(|(est, _)| est)
}

/// Fit from an explicit starting iterate; returns the final ADMM state for warm starts.
pub fn joint_fit_from(
    covs: &[CohortCovariance],
    cfg: &JointConfig,
    start: Start<'_>,
) -> Result<(JointEstimate, AdmmState)> {
    cfg.validate()?;
    check_inputs(covs, cfg.penalty)?;
    let s: Vec<&DMatrix<f64>> = covs.iter().map(|c| &c.s).collect();
    let weights = likelihood_weights(covs, cfg.normalize_n);
    let opts = AdmmOptions {
        rho: cfg.rho,
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        adaptive: cfg.adaptive_rho,
    };
    let out = admm::solve(&s, &weights, &cfg.z_penalty(), &opts, start)?;
    let objective = eval_joint_objective(covs, &out.z, cfg)
        .map_err(|_| Error::NumericalFailure("final iterate is not positive definite".into()))?;
    let lambda = LambdaRecord {
        lambda1: cfg.lambda1,
        lambda2: cfg.lambda2,
    };
    let estimates = out
        .z
        .into_iter()
        .zip(covs)
        .map(|(phi, c)| PrecisionEstimate {
            phi,
            cohort_id: c.cohort_id.clone(),
            node_labels: c.node_labels.clone(),
            lambda,
            objective,
        })
        .collect();
    Ok((
        JointEstimate {
            estimates,
            objective,
            iterations: out.iterations,
            primal_residual: out.primal_residual,
            dual_residual: out.dual_residual,
        },
        out.state,
    ))
}

/// `P({Phi})` under the configured penalty.
pub fn joint_penalty(phis: &[DMatrix<f64>], cfg: &JointConfig) -> f64 {
    let p = phis[0].nrows();
    let mut total = 0.0;
    for i in 0..p {
        for j in 0..p {
            if i != j {
                total += cfg.lambda1 * phis.iter().map(|m| m[(i, j)].abs()).sum::<f64>();
            }
            match cfg.penalty {
                Penalty::Fused if i != j || cfg.fuse_diagonal => {
                    for a in 0..phis.len() {
                        for b in (a + 1)..phis.len() {
                            total += cfg.lambda2 * (phis[a][(i, j)] - phis[b][(i, j)]).abs();
                        }
                    }
                }
                Penalty::Group if i != j => {
                    total += cfg.lambda2
                        * libm::sqrt(phis.iter().map(|m| m[(i, j)] * m[(i, j)]).sum::<f64>());
                }
                _ => {}
            }
        }
    }
    total
}

/// `sum_g n_g [log det Phi_g - tr(S_g Phi_g)] - P({Phi})`.
pub fn eval_joint_objective(
    covs: &[CohortCovariance],
    phis: &[DMatrix<f64>],
    cfg: &JointConfig,
) -> Result<f64> {
    if covs.len() != phis.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} covariances for {} estimates",
            covs.len(),
            phis.len()
        )));
    }
    let weights = likelihood_weights(covs, cfg.normalize_n);
    let mut total = 0.0;
    for ((c, phi), w) in covs.iter().zip(phis).zip(weights) {
        if phi.shape() != c.s.shape() {
            return Err(Error::ShapeMismatch(
                "estimate and covariance differ in size".into(),
            ));
        }
        let ld = log_det_spd(phi).ok_or(Error::NotPositiveDefinite)?;
        total += w * (ld - trace_product(&c.s, phi));
    }
    Ok(total - joint_penalty(phis, cfg))
}

/// Proximal-gradient fixed-point residual `max |Phi - prox_{tP}(Phi - t grad)| / t`.
///
/// Zero exactly at the optimum; measured in gradient units with
/// `t = 1 / max_g w_g`.
pub fn joint_kkt_residual(
    covs: &[CohortCovariance],
    phis: &[DMatrix<f64>],
    cfg: &JointConfig,
) -> Result<f64> {
    let weights = likelihood_weights(covs, cfg.normalize_n);
    fixed_point_residual(covs, phis, &weights, &cfg.z_penalty())
}

pub(crate) fn fixed_point_residual(
    covs: &[CohortCovariance],
    phis: &[DMatrix<f64>],
    weights: &[f64],
    penalty: &ZPenalty,
) -> Result<f64> {
    let t = 1.0 / weights.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut stepped = Vec::with_capacity(phis.len());
    for ((c, phi), &w) in covs.iter().zip(phis).zip(weights) {
        let inv = inverse_spd(phi).ok_or(Error::NotPositiveDefinite)?;
        // gradient of the smooth part w [tr(S Phi) - log det Phi]
        let grad = (&c.s - inv) * w;
        stepped.push(phi - grad * t);
    }
    let mut prox = stepped.clone();
    admm::apply_prox(&stepped, &mut prox, penalty, 1.0 / t)?;
    let mut worst = 0.0f64;
    for (z, phi) in prox.iter().zip(phis) {
        worst = worst.max(crate::linalg::max_abs_diff(z, phi) / t);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn cov(s: DMatrix<f64>, n: usize) -> CohortCovariance {
        CohortCovariance::unlabeled(s, n).unwrap()
    }

    #[test]
    fn identity_objective_plug_in() {
        let p = 4;
        let covs = vec![
            cov(DMatrix::identity(p, p), 10),
            cov(DMatrix::identity(p, p), 30),
        ];
        let phis = vec![DMatrix::identity(p, p); 2];
        let cfg = JointConfig::new(Penalty::Group, 0.0, 0.0);
        let obj = eval_joint_objective(&covs, &phis, &cfg).unwrap();
        assert!((obj - (-(p as f64) * 40.0)).abs() < 1e-12);
    }

    #[test]
    fn equal_estimates_have_no_fusion_cost() {
        let phi = DMatrix::from_row_slice(2, 2, &[2.0, -0.5, -0.5, 1.0]);
        let cfg = JointConfig::new(Penalty::Fused, 0.0, 5.0);
        assert_eq!(joint_penalty(&[phi.clone(), phi.clone()], &cfg), 0.0);
        let cfg = JointConfig::new(Penalty::Fused, 1.0, 5.0);
        assert_eq!(joint_penalty(&[phi.clone(), phi], &cfg), 2.0);
    }

    #[test]
    fn fused_rejects_three_cohorts() {
        let covs = vec![cov(DMatrix::identity(2, 2), 5); 3];
        let cfg = JointConfig::new(Penalty::Fused, 0.1, 0.1);
        assert_eq!(
            joint_fit(&covs, &cfg).unwrap_err(),
            Error::UnsupportedGroupCount(3)
        );
        let cfg = JointConfig::new(Penalty::Group, 0.1, 0.1);
        assert!(joint_fit(&covs, &cfg).is_ok());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let covs = vec![
            cov(DMatrix::identity(2, 2), 5),
            cov(DMatrix::identity(3, 3), 5),
        ];
        let cfg = JointConfig::new(Penalty::Group, 0.1, 0.1);
        assert!(matches!(
            joint_fit(&covs, &cfg),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn non_spd_estimate_is_rejected() {
        let covs = vec![cov(DMatrix::identity(2, 2), 5)];
        let bad = vec![DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])];
        let cfg = JointConfig::new(Penalty::Group, 0.1, 0.1);
        assert_eq!(
            eval_joint_objective(&covs, &bad, &cfg),
            Err(Error::NotPositiveDefinite)
        );
    }

    #[test]
    fn swapping_cohorts_swaps_estimates() {
        let s1 = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, 0.1, 0.4, 1.2, -0.3, 0.1, -0.3, 0.9]);
        let s2 = DMatrix::from_row_slice(3, 3, &[1.1, 0.2, 0.0, 0.2, 0.8, -0.4, 0.0, -0.4, 1.0]);
        for penalty in [Penalty::Fused, Penalty::Group] {
            let cfg = JointConfig {
                normalize_n: true,
                ..JointConfig::new(penalty, 0.05, 0.1)
            };
            let ab = joint_fit(&[cov(s1.clone(), 20), cov(s2.clone(), 20)], &cfg).unwrap();
            let ba = joint_fit(&[cov(s2.clone(), 20), cov(s1.clone(), 20)], &cfg).unwrap();
            assert!(crate::linalg::max_abs_diff(&ab.estimates[0].phi, &ba.estimates[1].phi) < 1e-9);
            assert!(crate::linalg::max_abs_diff(&ab.estimates[1].phi, &ba.estimates[0].phi) < 1e-9);
        }
    }
}
