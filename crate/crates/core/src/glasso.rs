//! Single-cohort graphical lasso:
//! `max_{Phi > 0} log det Phi - tr(S Phi) - lambda ||Phi||_1`.
//!
//! Solved by the shared ADMM engine with one group and unit likelihood weight.
//! The L1 norm runs over off-diagonal entries unless `penalize_diagonal` is set.

use alloc::format;
use alloc::vec;

use nalgebra::{DMatrix, DVector};

use crate::admm::{self, AdmmOptions, AdmmState, Start, ZPenalty};
use crate::covariance::{CohortCovariance, LambdaRecord, PrecisionEstimate};
use crate::error::{Error, Result};
use crate::linalg::{inverse_spd, log_det_spd, max_abs_offdiag, trace_product};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlassoConfig {
    pub lambda: f64,
    pub penalize_diagonal: bool,
    pub tol: f64,
    pub max_iter: usize,
    /// Initial ADMM step.
    pub rho: f64,
}

impl Default for GlassoConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            penalize_diagonal: false,
            tol: 1e-6,
            max_iter: 1000,
            rho: 1.0,
        }
    }
}

impl GlassoConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 || !(self.rho > 0.0) {
            return Err(Error::InvalidArgument(
                "tol, max_iter and rho must be positive".into(),
            ));
        }
        Ok(())
    }

    fn z_penalty(&self) -> ZPenalty {
        ZPenalty::L1 {
            lambda: self.lambda,
            diagonal: self.penalize_diagonal,
        }
    }
}

pub fn glasso_fit(cov: &CohortCovariance, cfg: &GlassoConfig) -> Result<PrecisionEstimate> {
    glasso_fit_from(cov, cfg, Start::Diagonal).map(|(est, _)| est)
}

/// Fit from an explicit start; also returns the ADMM state for warm starts.
pub fn glasso_fit_from(
    cov: &CohortCovariance,
    cfg: &GlassoConfig,
    start: Start<'_>,
) -> Result<(PrecisionEstimate, AdmmState)> {
    cfg.validate()?;
    let p = cov.dim();
    let s = &cov.s;
    let diag_shift = if cfg.penalize_diagonal {
        cfg.lambda
    } else {
        0.0
    };

    if cfg.lambda == 0.0 && s.clone().cholesky().is_none() {
        return Err(Error::SingularInput);
    }
    let phi = if cfg.lambda >= max_abs_offdiag(s) {
        // W = diag(S) + shift satisfies every subgradient condition
        if (0..p).any(|i| !(s[(i, i)] + diag_shift > 0.0)) {
            return Err(Error::SingularInput);
        }
        let phi =
            DMatrix::from_diagonal(&DVector::from_fn(p, |i, _| 1.0 / (s[(i, i)] + diag_shift)));
        let state = AdmmState {
            z: vec![phi.clone()],
            u: vec![DMatrix::zeros(p, p)],
            rho: cfg.rho,
        };
        (phi, state)
    } else {
        let opts = AdmmOptions {
            rho: cfg.rho,
            tol: cfg.tol,
            max_iter: cfg.max_iter,
            adaptive: true,
        };
        let mut out = admm::solve(&[s], &[1.0], &cfg.z_penalty(), &opts, start)?;
        (out.z.swap_remove(0), out.state)
    };
    let objective = gl_objective(s, &phi.0, cfg.lambda, cfg.penalize_diagonal)
        .map_err(|_| Error::NumericalFailure("final iterate is not positive definite".into()))?;
    Ok((
        PrecisionEstimate {
            phi: phi.0,
            cohort_id: cov.cohort_id.clone(),
            node_labels: cov.node_labels.clone(),
            lambda: LambdaRecord {
                lambda1: cfg.lambda,
                lambda2: 0.0,
            },
            objective,
        },
        phi.1,
    ))
}

/// `log det Phi - tr(S Phi) - lambda ||Phi||_1`.
pub fn gl_objective(
    s: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    lambda: f64,
    penalize_diagonal: bool,
) -> Result<f64> {
    let ld = log_det_spd(phi).ok_or(Error::NotPositiveDefinite)?;
    let mut l1 = 0.0;
    for i in 0..phi.nrows() {
        for j in 0..phi.ncols() {
            if i != j || penalize_diagonal {
                l1 += phi[(i, j)].abs();
            }
        }
    }
    Ok(ld - trace_product(s, phi) - lambda * l1)
}

/// Largest violation of the subgradient conditions with `W = Phi^-1`:
/// `W_ij - S_ij = lambda sign(Phi_ij)` where `Phi_ij != 0`,
/// `|W_ij - S_ij| <= lambda` where `Phi_ij = 0`, and `W_ii = S_ii` on an
/// unpenalized diagonal.
pub fn gl_kkt_violation(
    s: &DMatrix<f64>,
    phi: &DMatrix<f64>,
    lambda: f64,
    penalize_diagonal: bool,
) -> Result<f64> {
    let w = inverse_spd(phi).ok_or(Error::NotPositiveDefinite)?;
    let mut worst = 0.0f64;
    for i in 0..phi.nrows() {
        for j in 0..phi.ncols() {
            let g = w[(i, j)] - s[(i, j)];
            let v = if i == j && !penalize_diagonal {
                g.abs()
            } else if phi[(i, j)] != 0.0 {
                (g - lambda * phi[(i, j)].signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn cov(data: &[f64], p: usize) -> CohortCovariance {
        CohortCovariance::unlabeled(DMatrix::from_row_slice(p, p, data), 50).unwrap()
    }

    fn fixture() -> CohortCovariance {
        cov(
            &[
                1.0, 0.5, 0.2, -0.1, 0.5, 1.3, 0.3, 0.0, 0.2, 0.3, 0.9, 0.25, -0.1, 0.0, 0.25, 1.1,
            ],
            4,
        )
    }

    #[test]
    fn large_lambda_gives_diagonal_solution() {
        let c = fixture();
        let est = glasso_fit(&c, &GlassoConfig::with_lambda(0.5)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 / c.s[(i, i)] } else { 0.0 };
                assert_eq!(est.phi[(i, j)], expect);
            }
        }
    }

    #[test]
    fn zero_lambda_inverts() {
        let c = fixture();
        let cfg = GlassoConfig {
            tol: 1e-10,
            max_iter: 10_000,
            ..GlassoConfig::with_lambda(0.0)
        };
        let est = glasso_fit(&c, &cfg).unwrap();
        let inv = c.s.clone().try_inverse().unwrap();
        let d = max_abs_diff(&est.phi, &inv);
        assert!(d < 1e-6, "{d}");
    }

    #[test]
    fn singular_input_with_zero_lambda() {
        let c = cov(&[1.0, 1.0, 1.0, 1.0], 2);
        assert_eq!(
            glasso_fit(&c, &GlassoConfig::with_lambda(0.0)),
            Err(Error::SingularInput)
        );
        // any positive penalty makes the problem well posed
        assert!(glasso_fit(&c, &GlassoConfig::with_lambda(0.1)).is_ok());
    }

    #[test]
    fn solution_satisfies_kkt() {
        let c = fixture();
        for &pen in &[false, true] {
            let cfg = GlassoConfig {
                penalize_diagonal: pen,
                ..GlassoConfig::with_lambda(0.1)
            };
            let est = glasso_fit(&c, &cfg).unwrap();
            let v = gl_kkt_violation(&c.s, &est.phi, 0.1, pen).unwrap();
            assert!(v < 1e-4, "violation {v}");
            assert!(crate::linalg::is_spd(&est.phi));
        }
    }

    #[test]
    fn reports_no_convergence() {
        let c = fixture();
        let cfg = GlassoConfig {
            max_iter: 2,
            ..GlassoConfig::with_lambda(0.05)
        };
        match glasso_fit(&c, &cfg) {
            Err(Error::NoConvergence(last)) => {
                assert_eq!(last.iterations, 2);
                assert_eq!(last.iterate.len(), 1);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_config() {
        let c = fixture();
        assert!(glasso_fit(&c, &GlassoConfig::with_lambda(-1.0)).is_err());
        let cfg = GlassoConfig {
            tol: 0.0,
            ..GlassoConfig::default()
        };
        assert!(glasso_fit(&c, &cfg).is_err());
    }
}
