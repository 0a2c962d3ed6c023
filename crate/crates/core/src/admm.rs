//! ADMM for `min sum_g w_g [tr(S_g T_g) - log det T_g] + P(Z)` s.t. `T_g = Z_g`.
//!
//! The T-step is solved exactly per group by eigendecomposition, the Z-step
//! applies the penalty's proximal operator entrywise, and the scaled dual `U`
//! accumulates `T - Z`. The graphical lasso is the `G = 1` case.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result, Unconverged};
use crate::prox::{fgl_prox, ggl_prox, soft_threshold};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum ZPenalty {
    L1 {
        lambda: f64,
        diagonal: bool,
    },
    Fused {
        lambda1: f64,
        lambda2: f64,
        fuse_diagonal: bool,
    },
    Group {
        lambda1: f64,
        lambda2: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct AdmmOptions {
    pub rho: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub adaptive: bool,
}

/// Iterate carried between fits along a penalty path.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub z: Vec<DMatrix<f64>>,
    pub u: Vec<DMatrix<f64>>,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum Start<'a> {
    /// `Z = diag(1/S_ii)`, `U = 0`.
    Diagonal,
    /// `Z = I`, `U = 0`.
    Identity,
    Warm(&'a AdmmState),
}

#[derive(Debug, Clone)]
pub(crate) struct AdmmOutcome {
    pub z: Vec<DMatrix<f64>>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub state: AdmmState,
}

const ADAPT_EVERY: usize = 10;
const ADAPT_RATIO: f64 = 10.0;

/// Minimizer of `w [tr(S T) - log det T] + (rho/2) ||T - B||_F^2`.
fn theta_step(s: &DMatrix<f64>, b: &DMatrix<f64>, weight: f64, rho: f64) -> DMatrix<f64> {
    let c = rho / weight;
    let m = s - b * c;
    let eig = m.symmetric_eigen();
    let vals = eig.eigenvalues.map(|d| {
        // positive root of c t^2 + d t - 1 = 0, written to avoid cancellation
        let disc = libm::sqrt(d * d + 4.0 * c);
        if d > 0.0 {
            2.0 / (d + disc)
        } else {
            (disc - d) / (2.0 * c)
        }
    });
    let v = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * vals[j]);
    let t = scaled * v.transpose();
    (&t + t.transpose()) * 0.5
}

pub(crate) fn apply_prox(
    a: &[DMatrix<f64>],
    z: &mut [DMatrix<f64>],
    penalty: &ZPenalty,
    rho: f64,
) -> Result<()> {
    let g = a.len();
    let p = a[0].nrows();
    let mut buf_in = vec![0.0; g];
    let mut buf_out = vec![0.0; g];
    for i in 0..p {
        for j in i..p {
            for k in 0..g {
                buf_in[k] = 0.5 * (a[k][(i, j)] + a[k][(j, i)]);
            }
            let diag = i == j;
            match *penalty {
                ZPenalty::L1 { lambda, diagonal } => {
                    let t = if diag && !diagonal { 0.0 } else { lambda / rho };
                    for k in 0..g {
                        buf_out[k] = soft_threshold(buf_in[k], t);
                    }
                }
                ZPenalty::Fused {
                    lambda1,
                    lambda2,
                    fuse_diagonal,
                } => {
                    if diag {
                        let l2 = if fuse_diagonal { lambda2 } else { 0.0 };
                        fgl_prox(&buf_in, &mut buf_out, 0.0, l2, rho)?;
                    } else {
                        fgl_prox(&buf_in, &mut buf_out, lambda1, lambda2, rho)?;
                    }
                }
                ZPenalty::Group { lambda1, lambda2 } => {
                    if diag {
                        buf_out.copy_from_slice(&buf_in);
                    } else {
                        ggl_prox(&buf_in, &mut buf_out, lambda1, lambda2, rho);
                    }
                }
            }
            for k in 0..g {
                z[k][(i, j)] = buf_out[k];
                z[k][(j, i)] = buf_out[k];
            }
        }
    }
    Ok(())
}

fn frob_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

pub(crate) fn solve(
    s: &[&DMatrix<f64>],
    weights: &[f64],
    penalty: &ZPenalty,
    opts: &AdmmOptions,
    start: Start<'_>,
) -> Result<AdmmOutcome> {
    let g = s.len();
    let p = s[0].nrows();
    let (mut z, mut u, mut rho) = match start {
        Start::Warm(state) if state.z.len() == g && state.z[0].nrows() == p => {
            (state.z.clone(), state.u.clone(), state.rho)
        }
        Start::Identity => (
            vec![DMatrix::identity(p, p); g],
            vec![DMatrix::zeros(p, p); g],
            opts.rho,
        ),
        _ => (
            s.iter()
                .map(|sg| {
                    DMatrix::from_diagonal(&DVector::from_fn(p, |i, _| {
                        let v = sg[(i, i)];
                        if v > 0.0 {
                            1.0 / v
                        } else {
                            1.0
                        }
                    }))
                })
                .collect(),
            vec![DMatrix::zeros(p, p); g],
            opts.rho,
        ),
    };
    let eps = opts.tol * libm::sqrt(g as f64) * p as f64;
    let mut a = vec![DMatrix::zeros(p, p); g];
    let mut theta = vec![DMatrix::zeros(p, p); g];
    let mut z_prev = z.clone();
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;

    for iter in 1..=opts.max_iter {
        for k in 0..g {
            theta[k] = theta_step(s[k], &(&z[k] - &u[k]), weights[k], rho);
            a[k] = &theta[k] + &u[k];
            z_prev[k].copy_from(&z[k]);
        }
        apply_prox(&a, &mut z, penalty, rho)?;
        let mut r2 = 0.0;
        let mut s2 = 0.0;
        for k in 0..g {
            r2 += frob_sq(&(&theta[k] - &z[k]));
            s2 += frob_sq(&(&z[k] - &z_prev[k]));
            u[k] = &a[k] - &z[k];
        }
        primal = libm::sqrt(r2);
        dual = rho * libm::sqrt(s2);
        if !(primal.is_finite() && dual.is_finite()) {
            return Err(Error::NumericalFailure("ADMM residuals diverged".into()));
        }
        if primal < eps && dual < eps {
            return Ok(AdmmOutcome {
                z: z.clone(),
                iterations: iter,
                primal_residual: primal,
                dual_residual: dual,
                state: AdmmState { z, u, rho },
            });
        }
        if opts.adaptive && iter % ADAPT_EVERY == 0 {
            if primal > ADAPT_RATIO * dual {
                rho *= 2.0;
                u.iter_mut().for_each(|m| *m *= 0.5);
            } else if dual > ADAPT_RATIO * primal {
                rho *= 0.5;
                u.iter_mut().for_each(|m| *m *= 2.0);
            }
        }
    }
    Err(Error::NoConvergence(Box::new(Unconverged {
        iterate: z,
        iterations: opts.max_iter,
        primal_residual: primal,
        dual_residual: dual,
    })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_step_solves_stationarity() {
        let s = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, -0.1, 0.3, 1.0, 0.2, -0.1, 0.2, 1.5]);
        let b = DMatrix::from_row_slice(3, 3, &[0.5, 0.1, 0.0, 0.1, 0.8, -0.2, 0.0, -0.2, 0.3]);
        for &(w, rho) in &[(1.0, 1.0), (50.0, 0.5), (1.0, 1e4), (0.1, 1e-3)] {
            let t = theta_step(&s, &b, w, rho);
            let inv = t.clone().cholesky().expect("theta must be SPD").inverse();
            let grad = (&s - &inv) * w + (&t - &b) * rho;
            assert!(
                grad.amax() < 1e-8 * (1.0 + rho + w),
                "w={w} rho={rho}: {}",
                grad.amax()
            );
        }
    }
}
