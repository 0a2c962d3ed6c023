//! Choosing `(lambda1, lambda2)` over a grid.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::metrics::l1_distance;
use super::{descending, fit_model, FitOptions, Model, PathState};
use crate::covariance::CohortCovariance;
use crate::error::{Error, Result};
use crate::linalg::{count_edges, log_det_spd, trace_product};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    /// Penalty `ln(n_g)` per estimated parameter.
    Bic,
    /// Penalty 2 per estimated parameter.
    Aic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub lambda1: f64,
    pub lambda2: f64,
    /// `None` when the fit failed.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridChoice {
    pub lambda1: f64,
    pub lambda2: f64,
    pub score: f64,
    pub cells: Vec<GridCell>,
}

/// `sum_g n_g [tr(S_g Phi_g) - log det Phi_g] + c_g (edges_g + p)`, with
/// `c_g = ln n_g` (BIC) or 2 (AIC).
pub fn information_criterion(
    covs: &[CohortCovariance],
    phis: &[DMatrix<f64>],
    zero_tol: f64,
    criterion: Criterion,
) -> Result<f64> {
    if covs.len() != phis.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} cohorts for {} estimates",
            covs.len(),
            phis.len()
        )));
    }
    let mut total = 0.0;
    for (c, phi) in covs.iter().zip(phis) {
        let n = c.n as f64;
        let ld = log_det_spd(phi).ok_or(Error::NotPositiveDefinite)?;
        let params = (count_edges(phi, zero_tol) + phi.nrows()) as f64;
        let cost = match criterion {
            Criterion::Bic => libm::log(n),
            Criterion::Aic => 2.0,
        };
        total += n * (trace_product(&c.s, phi) - ld) + cost * params;
    }
    Ok(total)
}

/// Later cells win ties only with a larger `lambda1`, then larger `lambda2`.
fn better(score: f64, l1: f64, l2: f64, best: &GridChoice) -> bool {
    score < best.score
        || (score == best.score && (l1 > best.lambda1 || (l1 == best.lambda1 && l2 > best.lambda2)))
}

fn grid_minimize<F>(
    covs: &[CohortCovariance],
    model: Model,
    lambda1_grid: &[f64],
    lambda2_grid: &[f64],
    opts: &FitOptions,
    mut score: F,
) -> Result<GridChoice>
where
    F: FnMut(&[DMatrix<f64>]) -> Result<f64>,
{
    let l1s = descending(lambda1_grid);
    let l2s = if model.is_joint() {
        descending(lambda2_grid)
    } else {
        alloc::vec![0.0]
    };
    if l1s.is_empty() || l2s.is_empty() {
        return Err(Error::InvalidArgument("empty penalty grid".into()));
    }
    let mut best: Option<GridChoice> = None;
    let mut cells = Vec::with_capacity(l1s.len() * l2s.len());
    for &l2 in &l2s {
        let mut warm: Option<PathState> = None;
        for &l1 in &l1s {
            let outcome =
                fit_model(covs, model, l1, l2, opts, warm.as_ref()).and_then(|(phis, state)| {
                    warm = Some(state);
                    score(&phis)
                });
            let value = match outcome {
                Ok(v) if v.is_finite() => Some(v),
                Ok(_) => None,
                Err(e) => {
                    log::warn!("{model} fit failed at ({l1}, {l2}): {e}");
                    None
                }
            };
            cells.push(GridCell {
                lambda1: l1,
                lambda2: l2,
                score: value,
            });
            if let Some(v) = value {
                if best.as_ref().is_none_or(|b| better(v, l1, l2, b)) {
                    best = Some(GridChoice {
                        lambda1: l1,
                        lambda2: l2,
                        score: v,
                        cells: Vec::new(),
                    });
                }
            }
        }
    }
    let mut choice = best.ok_or(Error::GridFailed)?;
    choice.cells = cells;
    Ok(choice)
}

/// Grid point minimizing `sum_g ||Phi_hat_g - Phi_gold_g||_1`.
pub fn grid_search_lambda2(
    covs: &[CohortCovariance],
    gold: &[DMatrix<f64>],
    model: Model,
    lambda1_grid: &[f64],
    lambda2_grid: &[f64],
    opts: &FitOptions,
) -> Result<GridChoice> {
    if covs.len() != gold.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} cohorts for {} gold matrices",
            covs.len(),
            gold.len()
        )));
    }
    grid_minimize(covs, model, lambda1_grid, lambda2_grid, opts, |phis| {
        l1_distance(phis, gold)
    })
}

/// Grid point minimizing the information criterion; ties favor stronger regularization.
pub fn bic_select_regularization(
    covs: &[CohortCovariance],
    model: Model,
    lambda1_grid: &[f64],
    lambda2_grid: &[f64],
    opts: &FitOptions,
    criterion: Criterion,
) -> Result<GridChoice> {
    grid_minimize(covs, model, lambda1_grid, lambda2_grid, opts, |phis| {
        information_criterion(covs, phis, opts.zero_tol, criterion)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn choice(l1: f64, l2: f64, score: f64) -> GridChoice {
        GridChoice {
            lambda1: l1,
            lambda2: l2,
            score,
            cells: Vec::new(),
        }
    }

    #[test]
    fn ties_prefer_stronger_penalties() {
        let b = choice(0.1, 0.1, 1.0);
        assert!(better(1.0, 0.2, 0.0, &b));
        assert!(better(1.0, 0.1, 0.2, &b));
        assert!(!better(1.0, 0.1, 0.05, &b));
        assert!(!better(1.0, 0.05, 0.9, &b));
        assert!(better(0.5, 0.0, 0.0, &b));
    }

    #[test]
    fn criterion_plug_in() {
        let s = DMatrix::identity(2, 2);
        let cov = CohortCovariance::unlabeled(s, 10).unwrap();
        let phi = DMatrix::identity(2, 2);
        // tr(I) - logdet(I) = 2; params = 0 edges + 2 diagonal
        let bic = information_criterion(
            core::slice::from_ref(&cov),
            core::slice::from_ref(&phi),
            1e-8,
            Criterion::Bic,
        )
        .unwrap();
        assert!((bic - (20.0 + 2.0 * 10f64.ln())).abs() < 1e-12);
        let aic = information_criterion(&[cov], &[phi], 1e-8, Criterion::Aic).unwrap();
        assert!((aic - 24.0).abs() < 1e-12);
    }
}
