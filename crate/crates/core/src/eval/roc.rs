//! Penalty paths traced into ROC curves.
//!
//! Rates are normalized per cohort: TPR by gold edges, FPR by gold non-edges.
//! The averaged curve uses the mean rates over cohorts at each `lambda1`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::metrics::{edge_confusion, sse, EdgeConfusion};
use super::{descending, fit_model, FitOptions, Model, PathState};
use crate::covariance::CohortCovariance;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub lambda1: f64,
    pub fpr: f64,
    pub tpr: f64,
    /// Edge counts; means over cohorts on the averaged curve.
    pub tp: f64,
    pub fp: f64,
    pub sse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepFailure {
    pub lambda1: f64,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocSweep {
    pub model: Model,
    pub lambda2: f64,
    /// `[cohort][point]` in descending `lambda1` order.
    pub by_cohort: Vec<Vec<RocPoint>>,
    pub averaged: Vec<RocPoint>,
    pub auc_by_cohort: Vec<f64>,
    pub auc: f64,
    /// Point of the averaged curve with the smallest mean SSE.
    pub sse_optimal: RocPoint,
    pub failures: Vec<SweepFailure>,
    pub warnings: Vec<String>,
}

/// Trapezoid area under `(fpr, tpr)` points closed by `(0, 0)` and `(1, max tpr)`.
pub fn auc(points: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let max_tpr = pts.iter().map(|p| p.1).fold(0.0, f64::max);
    let mut area = 0.0;
    let mut prev = (0.0, 0.0);
    for &p in pts.iter().chain(core::iter::once(&(1.0, max_tpr))) {
        area += (p.0 - prev.0) * (p.1 + prev.1) * 0.5;
        prev = p;
    }
    area
}

fn point(lambda1: f64, c: &EdgeConfusion, sse: f64) -> RocPoint {
    RocPoint {
        lambda1,
        fpr: c.fpr(),
        tpr: c.tpr(),
        tp: c.tp as f64,
        fp: c.fp as f64,
        sse,
    }
}

fn mean_point(points: &[RocPoint]) -> RocPoint {
    let n = points.len() as f64;
    let avg = |f: fn(&RocPoint) -> f64| points.iter().map(f).sum::<f64>() / n;
    RocPoint {
        lambda1: points[0].lambda1,
        fpr: avg(|p| p.fpr),
        tpr: avg(|p| p.tpr),
        tp: avg(|p| p.tp),
        fp: avg(|p| p.fp),
        sse: avg(|p| p.sse),
    }
}

fn curve_auc(points: &[RocPoint]) -> f64 {
    auc(&points.iter().map(|p| (p.fpr, p.tpr)).collect::<Vec<_>>())
}

/// Fit `model` along `lambda1_grid` (strongest penalty first, warm-started)
/// at fixed `lambda2` and score each fit against the gold precisions.
///
/// Failed fits are recorded and skipped; `GridFailed` if none succeed.
pub fn roc_sweep(
    covs: &[CohortCovariance],
    gold: &[DMatrix<f64>],
    model: Model,
    lambda1_grid: &[f64],
    lambda2: f64,
    opts: &FitOptions,
) -> Result<RocSweep> {
    if covs.len() != gold.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} cohorts for {} gold matrices",
            covs.len(),
            gold.len()
        )));
    }
    let grid = descending(lambda1_grid);
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty lambda1 grid".into()));
    }
    let mut warnings = Vec::new();
    let mut edgeless = Vec::with_capacity(gold.len());
    for (g, m) in gold.iter().enumerate() {
        let empty = edge_confusion(m, m, opts.zero_tol)?.gold_edges() == 0;
        if empty {
            warnings.push(format!(
                "gold standard of cohort {g} has no edges; its AUC is 0"
            ));
        }
        edgeless.push(empty);
    }

    let mut by_cohort: Vec<Vec<RocPoint>> = alloc::vec![Vec::new(); covs.len()];
    let mut averaged = Vec::new();
    let mut failures = Vec::new();
    let mut warm: Option<PathState> = None;
    for &l1 in &grid {
        match fit_model(covs, model, l1, lambda2, opts, warm.as_ref()) {
            Ok((phis, state)) => {
                let mut pts = Vec::with_capacity(phis.len());
                for (phi, gm) in phis.iter().zip(gold) {
                    pts.push(point(
                        l1,
                        &edge_confusion(phi, gm, opts.zero_tol)?,
                        sse(phi, gm)?,
                    ));
                }
                averaged.push(mean_point(&pts));
                for (curve, p) in by_cohort.iter_mut().zip(pts) {
                    curve.push(p);
                }
                warm = Some(state);
            }
            Err(error) => {
                log::warn!("{model} fit failed at lambda1={l1}, lambda2={lambda2}: {error}");
                failures.push(SweepFailure { lambda1: l1, error });
            }
        }
    }
    if averaged.is_empty() {
        return Err(Error::GridFailed);
    }

    let auc_by_cohort: Vec<f64> = by_cohort
        .iter()
        .zip(&edgeless)
        .map(|(c, &empty)| if empty { 0.0 } else { curve_auc(c) })
        .collect();
    let auc = if edgeless.iter().all(|&e| e) {
        0.0
    } else {
        curve_auc(&averaged)
    };
    let sse_optimal = *averaged
        .iter()
        .min_by(|a, b| {
            a.sse
                .partial_cmp(&b.sse)
                .unwrap_or(core::cmp::Ordering::Equal)
        })
        .expect("nonempty");
    Ok(RocSweep {
        model,
        lambda2,
        by_cohort,
        averaged,
        auc_by_cohort,
        auc,
        sse_optimal,
        failures,
        warnings,
    })
}
