//! Subject matrices, cohort covariances and precision estimates.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// subjects x nodes values for one cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectMatrix {
    pub cohort_id: String,
    pub subject_ids: Vec<String>,
    pub node_labels: Vec<String>,
    pub values: DMatrix<f64>,
}

impl SubjectMatrix {
    pub fn new(
        cohort_id: impl Into<String>,
        subject_ids: Vec<String>,
        node_labels: Vec<String>,
        values: DMatrix<f64>,
    ) -> Result<Self> {
        if values.nrows() != subject_ids.len() || values.ncols() != node_labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} values for {} subjects and {} nodes",
                values.nrows(),
                values.ncols(),
                subject_ids.len(),
                node_labels.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("non-finite subject value".into()));
        }
        Ok(Self {
            cohort_id: cohort_id.into(),
            subject_ids,
            node_labels,
            values,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_nodes(&self) -> usize {
        self.values.ncols()
    }

    /// Rows picked by index (repeats allowed, for resampling with replacement).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let values = DMatrix::from_fn(rows.len(), self.n_nodes(), |r, c| self.values[(rows[r], c)]);
        Self {
            cohort_id: self.cohort_id.clone(),
            subject_ids: rows.iter().map(|&r| self.subject_ids[r].clone()).collect(),
            node_labels: self.node_labels.clone(),
            values,
        }
    }
}

/// Divisor used for the empirical covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `1/n`, the Gaussian maximum-likelihood estimate.
    #[default]
    MaxLikelihood,
    /// `1/(n-1)`.
    Unbiased,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortCovariance {
    pub s: DMatrix<f64>,
    pub n: usize,
    pub cohort_id: String,
    pub node_labels: Vec<String>,
}

impl CohortCovariance {
    pub fn new(
        s: DMatrix<f64>,
        n: usize,
        cohort_id: impl Into<String>,
        node_labels: Vec<String>,
    ) -> Result<Self> {
        if !s.is_square() || s.nrows() != node_labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} covariance for {} labels",
                s.nrows(),
                s.ncols(),
                node_labels.len()
            )));
        }
        if n < 2 {
            return Err(Error::TooFewSubjects(n));
        }
        let p = s.nrows();
        for i in 0..p {
            if !(s[(i, i)] >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "negative variance at node {i}"
                )));
            }
            for j in 0..i {
                let scale = 1.0f64.max(s[(i, j)].abs());
                if (s[(i, j)] - s[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument("covariance is not symmetric".into()));
                }
            }
        }
        Ok(Self {
            s,
            n,
            cohort_id: cohort_id.into(),
            node_labels,
        })
    }

    /// Unlabeled covariance, nodes named `n0..`.
    pub fn unlabeled(s: DMatrix<f64>, n: usize) -> Result<Self> {
        let labels = (0..s.nrows()).map(|i| format!("n{i}")).collect();
        Self::new(s, n, "", labels)
    }

    pub fn dim(&self) -> usize {
        self.s.nrows()
    }
}

/// Penalties a precision estimate was fitted with.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LambdaRecord {
    pub lambda1: f64,
    pub lambda2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionEstimate {
    pub phi: DMatrix<f64>,
    pub cohort_id: String,
    pub node_labels: Vec<String>,
    pub lambda: LambdaRecord,
    pub objective: f64,
}

impl PrecisionEstimate {
    pub fn partial_correlations(&self) -> Result<DMatrix<f64>> {
        partial_correlations(&self.phi)
    }
}

pub fn mean_center(x: &SubjectMatrix) -> Result<SubjectMatrix> {
    let n = x.n_subjects();
    if n < 2 {
        return Err(Error::TooFewSubjects(n));
    }
    let mut out = x.clone();
    for mut col in out.values.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col.add_scalar_mut(-mean);
    }
    Ok(out)
}

/// `S = X^T X / n` (or `/(n-1)`) of an already centered matrix.
pub fn empirical_covariance(x: &SubjectMatrix, norm: Normalization) -> Result<CohortCovariance> {
    let n = x.n_subjects();
    if n < 2 {
        return Err(Error::TooFewSubjects(n));
    }
    let divisor = match norm {
        Normalization::MaxLikelihood => n as f64,
        Normalization::Unbiased => (n - 1) as f64,
    };
    let mut s = x.values.tr_mul(&x.values) / divisor;
    // exact symmetry for downstream checks
    let p = s.nrows();
    for i in 0..p {
        for j in 0..i {
            let v = 0.5 * (s[(i, j)] + s[(j, i)]);
            s[(i, j)] = v;
            s[(j, i)] = v;
        }
    }
    Ok(CohortCovariance {
        s,
        n,
        cohort_id: x.cohort_id.clone(),
        node_labels: x.node_labels.clone(),
    })
}

/// `rho_ij = -phi_ij / sqrt(phi_ii phi_jj)`, unit diagonal.
pub fn partial_correlations(phi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !phi.is_square() {
        return Err(Error::ShapeMismatch(
            "precision matrix is not square".into(),
        ));
    }
    let d: Vec<f64> = phi.diagonal().iter().copied().collect();
    if d.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NotPositiveDefinite);
    }
    let p = phi.nrows();
    Ok(DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else if phi[(i, j)] == 0.0 {
            0.0
        } else {
            -phi[(i, j)] / libm::sqrt(d[i] * d[j])
        }
    }))
}
