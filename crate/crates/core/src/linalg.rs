//! Small dense helpers shared by the estimators.

use nalgebra::DMatrix;

/// `log det` of a symmetric positive-definite matrix, `None` when Cholesky fails.
pub fn log_det_spd(m: &DMatrix<f64>) -> Option<f64> {
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        acc += libm::log(l[(i, i)]);
    }
    Some(2.0 * acc)
}

pub fn is_spd(m: &DMatrix<f64>) -> bool {
    m.is_square() && m.clone().cholesky().is_some()
}

pub fn inverse_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let inv = m.clone().cholesky()?.inverse();
    Some(symmetrize(&inv))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

/// `tr(A B)` without forming the product.
pub fn trace_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub fn max_abs_offdiag(m: &DMatrix<f64>) -> f64 {
    let mut best = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                best = best.max(m[(i, j)].abs());
            }
        }
    }
    best
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Number of upper-triangle off-diagonal entries with `|m_ij| > tol`, after symmetrization.
pub fn count_edges(m: &DMatrix<f64>, tol: f64) -> usize {
    let p = m.nrows();
    let mut n = 0;
    for i in 0..p {
        for j in (i + 1)..p {
            if (0.5 * (m[(i, j)] + m[(j, i)])).abs() > tol {
                n += 1;
            }
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_det_matches_product_of_diagonal() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(alloc::vec![2.0, 3.0, 0.5]));
        assert!((log_det_spd(&m).unwrap() - 3.0f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn indefinite_has_no_log_det() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(log_det_spd(&m).is_none());
        assert!(!is_spd(&m));
    }

    #[test]
    fn trace_product_matches_matmul() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 1.5]);
        assert!((trace_product(&a, &b) - (&a * &b).trace()).abs() < 1e-14);
    }
}
