use alloc::format;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Edge-level confusion counts over the upper triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EdgeConfusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl EdgeConfusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn gold_edges(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn gold_non_edges(&self) -> usize {
        self.fp + self.tn
    }

    /// `tp / gold edges`, 0 when the gold has no edges.
    pub fn tpr(&self) -> f64 {
        ratio(self.tp, self.gold_edges())
    }

    /// `fp / gold non-edges`, 0 when the gold is complete.
    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.gold_non_edges())
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn check_same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() || !a.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "estimate {:?} vs gold {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Compare supports; an entry is an edge iff `|(m_ij + m_ji)/2| > zero_tol`.
pub fn edge_confusion(
    est: &DMatrix<f64>,
    gold: &DMatrix<f64>,
    zero_tol: f64,
) -> Result<EdgeConfusion> {
    check_same_shape(est, gold)?;
    let p = est.nrows();
    let mut c = EdgeConfusion::default();
    for i in 0..p {
        for j in (i + 1)..p {
            let e = (0.5 * (est[(i, j)] + est[(j, i)])).abs() > zero_tol;
            let g = (0.5 * (gold[(i, j)] + gold[(j, i)])).abs() > zero_tol;
            match (e, g) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(c)
}

/// Sum of squared differences over all entries, diagonal included.
pub fn sse(est: &DMatrix<f64>, gold: &DMatrix<f64>) -> Result<f64> {
    check_same_shape(est, gold)?;
    Ok(est
        .iter()
        .zip(gold.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// `sum_g sum_ij |est_g - gold_g|`.
pub fn l1_distance(ests: &[DMatrix<f64>], golds: &[DMatrix<f64>]) -> Result<f64> {
    if ests.len() != golds.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} estimates for {} gold matrices",
            ests.len(),
            golds.len()
        )));
    }
    let mut total = 0.0;
    for (e, g) in ests.iter().zip(golds) {
        check_same_shape(e, g)?;
        total += e
            .iter()
            .zip(g.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_edges(p: usize, edges: &[(usize, usize)]) -> DMatrix<f64> {
        let mut m = DMatrix::identity(p, p);
        for &(i, j) in edges {
            m[(i, j)] = 0.3;
            m[(j, i)] = 0.3;
        }
        m
    }

    #[test]
    fn enumerated_confusion() {
        let gold = with_edges(3, &[(0, 1), (1, 2)]);
        let est = with_edges(3, &[(0, 1), (0, 2)]);
        let c = edge_confusion(&est, &gold, 1e-8).unwrap();
        assert_eq!(
            c,
            EdgeConfusion {
                tp: 1,
                fp: 1,
                fn_: 1,
                tn: 0
            }
        );
        let c = edge_confusion(&gold, &gold, 1e-8).unwrap();
        assert_eq!((c.fp, c.fn_), (0, 0));
        let c = edge_confusion(&DMatrix::identity(3, 3), &gold, 1e-8).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (0, 0, 2));
    }

    #[test]
    fn sse_and_l1_plug_in() {
        let gold = with_edges(3, &[(0, 1)]);
        assert_eq!(sse(&gold, &gold).unwrap(), 0.0);
        let mut est = gold.clone();
        est[(0, 2)] += 0.1;
        est[(2, 0)] += 0.1;
        assert!((sse(&est, &gold).unwrap() - 0.02).abs() < 1e-15);
        let l1 = l1_distance(&[gold.clone(), est], &[gold.clone(), gold]).unwrap();
        assert!((l1 - 0.2).abs() < 1e-15);
    }

    #[test]
    fn shape_errors() {
        assert!(sse(&DMatrix::identity(2, 2), &DMatrix::identity(3, 3)).is_err());
        assert!(edge_confusion(&DMatrix::identity(2, 2), &DMatrix::identity(3, 3), 0.0).is_err());
        assert!(l1_distance(&[DMatrix::identity(2, 2)], &[]).is_err());
    }
}
