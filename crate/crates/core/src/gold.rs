//! Reference networks for scoring estimates.
//!
//! Synthetic golds plant a shared edge set plus private per-cohort edges with
//! signed uniform weights, then inflate the diagonal until the smallest
//! eigenvalue reaches [`MIN_EIGENVALUE`]. Golds can also be derived from data
//! by a lightly regularized graphical lasso per cohort.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::covariance::{CohortCovariance, SubjectMatrix};
use crate::error::{Error, Result};
use crate::glasso::{glasso_fit, GlassoConfig};
use crate::linalg::{inverse_spd, min_eigenvalue};
use crate::rng::{derive_seed, rng_from};

pub const MIN_EIGENVALUE: f64 = 0.05;

/// Entries with `|value|` at or below this are treated as absent when reading supports.
pub const SUPPORT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub p: usize,
    pub groups: usize,
    pub edge_density: f64,
    pub shared_fraction: f64,
    pub weight_range: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            p: 40,
            groups: 2,
            edge_density: 0.1,
            shared_fraction: 0.8,
            weight_range: (0.1, 0.4),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Synthetic,
    DerivedFromData,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldStandard {
    pub precisions: Vec<DMatrix<f64>>,
    /// `|intersection| / |union|` of the off-diagonal supports.
    pub shared_fraction: f64,
    pub edge_counts: Vec<usize>,
    pub seed: u64,
    pub provenance: Provenance,
    pub spec: Option<SyntheticSpec>,
}

impl GoldStandard {
    pub fn groups(&self) -> usize {
        self.precisions.len()
    }

    pub fn dim(&self) -> usize {
        self.precisions[0].nrows()
    }
}

/// Upper-triangle off-diagonal support.
pub fn support(m: &DMatrix<f64>, tol: f64) -> Vec<(usize, usize)> {
    let p = m.nrows();
    let mut out = Vec::new();
    for i in 0..p {
        for j in (i + 1)..p {
            if (0.5 * (m[(i, j)] + m[(j, i)])).abs() > tol {
                out.push((i, j));
            }
        }
    }
    out
}

/// Intersection over union of supports; 1 when every support is empty.
pub fn shared_fraction(precisions: &[DMatrix<f64>], tol: f64) -> f64 {
    let p = precisions[0].nrows();
    let (mut inter, mut union) = (0usize, 0usize);
    for i in 0..p {
        for j in (i + 1)..p {
            let present = precisions
                .iter()
                .filter(|m| (0.5 * (m[(i, j)] + m[(j, i)])).abs() > tol)
                .count();
            if present > 0 {
                union += 1;
            }
            if present == precisions.len() {
                inter += 1;
            }
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Shared and private edge counts per cohort achieving the requested fraction.
fn plan_edges(spec: &SyntheticSpec) -> Result<(usize, usize)> {
    let pairs = spec.p * spec.p.saturating_sub(1) / 2;
    let m = libm::round(spec.edge_density * pairs as f64) as usize;
    let g = spec.groups as f64;
    let f = spec.shared_fraction;
    // |inter| / |union| = s / (s + G q) with s + q = m
    let shared = libm::round((f * g * m as f64) / (1.0 + f * (g - 1.0))) as usize;
    let shared = shared.min(m);
    let private = m - shared;
    if shared + spec.groups * private > pairs {
        return Err(Error::InfeasibleSpec(format!(
            "{shared} shared + {} private edges exceed {pairs} node pairs",
            spec.groups * private
        )));
    }
    Ok((shared, private))
}

pub fn generate_gold(spec: &SyntheticSpec) -> Result<GoldStandard> {
    if spec.p < 2 || spec.groups == 0 {
        return Err(Error::InfeasibleSpec(
            "need p >= 2 and at least one group".into(),
        ));
    }
    if !(spec.edge_density > 0.0 && spec.edge_density < 1.0) {
        return Err(Error::InfeasibleSpec(format!(
            "edge density {} not in (0,1)",
            spec.edge_density
        )));
    }
    if !(0.0..=1.0).contains(&spec.shared_fraction) {
        return Err(Error::InfeasibleSpec(format!(
            "shared fraction {} not in [0,1]",
            spec.shared_fraction
        )));
    }
    let (lo, hi) = spec.weight_range;
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::InfeasibleSpec(format!(
            "bad weight range ({lo}, {hi})"
        )));
    }
    let (shared, private) = plan_edges(spec)?;
    if shared + private == 0 {
        return Err(Error::InfeasibleSpec(
            "spec yields zero edges per cohort".into(),
        ));
    }

    let mut rng = rng_from(derive_seed(spec.seed, &[0x601d]));
    let p = spec.p;
    let mut pairs: Vec<(usize, usize)> = (0..p)
        .flat_map(|i| ((i + 1)..p).map(move |j| (i, j)))
        .collect();
    pairs.shuffle(&mut rng);
    let draw_weight = |rng: &mut crate::rng::Rng| {
        let magnitude = lo + (hi - lo) * rng.random::<f64>();
        if rng.random::<bool>() {
            magnitude
        } else {
            -magnitude
        }
    };

    let mut offdiag = alloc::vec![DMatrix::<f64>::zeros(p, p); spec.groups];
    for &(i, j) in &pairs[..shared] {
        let w = draw_weight(&mut rng);
        for m in offdiag.iter_mut() {
            m[(i, j)] = w;
            m[(j, i)] = w;
        }
    }
    for (g, m) in offdiag.iter_mut().enumerate() {
        let start = shared + g * private;
        for &(i, j) in &pairs[start..start + private] {
            let w = draw_weight(&mut rng);
            m[(i, j)] = w;
            m[(j, i)] = w;
        }
    }

    // one common inflation keeps shared edges identical in partial correlation too
    let delta = offdiag
        .iter()
        .map(|m| MIN_EIGENVALUE - min_eigenvalue(m))
        .fold(0.0f64, f64::max)
        * (1.0 + 1e-9)
        + 1e-12;
    let precisions: Vec<DMatrix<f64>> = offdiag
        .into_iter()
        .map(|m| m + DMatrix::from_diagonal(&DVector::from_element(p, delta)))
        .collect();
    for m in &precisions {
        if min_eigenvalue(m) < MIN_EIGENVALUE * (1.0 - 1e-9) {
            return Err(Error::NumericalFailure(
                "diagonal inflation missed the eigenvalue floor".into(),
            ));
        }
    }
    let edge_counts: Vec<usize> = precisions
        .iter()
        .map(|m| support(m, SUPPORT_TOL).len())
        .collect();
    if edge_counts.iter().any(|&c| c != shared + private) {
        return Err(Error::NumericalFailure("planted support changed".into()));
    }
    Ok(GoldStandard {
        shared_fraction: shared_fraction(&precisions, SUPPORT_TOL),
        precisions,
        edge_counts,
        seed: spec.seed,
        provenance: Provenance::Synthetic,
        spec: Some(*spec),
    })
}

/// `n` i.i.d. draws from `N(0, Phi_g^-1)`.
pub fn sample_cohort(gold: &GoldStandard, g: usize, n: usize, seed: u64) -> Result<SubjectMatrix> {
    if n < 2 {
        return Err(Error::TooFewSubjects(n));
    }
    let phi = gold
        .precisions
        .get(g)
        .ok_or_else(|| Error::InvalidArgument(format!("cohort {g} out of range")))?;
    let cov = inverse_spd(phi).ok_or(Error::NotPositiveDefinite)?;
    let l = cov.cholesky().ok_or(Error::NotPositiveDefinite)?.unpack();
    let p = phi.nrows();
    let mut rng = rng_from(derive_seed(seed, &[g as u64, n as u64]));
    let z = DMatrix::<f64>::from_fn(p, n, |_, _| rng.sample(StandardNormal));
    let x = (l * z).transpose();
    let cohort = cohort_name(g);
    SubjectMatrix::new(
        cohort.clone(),
        (0..n).map(|i| format!("{cohort}_s{i}")).collect(),
        node_names(p),
        x,
    )
}

pub fn cohort_name(g: usize) -> String {
    format!("g{g}")
}

pub fn node_names(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("n{i}")).collect()
}

/// Per-cohort graphical lasso at `lambda` (light regularization), used as the reference.
pub fn derive_gold_from_data(covs: &[CohortCovariance], lambda: f64) -> Result<GoldStandard> {
    if covs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let cfg = GlassoConfig {
        max_iter: 10_000,
        ..GlassoConfig::with_lambda(lambda)
    };
    let precisions = covs
        .iter()
        .map(|c| glasso_fit(c, &cfg).map(|e| e.phi))
        .collect::<Result<Vec<_>>>()?;
    Ok(GoldStandard {
        shared_fraction: shared_fraction(&precisions, SUPPORT_TOL),
        edge_counts: precisions
            .iter()
            .map(|m| support(m, SUPPORT_TOL).len())
            .collect(),
        precisions,
        seed: 0,
        provenance: Provenance::DerivedFromData,
        spec: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{empirical_covariance, Normalization};

    #[test]
    fn fully_shared_spec_gives_identical_supports() {
        let spec = SyntheticSpec {
            shared_fraction: 1.0,
            ..SyntheticSpec::default()
        };
        let gold = generate_gold(&spec).unwrap();
        assert_eq!(
            support(&gold.precisions[0], SUPPORT_TOL),
            support(&gold.precisions[1], SUPPORT_TOL)
        );
        assert_eq!(gold.shared_fraction, 1.0);
    }

    #[test]
    fn supports_are_symmetric_and_spd() {
        let gold = generate_gold(&SyntheticSpec::default()).unwrap();
        for m in &gold.precisions {
            assert_eq!(m, &m.transpose());
            assert!(min_eigenvalue(m) >= MIN_EIGENVALUE * (1.0 - 1e-9));
        }
        assert_eq!(gold.edge_counts, alloc::vec![78, 78]);
    }

    #[test]
    fn large_network_edge_count() {
        let spec = SyntheticSpec {
            p: 180,
            edge_density: 0.13,
            seed: 3,
            ..SyntheticSpec::default()
        };
        let gold = generate_gold(&spec).unwrap();
        for &c in &gold.edge_counts {
            assert!((2000..=2200).contains(&c), "{c}");
        }
    }

    #[test]
    fn infeasible_spec_is_rejected() {
        let spec = SyntheticSpec {
            p: 10,
            edge_density: 0.9,
            shared_fraction: 0.0,
            ..SyntheticSpec::default()
        };
        assert!(matches!(
            generate_gold(&spec),
            Err(Error::InfeasibleSpec(_))
        ));
        let spec = SyntheticSpec {
            p: 3,
            edge_density: 0.01,
            ..SyntheticSpec::default()
        };
        assert!(matches!(
            generate_gold(&spec),
            Err(Error::InfeasibleSpec(_))
        ));
    }

    #[test]
    fn sampling_is_deterministic() {
        let gold = generate_gold(&SyntheticSpec::default()).unwrap();
        let a = sample_cohort(&gold, 1, 7, 11).unwrap();
        let b = sample_cohort(&gold, 1, 7, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values.shape(), (7, 40));
        assert_ne!(a.values, sample_cohort(&gold, 1, 7, 12).unwrap().values);
        assert_eq!(sample_cohort(&gold, 0, 2, 0).unwrap().values.nrows(), 2);
        assert_eq!(sample_cohort(&gold, 0, 1, 0), Err(Error::TooFewSubjects(1)));
    }

    #[test]
    fn derived_gold_conventions() {
        let s = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, 0.0, 0.3, 1.0, 0.2, 0.0, 0.2, 1.0]);
        let c = CohortCovariance::unlabeled(s, 100).unwrap();
        let gold = derive_gold_from_data(&[c.clone(), c.clone()], 0.05).unwrap();
        assert_eq!(gold.shared_fraction, 1.0);
        assert_eq!(gold.provenance, Provenance::DerivedFromData);
        let empty = derive_gold_from_data(&[c.clone(), c], 5.0).unwrap();
        assert_eq!(empty.edge_counts, alloc::vec![0, 0]);
        assert_eq!(empty.shared_fraction, 1.0);
    }

    #[test]
    fn sample_covariance_converges() {
        let spec = SyntheticSpec {
            p: 5,
            edge_density: 0.4,
            ..SyntheticSpec::default()
        };
        let gold = generate_gold(&spec).unwrap();
        let x = sample_cohort(&gold, 0, 100_000, 5).unwrap();
        let s = empirical_covariance(
            &crate::covariance::mean_center(&x).unwrap(),
            Normalization::MaxLikelihood,
        )
        .unwrap();
        let truth = inverse_spd(&gold.precisions[0]).unwrap();
        let err = crate::linalg::max_abs_diff(&s.s, &truth);
        assert!(err < 0.05 * truth.amax().max(1.0), "max error {err}");
    }
}
