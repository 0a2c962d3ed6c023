//! Count-weighted EM for a 3-D Gaussian mixture over voxel coordinates.
//!
//! Each voxel `x_i` is treated as `I(x_i)` independent detections, so the
//! objective is `sum_i I(x_i) ln sum_k w_k N(x_i | mu_k, Sigma_k)` and every
//! M-step moment is weighted by `I(x_i) * gamma_ik`.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Vector3};

use super::kmeans::{weighted_kmeans, weighted_kmeanspp_init, Point};
use super::{bic_score, MixtureModel};
use crate::error::{Error, Result};
use crate::volume::PooledRegion;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmConfig {
    /// Stop when the relative log-likelihood change drops below this.
    pub tol: f64,
    pub max_iter: usize,
    pub kmeans_iter: usize,
    /// Floor scale: `epsilon = floor_scale * mean diagonal` of the region's pooled covariance.
    pub floor_scale: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            kmeans_iter: 100,
            floor_scale: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Component {
    pub weight: f64,
    pub mean: Vector3<f64>,
    pub cov: Matrix3<f64>,
    prec: Matrix3<f64>,
    log_norm: f64,
}

impl Component {
    pub fn new(weight: f64, mean: Vector3<f64>, cov: Matrix3<f64>) -> Result<Self> {
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::NumericalFailure("component covariance is singular".into()))?;
        let l = chol.l();
        let log_det = 2.0 * libm::log(l[(0, 0)] * l[(1, 1)] * l[(2, 2)]);
        Ok(Self {
            weight,
            mean,
            cov,
            prec: chol.inverse(),
            log_norm: -0.5 * (3.0 * LN_2PI + log_det),
        })
    }

    #[inline]
    pub fn log_density(&self, x: &Point) -> f64 {
        let d = Vector3::new(
            x[0] - self.mean[0],
            x[1] - self.mean[1],
            x[2] - self.mean[2],
        );
        self.log_norm - 0.5 * d.dot(&(self.prec * d))
    }
}

/// Responsibilities of one point, written into `out`; returns `ln sum_k w_k N_k`.
pub(crate) fn responsibilities_at(components: &[Component], x: &Point, out: &mut [f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (o, c) in out.iter_mut().zip(components) {
        *o = if c.weight > 0.0 {
            libm::log(c.weight) + c.log_density(x)
        } else {
            f64::NEG_INFINITY
        };
        max = max.max(*o);
    }
    let mut sum = 0.0;
    for o in out.iter_mut() {
        *o = libm::exp(*o - max);
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    max + libm::log(sum)
}

fn floor_covariance(cov: Matrix3<f64>, epsilon: f64) -> Matrix3<f64> {
    let sym = (cov + cov.transpose()) * 0.5;
    let min_eig = sym.symmetric_eigenvalues().min();
    if min_eig < epsilon {
        sym + Matrix3::identity() * epsilon
    } else {
        sym
    }
}

/// Count-weighted mean and scatter of a point set.
fn weighted_moments(
    coords: &[Point],
    weights: impl Iterator<Item = f64> + Clone,
) -> (f64, Vector3<f64>, Matrix3<f64>) {
    let mut mass = 0.0;
    let mut mean = Vector3::zeros();
    for (p, w) in coords.iter().zip(weights.clone()) {
        mass += w;
        mean += Vector3::new(p[0], p[1], p[2]) * w;
    }
    if mass > 0.0 {
        mean /= mass;
    }
    let mut cov = Matrix3::zeros();
    for (p, w) in coords.iter().zip(weights) {
        let d = Vector3::new(p[0], p[1], p[2]) - mean;
        cov += d * d.transpose() * w;
    }
    if mass > 0.0 {
        cov /= mass;
    }
    (mass, mean, cov)
}

/// Indices sorted into raster order (z, then y, then x).
pub(crate) fn canonical_order(coords: &[Point]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..coords.len()).collect();
    idx.sort_by(|&a, &b| {
        let (pa, pb) = (coords[a], coords[b]);
        [pa[2], pa[1], pa[0]]
            .partial_cmp(&[pb[2], pb[1], pb[0]])
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    idx
}

pub(crate) fn covariance_floor(coords: &[Point], counts: &[f64], scale: f64) -> f64 {
    let (_, _, cov) = weighted_moments(coords, counts.iter().copied());
    let mean_diag = cov.trace() / 3.0;
    if mean_diag > 0.0 {
        scale * mean_diag
    } else {
        scale
    }
}

/// Fit a `k`-component mixture to a pooled region.
pub fn fit_mixture(
    region: &PooledRegion,
    k: usize,
    seed: u64,
    cfg: &EmConfig,
) -> Result<MixtureModel> {
    fit_mixture_traced(region, k, seed, cfg).map(|(m, _)| m)
}

/// As [`fit_mixture`], also returning the log-likelihood after every EM iteration.
pub fn fit_mixture_traced(
    region: &PooledRegion,
    k: usize,
    seed: u64,
    cfg: &EmConfig,
) -> Result<(MixtureModel, Vec<f64>)> {
    if region.coords.len() != region.counts.len() || region.coords.is_empty() {
        return Err(Error::ShapeMismatch(
            "region coords and counts differ".into(),
        ));
    }
    let order = canonical_order(&region.coords);
    let coords: Vec<Point> = order.iter().map(|&i| region.coords[i]).collect();
    let counts: Vec<f64> = order.iter().map(|&i| region.counts[i]).collect();
    let total: f64 = counts.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyRegion(region.region_id));
    }
    let epsilon = covariance_floor(&coords, &counts, cfg.floor_scale);

    // only voxels with counts enter the likelihood
    let active: Vec<usize> = (0..coords.len()).filter(|&i| counts[i] > 0.0).collect();
    let xs: Vec<Point> = active.iter().map(|&i| coords[i]).collect();
    let cs: Vec<f64> = active.iter().map(|&i| counts[i]).collect();

    let seeds = weighted_kmeanspp_init(&xs, &cs, k, seed)?;
    let (_, assign) = weighted_kmeans(&xs, &cs, seeds, cfg.kmeans_iter);
    let (_, _, pooled_cov) = weighted_moments(&xs, cs.iter().copied());
    let mut components = Vec::with_capacity(k);
    for j in 0..k {
        let w = cs
            .iter()
            .zip(&assign)
            .map(move |(&c, &a)| if a == j { c } else { 0.0 });
        let (mass, mean, cov) = weighted_moments(&xs, w);
        let cov = if mass > 0.0 { cov } else { pooled_cov };
        components.push(Component::new(
            mass / total,
            mean,
            floor_covariance(cov, epsilon),
        )?);
    }

    let mut gamma = vec![0.0; xs.len() * k];
    let mut trace = Vec::new();
    let mut ll = e_step(&components, &xs, &cs, &mut gamma)?;
    trace.push(ll);
    for _ in 0..cfg.max_iter {
        m_step(&mut components, &xs, &cs, &gamma, total, epsilon)?;
        let next = e_step(&components, &xs, &cs, &mut gamma)?;
        trace.push(next);
        let converged = (next - ll).abs() <= cfg.tol * ll.abs().max(1e-300);
        ll = next;
        if converged {
            break;
        }
    }

    let mut model = MixtureModel::from_components(region.region_id, &components, ll);
    model.bic = bic_score(&model, total);
    model.sort_components();
    Ok((model, trace))
}

fn e_step(components: &[Component], xs: &[Point], cs: &[f64], gamma: &mut [f64]) -> Result<f64> {
    let k = components.len();
    let mut ll = 0.0;
    for (i, (x, &c)) in xs.iter().zip(cs).enumerate() {
        ll += c * responsibilities_at(components, x, &mut gamma[i * k..(i + 1) * k]);
    }
    if !ll.is_finite() {
        return Err(Error::NumericalFailure(
            "mixture log-likelihood is not finite".into(),
        ));
    }
    Ok(ll)
}

fn m_step(
    components: &mut [Component],
    xs: &[Point],
    cs: &[f64],
    gamma: &[f64],
    total: f64,
    epsilon: f64,
) -> Result<()> {
    let k = components.len();
    for j in 0..k {
        let w = cs
            .iter()
            .enumerate()
            .map(move |(i, &c)| c * gamma[i * k + j]);
        let (mass, mean, cov) = weighted_moments(xs, w);
        if mass > 0.0 {
            components[j] = Component::new(mass / total, mean, floor_covariance(cov, epsilon))?;
        } else {
            components[j].weight = 0.0;
        }
    }
    Ok(())
}
