//! Proximal operators of the sparsity and cross-group penalties.
//!
//! Each operator acts on the vector of one off-diagonal entry across groups
//! and minimizes `(rho/2) sum_g (z_g - a_g)^2 + penalty(z)`.

use crate::error::{Error, Result};

/// `sign(x) * max(|x| - t, 0)`.
#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Fused pair: `lambda1 (|z1| + |z2|) + lambda2 |z1 - z2|`.
///
/// Pull the pair together by `lambda2/rho` (clamping at the midpoint when
/// they would cross), then soft-threshold each by `lambda1/rho`. A single
/// group reduces to soft-thresholding.
pub fn fgl_prox(a: &[f64], out: &mut [f64], lambda1: f64, lambda2: f64, rho: f64) -> Result<()> {
    let t1 = lambda1 / rho;
    let t2 = lambda2 / rho;
    match *a {
        [x] => out[0] = soft_threshold(x, t1),
        [x, y] => {
            let (fx, fy) = if x - y > 2.0 * t2 {
                (x - t2, y + t2)
            } else if y - x > 2.0 * t2 {
                (x + t2, y - t2)
            } else {
                let m = 0.5 * (x + y);
                (m, m)
            };
            out[0] = soft_threshold(fx, t1);
            out[1] = soft_threshold(fy, t1);
        }
        _ => return Err(Error::UnsupportedGroupCount(a.len())),
    }
    Ok(())
}

/// Group penalty: `lambda1 sum_g |z_g| + lambda2 ||z||_2`.
///
/// Soft-threshold entrywise by `lambda1/rho`, then scale the vector by
/// `max(0, 1 - (lambda2/rho) / ||.||_2)`.
pub fn ggl_prox(a: &[f64], out: &mut [f64], lambda1: f64, lambda2: f64, rho: f64) {
    let t1 = lambda1 / rho;
    let t2 = lambda2 / rho;
    let mut norm2 = 0.0;
    for (o, &x) in out.iter_mut().zip(a) {
        *o = soft_threshold(x, t1);
        norm2 += *o * *o;
    }
    let norm = libm::sqrt(norm2);
    let scale = if norm > t2 { 1.0 - t2 / norm } else { 0.0 };
    for o in out.iter_mut() {
        *o *= scale;
    }
}
