//! Count-weighted kmeans++ seeding and Lloyd refinement.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::rng_from;

pub type Point = [f64; 3];

#[inline]
pub(crate) fn dist2(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Number of distinct coordinates that carry a positive count.
pub fn distinct_positive(coords: &[Point], counts: &[f64]) -> usize {
    let mut pts: Vec<Point> = coords
        .iter()
        .zip(counts)
        .filter(|(_, &c)| c > 0.0)
        .map(|(p, _)| *p)
        .collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    pts.dedup();
    pts.len()
}

/// Pick `k` initial centers.
///
/// The first is the coordinate with the largest count (ties go to the
/// earliest entry). Each further center is drawn with probability
/// proportional to `count * squared distance to the nearest chosen center`.
pub fn weighted_kmeanspp_init(
    coords: &[Point],
    counts: &[f64],
    k: usize,
    seed: u64,
) -> Result<Vec<Point>> {
    if coords.len() != counts.len() {
        return Err(Error::ShapeMismatch(
            "coords and counts differ in length".into(),
        ));
    }
    let available = distinct_positive(coords, counts);
    if k == 0 || k > available {
        return Err(Error::TooManyClusters {
            requested: k,
            available,
        });
    }
    let first = counts.iter().enumerate().fold(
        0usize,
        |best, (i, &c)| if c > counts[best] { i } else { best },
    );
    let mut centers = vec![coords[first]];
    let mut nearest: Vec<f64> = coords.iter().map(|p| dist2(p, &coords[first])).collect();
    let mut rng = rng_from(seed);
    while centers.len() < k {
        let total: f64 = nearest.iter().zip(counts).map(|(d, c)| d * c).sum();
        if !(total > 0.0) {
            return Err(Error::NumericalFailure(
                "kmeans++ ran out of candidate points".into(),
            ));
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, (d, c)) in nearest.iter().zip(counts).enumerate() {
            let w = d * c;
            if w > 0.0 {
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
        }
        let pick = pick.expect("total > 0 implies a positive weight");
        let center = coords[pick];
        for (n, p) in nearest.iter_mut().zip(coords) {
            *n = n.min(dist2(p, &center));
        }
        centers.push(center);
    }
    Ok(centers)
}

fn nearest_center(p: &Point, centers: &[Point]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centers.iter().enumerate() {
        let d = dist2(p, c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Count-weighted Lloyd iterations until assignments stop changing.
///
/// Clusters that lose all weight keep their previous center.
pub fn weighted_kmeans(
    coords: &[Point],
    counts: &[f64],
    mut centers: Vec<Point>,
    max_iter: usize,
) -> (Vec<Point>, Vec<usize>) {
    let mut assign: Vec<usize> = coords.iter().map(|p| nearest_center(p, &centers)).collect();
    for _ in 0..max_iter {
        let k = centers.len();
        let mut sums = vec![[0.0f64; 3]; k];
        let mut mass = vec![0.0f64; k];
        for ((p, &c), &a) in coords.iter().zip(counts).zip(&assign) {
            mass[a] += c;
            for d in 0..3 {
                sums[a][d] += c * p[d];
            }
        }
        for j in 0..k {
            if mass[j] > 0.0 {
                centers[j] = sums[j].map(|s| s / mass[j]);
            }
        }
        let next: Vec<usize> = coords.iter().map(|p| nearest_center(p, &centers)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    (centers, assign)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_center_has_most_counts() {
        let coords = [[0.0, 0.0, 0.0], [5.0, 0.0, 0.0], [9.0, 0.0, 0.0]];
        let c = weighted_kmeanspp_init(&coords, &[5.0, 1.0, 1.0], 1, 0).unwrap();
        assert_eq!(c, vec![coords[0]]);
    }

    #[test]
    fn ties_pick_earliest() {
        let coords = [[3.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        let c = weighted_kmeanspp_init(&coords, &[2.0, 2.0, 2.0], 1, 0).unwrap();
        assert_eq!(c, vec![coords[0]]);
    }

    #[test]
    fn zero_count_points_are_never_drawn() {
        // A is picked first; B has zero weight so C must follow with probability 1
        let coords = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        for seed in 0..200 {
            let c = weighted_kmeanspp_init(&coords, &[10.0, 0.0, 10.0], 2, seed).unwrap();
            assert_eq!(c, vec![coords[0], coords[2]]);
        }
    }

    #[test]
    fn draw_frequencies_follow_weights() {
        // after A, weights are d^2 * count: B -> 1 * 1 = 1, C -> 4 * 1 = 4
        let coords = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
        let n = 5000;
        let c_hits = (0..n)
            .filter(|&s| {
                weighted_kmeanspp_init(&coords, &[3.0, 1.0, 1.0], 2, s).unwrap()[1] == coords[2]
            })
            .count();
        let freq = c_hits as f64 / n as f64;
        assert!((freq - 0.8).abs() < 0.03, "{freq}");
    }

    #[test]
    fn too_many_clusters() {
        let coords = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        assert_eq!(
            weighted_kmeanspp_init(&coords, &[1.0, 0.0], 2, 0).unwrap_err(),
            Error::TooManyClusters {
                requested: 2,
                available: 1
            }
        );
    }

    #[test]
    fn lloyd_separates_two_groups() {
        let coords = [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [10.0, 0.0, 0.0],
            [11.0, 0.0, 0.0],
        ];
        let counts = [1.0, 3.0, 1.0, 1.0];
        let (centers, assign) = weighted_kmeans(&coords, &counts, vec![coords[0], coords[1]], 50);
        assert_eq!(assign, vec![0, 0, 1, 1]);
        assert!((centers[0][0] - 0.75).abs() < 1e-12);
        assert!((centers[1][0] - 10.5).abs() < 1e-12);
    }
}
