//! Per-cohort subject subsets for the sample-size experiments.

use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};

/// Row indices `indices[size][replicate][cohort]`, sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetPlan {
    pub sizes: Vec<usize>,
    pub replicates: usize,
    pub indices: Vec<Vec<Vec<Vec<usize>>>>,
}

impl SubsetPlan {
    pub fn get(&self, size: usize, replicate: usize) -> &[Vec<usize>] {
        &self.indices[size][replicate]
    }
}

/// Draw `replicates` subsets of every size from each cohort independently.
///
/// Every `(size, replicate, cohort)` has its own RNG stream, so plans are
/// reproducible and stable when sizes are added.
pub fn stratified_subsets(
    cohort_sizes: &[usize],
    sizes: &[usize],
    replicates: usize,
    seed: u64,
    with_replacement: bool,
) -> Result<SubsetPlan> {
    if cohort_sizes.is_empty() {
        return Err(Error::EmptyInput);
    }
    for &n in sizes {
        if let Some(&avail) = cohort_sizes.iter().filter(|&&a| a < n).min() {
            if !with_replacement || avail == 0 {
                return Err(Error::InsufficientData {
                    requested: n,
                    available: avail,
                });
            }
        }
    }
    let indices = sizes
        .iter()
        .map(|&n| {
            (0..replicates)
                .map(|r| {
                    cohort_sizes
                        .iter()
                        .enumerate()
                        .map(|(g, &avail)| {
                            let mut rng =
                                rng_from(derive_seed(seed, &[n as u64, r as u64, g as u64]));
                            let mut idx: Vec<usize> = if with_replacement {
                                (0..n).map(|_| rng.random_range(0..avail)).collect()
                            } else {
                                index::sample(&mut rng, avail, n).into_vec()
                            };
                            idx.sort_unstable();
                            idx
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(SubsetPlan {
        sizes: sizes.to_vec(),
        replicates,
        indices,
    })
}

/// Shuffle `0..n` and split into disjoint pools of `first` and `n - first` rows.
pub fn disjoint_split(n: usize, first: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if first > n {
        return Err(Error::InsufficientData {
            requested: first,
            available: n,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from(seed));
    let mut rest = idx.split_off(first);
    idx.sort_unstable();
    rest.sort_unstable();
    Ok((idx, rest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    #[test]
    fn subsets_have_requested_sizes_without_repeats() {
        let plan = stratified_subsets(&[200, 150], &[25, 100], 10, 7, false).unwrap();
        for (s, &n) in plan.sizes.iter().enumerate() {
            for r in 0..plan.replicates {
                for (g, idx) in plan.get(s, r).iter().enumerate() {
                    assert_eq!(idx.len(), n);
                    assert_eq!(idx.iter().collect::<BTreeSet<_>>().len(), n);
                    assert!(idx.iter().all(|&i| i < [200, 150][g]));
                }
            }
        }
    }

    #[test]
    fn plans_are_reproducible() {
        let a = stratified_subsets(&[50, 50], &[10], 3, 1, false).unwrap();
        assert_eq!(
            a,
            stratified_subsets(&[50, 50], &[10], 3, 1, false).unwrap()
        );
        assert_ne!(
            a,
            stratified_subsets(&[50, 50], &[10], 3, 2, false).unwrap()
        );
    }

    #[test]
    fn infeasible_sizes() {
        assert_eq!(
            stratified_subsets(&[30, 20], &[25], 1, 0, false).unwrap_err(),
            Error::InsufficientData {
                requested: 25,
                available: 20
            }
        );
        let plan = stratified_subsets(&[30, 20], &[25], 1, 0, true).unwrap();
        assert_eq!(plan.get(0, 0)[1].len(), 25);
    }

    #[test]
    fn split_is_a_partition() {
        let (a, b) = disjoint_split(20, 8, 3).unwrap();
        assert_eq!((a.len(), b.len()), (8, 12));
        let all: BTreeSet<usize> = a.iter().chain(&b).copied().collect();
        assert_eq!(all.len(), 20);
        assert!(disjoint_split(5, 6, 0).is_err());
    }
}
