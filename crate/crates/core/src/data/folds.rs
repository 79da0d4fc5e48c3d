use rand::seq::SliceRandom;

use crate::error::DataError;
use crate::rng::seeded;

/// Partition of `0..n` into `k` folds for cross-fitting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    k: usize,
    assignment: Vec<usize>,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Ascending indices belonging to `fold`.
    pub fn in_fold(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignment[i] == fold).collect()
    }

    /// Ascending indices outside `fold`.
    pub fn out_of_fold(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles `0..n` with the seeded generator and deals the permutation
/// round-robin into `k` folds, so fold sizes differ by at most one.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment, DataError> {
    if k < 2 || k > n {
        return Err(DataError::InvalidFoldCount { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed));
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % k;
    }
    Ok(FoldAssignment { k, assignment })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn even_split() {
        let f = make_folds(4, 2, 0).unwrap();
        assert_eq!(f.sizes(), vec![2, 2]);
    }

    #[test]
    fn remainder_split() {
        let f = make_folds(5, 2, 3).unwrap();
        let mut s = f.sizes();
        s.sort();
        assert_eq!(s, vec![2, 3]);
    }

    #[test]
    fn deterministic() {
        assert_eq!(make_folds(100, 2, 7).unwrap(), make_folds(100, 2, 7).unwrap());
        assert_ne!(make_folds(100, 2, 7).unwrap(), make_folds(100, 2, 8).unwrap());
    }

    #[test]
    fn invalid_counts() {
        assert_eq!(make_folds(5, 1, 0), Err(DataError::InvalidFoldCount { n: 5, k: 1 }));
        assert_eq!(make_folds(3, 4, 0), Err(DataError::InvalidFoldCount { n: 3, k: 4 }));
    }

    proptest! {
        #[test]
        fn folds_partition_indices(n in 2usize..300, k_raw in 2usize..12, seed in any::<u64>()) {
            let k = k_raw.min(n);
            let f = make_folds(n, k, seed).unwrap();
            let sizes = f.sizes();
            let (lo, hi) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
            prop_assert!(lo >= 1 && hi - lo <= 1);
            let mut all: Vec<usize> = (0..k).flat_map(|j| f.in_fold(j)).collect();
            all.sort();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}
