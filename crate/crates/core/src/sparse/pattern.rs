//! Boolean sparsity patterns.

use std::collections::BTreeSet;

/// Set of possibly-nonzero scalar positions of a matrix. Worst-case
/// patterns are unions over all configurations, so a pattern is a superset
/// of the numeric pattern of any assembled instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    nrows: usize,
    ncols: usize,
    positions: BTreeSet<(usize, usize)>,
}

impl SparsityPattern {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        SparsityPattern {
            nrows,
            ncols,
            positions: BTreeSet::new(),
        }
    }

    pub fn dense(n: usize) -> Self {
        let mut p = SparsityPattern::new(n, n);
        for r in 0..n {
            for c in 0..n {
                p.insert(r, c);
            }
        }
        p
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn is_square(&self) -> bool {
        self.nrows == self.ncols
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn insert(&mut self, r: usize, c: usize) {
        assert!(r < self.nrows && c < self.ncols, "position out of bounds");
        self.positions.insert((r, c));
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        self.positions.contains(&(r, c))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.positions.iter().copied()
    }

    /// `true` if every position of `other` is in `self`.
    pub fn contains_pattern(&self, other: &SparsityPattern) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && other.positions.is_subset(&self.positions)
    }

    /// Strictly lower triangular (no entry above the diagonal) with every
    /// diagonal position present.
    pub fn is_lower_triangular_with_full_diagonal(&self) -> bool {
        if !self.is_square() {
            return false;
        }
        if self.positions.iter().any(|&(r, c)| c > r) {
            return false;
        }
        (0..self.nrows).all(|k| self.positions.contains(&(k, k)))
    }

    /// Apply scalar permutations: position `(r, c)` moves to
    /// `(row_to_new[r], col_to_new[c])`.
    pub fn permuted(&self, row_to_new: &[usize], col_to_new: &[usize]) -> SparsityPattern {
        assert_eq!(row_to_new.len(), self.nrows);
        assert_eq!(col_to_new.len(), self.ncols);
        let mut p = SparsityPattern::new(self.nrows, self.ncols);
        for &(r, c) in &self.positions {
            p.insert(row_to_new[r], col_to_new[c]);
        }
        p
    }
}
