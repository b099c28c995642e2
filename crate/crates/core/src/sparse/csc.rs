//! Compressed sparse column storage.

use super::pattern::SparsityPattern;
use super::SparseError;

/// Sparse matrix in compressed sparse column form. Row indices are strictly
/// increasing within each column; explicitly stored zeros are permitted
/// (the factorization never drops entries that compute to zero).
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    colptr: Vec<usize>,
    rowind: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    /// Build from triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self, SparseError> {
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(SparseError::Shape(format!(
                    "triplet ({r}, {c}) out of bounds for {nrows}x{ncols}"
                )));
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (c, r));
        let mut colptr = Vec::with_capacity(ncols + 1);
        let mut rowind = Vec::with_capacity(sorted.len());
        let mut values = Vec::with_capacity(sorted.len());
        colptr.push(0);
        let mut col = 0;
        for (r, c, v) in sorted {
            while col < c {
                colptr.push(rowind.len());
                col += 1;
            }
            if let Some(&last) = rowind.last() {
                if colptr[col] < rowind.len() && last == r {
                    *values.last_mut().unwrap() += v;
                    continue;
                }
            }
            rowind.push(r);
            values.push(v);
        }
        while col < ncols {
            colptr.push(rowind.len());
            col += 1;
        }
        Ok(CscMatrix { nrows, ncols, colptr, rowind, values })
    }

    pub fn identity(n: usize) -> Self {
        CscMatrix {
            nrows: n,
            ncols: n,
            colptr: (0..=n).collect(),
            rowind: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.rowind.len()
    }

    /// `(row, value)` pairs of column `c`, rows ascending.
    pub fn col(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.colptr[c]..self.colptr[c + 1];
        self.rowind[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |c| self.col(c).map(move |(r, v)| (r, c, v)))
    }

    pub fn pattern(&self) -> SparsityPattern {
        let mut p = SparsityPattern::new(self.nrows, self.ncols);
        for (r, c, _) in self.triplets() {
            p.insert(r, c);
        }
        p
    }

    /// Nonzero pattern ignoring stored zeros.
    pub fn numeric_pattern(&self) -> SparsityPattern {
        let mut p = SparsityPattern::new(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            if v != 0.0 {
                p.insert(r, c);
            }
        }
        p
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for (c, &xc) in x.iter().enumerate() {
            if xc != 0.0 {
                for (r, v) in self.col(c) {
                    y[r] += v * xc;
                }
            }
        }
        y
    }

    /// Infinity norm (max absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        let mut row_sums = vec![0.0; self.nrows];
        for (r, _, v) in self.triplets() {
            row_sums[r] += v.abs();
        }
        row_sums.into_iter().fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }
}
