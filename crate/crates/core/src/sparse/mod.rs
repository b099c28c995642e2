//! Scalar sparse kernel: compressed sparse column matrices, structural
//! analysis with a fill-minimizing ordering, permuted sparse LU
//! factorization with frozen pivots, triangular substitutions, and flop
//! accounting. Matrix Market import/export lives in [`market`].
//!
//! The kernel follows an offline/online split: [`analyze`] works on a
//! boolean worst-case sparsity pattern and freezes row/column permutations
//! plus the symbolic structure of L and U; [`factorize`] and
//! [`SparseLuFactors::solve`] then do the per-instance numeric work without
//! any runtime pivot decisions.

mod csc;
mod lu;
pub mod market;
mod ordering;
mod pattern;

pub use csc::CscMatrix;
pub use lu::{
    dense_lu_flops, dense_solve_flops, factorize, factorize_with_recovery, SparseLuFactors,
    PIVOT_REL_TOL, RECOVERY_ATTEMPTS,
};
pub use ordering::{analyze, analyze_avoiding, analyze_with_order, triangular_order, OrderingPlan};
pub use pattern::SparsityPattern;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SparseError {
    #[error("matrix is structurally singular: {0} unmatched row(s), first few rows {1:?}, cols {2:?}")]
    StructurallySingular(usize, Vec<usize>, Vec<usize>),
    #[error("numerically singular pivot at elimination step {step}: |{pivot:.3e}| < 1e-12 * {col_max:.3e}")]
    NumericallySingularPivot { step: usize, pivot: f64, col_max: f64 },
    #[error("matrix entry ({row}, {col}) falls outside the analyzed pattern")]
    PatternMismatch { row: usize, col: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("matrix market parse error at line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
