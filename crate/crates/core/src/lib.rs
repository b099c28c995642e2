//! Rigid-body dynamics for kinematic trees, solved three ways:
//!
//! * classic recursive algorithms (Newton-Euler inverse dynamics, the
//!   articulated-body algorithm for forward dynamics),
//! * a block-sparse linear system assembled from the per-link Newton-Euler
//!   constraints plus measurement rows, solved by permuted sparse LU,
//! * a generic estimation layer that accepts arbitrary sensor distributions
//!   declared as measurement specs and decides well-posedness before solving.
//!
//! The sparse route splits work into an offline phase (worst-case sparsity
//! pattern, fill-minimizing row/column permutations, symbolic factorization)
//! and an online phase (numeric refactorization plus triangular solves), so
//! per-state solves stay O(N_B) for the classical problems.

pub mod assembly;
pub mod classic;
pub mod estimate;
pub mod flops;
pub mod indexing;
pub mod model;
pub mod sparse;
pub mod spatial;

pub use assembly::{ConstraintSystem, MeasurementSpec};
pub use classic::{aba, rnea, DynVars};
pub use estimate::{execute, plan, Problem, SolverPlan, Wellposedness};
pub use flops::FlopCount;
pub use indexing::{ConstraintId, Permutation, VarId};
pub use model::{KinematicState, KinematicTree};
pub use sparse::{CscMatrix, OrderingPlan, SparseLuFactors, SparsityPattern};
pub use spatial::{SpatialInertia, SpatialTransform, SpatialVec};
