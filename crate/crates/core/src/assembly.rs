//! Block constraint-system assembly.
//!
//! Builds the per-link Newton-Euler row blocks and right-hand sides, the
//! measurement rows for the inverse/forward dynamics cases, and generic
//! sensor rows declared through a [`MeasurementSpec`]. Produces both
//! numeric instances (scalar CSC at the sparse-kernel boundary) and the
//! configuration-independent worst-case sparsity pattern used by the
//! offline analysis.
//!
//! Sign conventions: every system satisfies `D d + b = 0`. The external
//! force enters the force balance as `-fx_i`, and measurement rows carry
//! identity (or selector) blocks with `b = -y`.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::classic::DynVars;
use crate::indexing::{
    all_vars, ConKind, ConstraintId, Permutation, PermutationError, VarId, VarKind,
};
use crate::model::{KinematicState, KinematicTree};
use crate::sparse::{CscMatrix, SparseError, SparsityPattern};
use crate::spatial::SpatialVec;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("system is not square: {rows} x {cols} scalar")]
    NonSquare { rows: usize, cols: usize },
    #[error(transparent)]
    Permutation(#[from] PermutationError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
}

/// The block matrix `{D_{c,d}}` and vector `{b_c}`: rows are constraint
/// blocks, columns are variable blocks, entries are small dense matrices.
/// Only non-null blocks are stored.
#[derive(Debug, Clone)]
pub struct ConstraintSystem {
    vars: Vec<VarId>,
    var_widths: Vec<usize>,
    cons: Vec<ConstraintId>,
    con_heights: Vec<usize>,
    blocks: BTreeMap<(ConstraintId, VarId), DMatrix<f64>>,
    rhs: BTreeMap<ConstraintId, DVector<f64>>,
}

impl ConstraintSystem {
    fn empty(vars: Vec<VarId>) -> Self {
        let var_widths = vars.iter().map(|v| v.width()).collect();
        ConstraintSystem {
            vars,
            var_widths,
            cons: Vec::new(),
            con_heights: Vec::new(),
            blocks: BTreeMap::new(),
            rhs: BTreeMap::new(),
        }
    }

    fn push_row(&mut self, id: ConstraintId, height: usize) {
        debug_assert!(!self.cons.contains(&id), "duplicate constraint row {id:?}");
        self.cons.push(id);
        self.con_heights.push(height);
    }

    fn set_block(&mut self, con: ConstraintId, var: VarId, block: DMatrix<f64>) {
        let h = self.height_of(&con).expect("row must exist");
        let w = var.width();
        assert_eq!(
            (block.nrows(), block.ncols()),
            (h, w),
            "block shape mismatch at ({con:?}, {var:?})"
        );
        self.blocks.insert((con, var), block);
    }

    fn set_rhs(&mut self, con: ConstraintId, b: DVector<f64>) {
        let h = self.height_of(&con).expect("row must exist");
        assert_eq!(b.len(), h, "rhs length mismatch at {con:?}");
        self.rhs.insert(con, b);
    }

    pub fn vars(&self) -> &[VarId] {
        &self.vars
    }

    pub fn cons(&self) -> &[ConstraintId] {
        &self.cons
    }

    pub fn height_of(&self, con: &ConstraintId) -> Option<usize> {
        self.cons
            .iter()
            .position(|c| c == con)
            .map(|p| self.con_heights[p])
    }

    pub fn block(&self, con: &ConstraintId, var: &VarId) -> Option<&DMatrix<f64>> {
        self.blocks.get(&(*con, *var))
    }

    /// Non-null blocks of one constraint row.
    pub fn row_blocks(
        &self,
        con: &ConstraintId,
    ) -> impl Iterator<Item = (&VarId, &DMatrix<f64>)> {
        let con = *con;
        self.blocks
            .iter()
            .filter(move |((c, _), _)| *c == con)
            .map(|((_, v), m)| (v, m))
    }

    pub fn rhs_of(&self, con: &ConstraintId) -> Option<&DVector<f64>> {
        self.rhs.get(con)
    }

    pub fn scalar_shape(&self) -> (usize, usize) {
        (
            self.con_heights.iter().sum(),
            self.var_widths.iter().sum(),
        )
    }

    pub fn is_square(&self) -> bool {
        let (r, c) = self.scalar_shape();
        r == c
    }

    pub fn require_square(&self) -> Result<(), AssemblyError> {
        let (rows, cols) = self.scalar_shape();
        if rows != cols {
            return Err(AssemblyError::NonSquare { rows, cols });
        }
        Ok(())
    }

    /// Row/column permutations in assembly (natural) order.
    pub fn natural_perms(&self) -> (Permutation<ConstraintId>, Permutation<VarId>) {
        (
            Permutation::new(self.cons.clone(), self.con_heights.clone()).unwrap(),
            Permutation::new(self.vars.clone(), self.var_widths.clone()).unwrap(),
        )
    }

    /// Scalar CSC matrix and rhs under the given block permutations.
    /// Entries that are exactly zero are structural zeros and are skipped.
    pub fn to_csc(
        &self,
        p: &Permutation<ConstraintId>,
        q: &Permutation<VarId>,
    ) -> Result<(CscMatrix, Vec<f64>), AssemblyError> {
        p.check_covers(&self.cons)?;
        q.check_covers(&self.vars)?;
        let nrows = p.scalar_dim();
        let ncols = q.scalar_dim();
        let mut triplets = Vec::new();
        for ((con, var), block) in &self.blocks {
            let row_base = p.scalar_range(con).unwrap().start;
            let col_base = q.scalar_range(var).unwrap().start;
            for c in 0..block.ncols() {
                for r in 0..block.nrows() {
                    let v = block[(r, c)];
                    if v != 0.0 {
                        triplets.push((row_base + r, col_base + c, v));
                    }
                }
            }
        }
        let mut b = vec![0.0; nrows];
        for (con, vec) in &self.rhs {
            let base = p.scalar_range(con).unwrap().start;
            for (k, v) in vec.iter().enumerate() {
                b[base + k] = *v;
            }
        }
        Ok((CscMatrix::from_triplets(nrows, ncols, &triplets)?, b))
    }

    /// Dense form in natural order, for small oracles.
    pub fn to_dense(&self) -> (DMatrix<f64>, DVector<f64>) {
        let (p, q) = self.natural_perms();
        let (csc, b) = self.to_csc(&p, &q).unwrap();
        (csc.to_dense(), DVector::from_vec(b))
    }

    /// `max |D d + b|` over all scalar rows, for residual oracles.
    pub fn residual_inf(&self, d: &DynVars) -> f64 {
        let mut worst: f64 = 0.0;
        for (pos, con) in self.cons.iter().enumerate() {
            let h = self.con_heights[pos];
            let mut r = self
                .rhs
                .get(con)
                .cloned()
                .unwrap_or_else(|| DVector::zeros(h));
            for (var, block) in self.row_blocks(con) {
                let dv = DVector::from_vec(d.block(var));
                r += block * dv;
            }
            worst = worst.max(r.amax());
        }
        worst
    }
}

fn neg_identity(n: usize) -> DMatrix<f64> {
    -DMatrix::<f64>::identity(n, n)
}

fn vec6_col(v: &SpatialVec) -> DVector<f64> {
    DVector::from_iterator(6, v.to_vec6().iter().copied())
}

fn mat6_block(m: &nalgebra::Matrix6<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(6, 6, |r, c| m[(r, c)])
}

/// Assemble the Newton-Euler rows (the base constraint set) for one
/// kinematic state: acceleration recursion, force balance, and torque
/// projection per link, with gravity folded into the root rows' rhs.
pub fn assemble_ne(tree: &KinematicTree, kin: &KinematicState) -> ConstraintSystem {
    let n = tree.n_links();
    let mut sys = ConstraintSystem::empty(all_vars(n));
    let a0 = tree.base_acceleration();

    for i in 1..=n {
        let link = tree.link(i);
        let s = link.joint.motion_subspace().to_vec6();
        let x = kin.x(i);

        let ca = ConstraintId::new(ConKind::NeA, i);
        sys.push_row(ca, 6);
        sys.set_block(ca, VarId::new(VarKind::A, i), neg_identity(6));
        sys.set_block(
            ca,
            VarId::new(VarKind::Qdd, i),
            DMatrix::from_fn(6, 1, |r, _| s[r]),
        );
        if link.parent == 0 {
            sys.set_rhs(ca, vec6_col(&(x.apply_motion(&a0) + *kin.bias_c(i))));
        } else {
            sys.set_block(
                ca,
                VarId::new(VarKind::A, link.parent),
                mat6_block(&x.to_motion_matrix()),
            );
            sys.set_rhs(ca, vec6_col(kin.bias_c(i)));
        }

        let cf = ConstraintId::new(ConKind::NeF, i);
        sys.push_row(cf, 6);
        sys.set_block(cf, VarId::new(VarKind::F, i), neg_identity(6));
        sys.set_block(
            cf,
            VarId::new(VarKind::A, i),
            mat6_block(&link.inertia.to_matrix6()),
        );
        sys.set_block(cf, VarId::new(VarKind::Fx, i), neg_identity(6));
        for &j in tree.children(i) {
            // ^i X*_j is the transpose of the stored motion form ^j X_i
            sys.set_block(
                cf,
                VarId::new(VarKind::F, j),
                mat6_block(&kin.x(j).to_motion_matrix().transpose()),
            );
        }
        sys.set_rhs(cf, vec6_col(kin.bias_nu(i)));

        let ct = ConstraintId::new(ConKind::NeTau, i);
        sys.push_row(ct, 1);
        sys.set_block(ct, VarId::new(VarKind::Tau, i), neg_identity(1));
        sys.set_block(
            ct,
            VarId::new(VarKind::F, i),
            DMatrix::from_fn(1, 6, |_, c| s[c]),
        );
    }
    sys
}

/// Append the inverse-dynamics measurement rows (known joint accelerations
/// and external forces), yielding a square system.
pub fn extend_id(
    sys: &ConstraintSystem,
    y_qdd: &[f64],
    y_fx: &[SpatialVec],
) -> Result<ConstraintSystem, AssemblyError> {
    let n = y_qdd.len();
    if y_fx.len() != n {
        return Err(AssemblyError::Dimension(format!(
            "y_qdd has {n} entries, y_fx has {}",
            y_fx.len()
        )));
    }
    let mut out = sys.clone();
    for i in 1..=n {
        let cfx = ConstraintId::new(ConKind::MeasFx, i);
        out.push_row(cfx, 6);
        out.set_block(cfx, VarId::new(VarKind::Fx, i), DMatrix::identity(6, 6));
        out.set_rhs(cfx, -vec6_col(&y_fx[i - 1]));

        let cq = ConstraintId::new(ConKind::MeasQdd, i);
        out.push_row(cq, 1);
        out.set_block(cq, VarId::new(VarKind::Qdd, i), DMatrix::identity(1, 1));
        out.set_rhs(cq, DVector::from_element(1, -y_qdd[i - 1]));
    }
    Ok(out)
}

/// Append the forward-dynamics measurement rows (known joint torques and
/// external forces), yielding a square system.
pub fn extend_fd(
    sys: &ConstraintSystem,
    y_tau: &[f64],
    y_fx: &[SpatialVec],
) -> Result<ConstraintSystem, AssemblyError> {
    let n = y_tau.len();
    if y_fx.len() != n {
        return Err(AssemblyError::Dimension(format!(
            "y_tau has {n} entries, y_fx has {}",
            y_fx.len()
        )));
    }
    let mut out = sys.clone();
    for i in 1..=n {
        let cfx = ConstraintId::new(ConKind::MeasFx, i);
        out.push_row(cfx, 6);
        out.set_block(cfx, VarId::new(VarKind::Fx, i), DMatrix::identity(6, 6));
        out.set_rhs(cfx, -vec6_col(&y_fx[i - 1]));

        let ct = ConstraintId::new(ConKind::MeasTau, i);
        out.push_row(ct, 1);
        out.set_block(ct, VarId::new(VarKind::Tau, i), DMatrix::identity(1, 1));
        out.set_rhs(ct, DVector::from_element(1, -y_tau[i - 1]));
    }
    Ok(out)
}

/// One generic measurement: a selector applied to one link's variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureKind {
    /// Joint acceleration, 1 row.
    Qdd,
    /// Full external wrench, 6 rows.
    Fx,
    /// Joint torque, 1 row.
    Tau,
    /// Three-axis load cell: `Y^T fx = y` with the four-load-cell selector,
    /// 3 rows.
    LoadCell3,
    /// Slippery-surface load cell: `Y^T fx = y` with the five-column
    /// selector (only the z-force component of the wrench stays
    /// unmeasured), 5 rows.
    Slippery,
}

impl MeasureKind {
    pub fn rows(&self) -> usize {
        match self {
            MeasureKind::Qdd | MeasureKind::Tau => 1,
            MeasureKind::Fx => 6,
            MeasureKind::LoadCell3 => 3,
            MeasureKind::Slippery => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasureEntry {
    pub kind: MeasureKind,
    pub link: usize,
}

/// Declarative sensor distribution: an ordered list of measurement entries.
/// New sensor layouts need no code changes, only a different spec.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MeasurementSpec {
    pub entries: Vec<MeasureEntry>,
}

impl MeasurementSpec {
    pub fn new(entries: Vec<MeasureEntry>) -> Self {
        MeasurementSpec { entries }
    }

    /// Total scalar measurement rows.
    pub fn scalar_rows(&self) -> usize {
        self.entries.iter().map(|e| e.kind.rows()).sum()
    }

    /// Every entry must reference an existing link (1..=n_links).
    pub fn validate(&self, n_links: usize) -> Result<(), AssemblyError> {
        for (k, entry) in self.entries.iter().enumerate() {
            if entry.link == 0 || entry.link > n_links {
                return Err(AssemblyError::Dimension(format!(
                    "measurement entry {k} references link {} but the tree has {n_links} links",
                    entry.link
                )));
            }
        }
        Ok(())
    }

    /// The inverse-dynamics sensor set as a spec (full fx + qdd coverage).
    pub fn id_equivalent(n_links: usize) -> Self {
        let mut entries = Vec::new();
        for i in 1..=n_links {
            entries.push(MeasureEntry { kind: MeasureKind::Fx, link: i });
            entries.push(MeasureEntry { kind: MeasureKind::Qdd, link: i });
        }
        MeasurementSpec { entries }
    }

    /// Two-feet sensor set: joint accelerations everywhere, known external
    /// forces on interior links, the given load-cell type plus an ankle
    /// joint-torque sensor at the extremal links (`1` and `n_links`).
    pub fn two_feet(n_links: usize, foot_cell: MeasureKind) -> Self {
        let mut entries = Vec::new();
        for i in 1..=n_links {
            entries.push(MeasureEntry { kind: MeasureKind::Qdd, link: i });
        }
        for i in 2..n_links {
            entries.push(MeasureEntry { kind: MeasureKind::Fx, link: i });
        }
        for foot in [1, n_links] {
            entries.push(MeasureEntry { kind: foot_cell, link: foot });
            entries.push(MeasureEntry { kind: MeasureKind::Tau, link: foot });
        }
        MeasurementSpec { entries }
    }
}

/// The four-load-cell selector `Y` (6x3): measured wrench components in the
/// foot frame. Column order matches the measured vector `y`.
pub fn loadcell_y() -> DMatrix<f64> {
    let mut y = DMatrix::zeros(6, 3);
    y[(2, 2)] = 1.0;
    y[(3, 0)] = 1.0;
    y[(4, 1)] = 1.0;
    y
}

/// The four-load-cell complement `H` (6x3): unmeasured wrench components.
pub fn loadcell_h() -> DMatrix<f64> {
    let mut h = DMatrix::zeros(6, 3);
    h[(0, 0)] = 1.0;
    h[(1, 1)] = 1.0;
    h[(5, 2)] = 1.0;
    h
}

/// The slippery-surface selector `Y` (6x5): all wrench components except
/// the last are measured.
pub fn slippery_y() -> DMatrix<f64> {
    let mut y = DMatrix::zeros(6, 5);
    for k in 0..5 {
        y[(k, k)] = 1.0;
    }
    y
}

/// The slippery-surface complement `H = e_6` (6x1).
pub fn slippery_h() -> DMatrix<f64> {
    let mut h = DMatrix::zeros(6, 1);
    h[(5, 0)] = 1.0;
    h
}

fn entry_selector(entry: &MeasureEntry) -> (VarId, DMatrix<f64>) {
    match entry.kind {
        MeasureKind::Qdd => (
            VarId::new(VarKind::Qdd, entry.link),
            DMatrix::identity(1, 1),
        ),
        MeasureKind::Tau => (
            VarId::new(VarKind::Tau, entry.link),
            DMatrix::identity(1, 1),
        ),
        MeasureKind::Fx => (
            VarId::new(VarKind::Fx, entry.link),
            DMatrix::identity(6, 6),
        ),
        MeasureKind::LoadCell3 => (
            VarId::new(VarKind::Fx, entry.link),
            loadcell_y().transpose(),
        ),
        MeasureKind::Slippery => (
            VarId::new(VarKind::Fx, entry.link),
            slippery_y().transpose(),
        ),
    }
}

/// Append generic measurement rows. The result may be non-square; that is
/// reported by `require_square` / the well-posedness checker, not here.
pub fn extend_generic(
    sys: &ConstraintSystem,
    spec: &MeasurementSpec,
    values: &[DVector<f64>],
) -> Result<ConstraintSystem, AssemblyError> {
    if values.len() != spec.entries.len() {
        return Err(AssemblyError::Dimension(format!(
            "spec has {} entries, {} value vectors supplied",
            spec.entries.len(),
            values.len()
        )));
    }
    spec.validate(sys.vars.iter().map(|v| v.link).max().unwrap_or(0))?;
    let mut out = sys.clone();
    for (k, (entry, y)) in spec.entries.iter().zip(values).enumerate() {
        let h = entry.kind.rows();
        if y.len() != h {
            return Err(AssemblyError::Dimension(format!(
                "entry {k} expects {h} measured values, got {}",
                y.len()
            )));
        }
        let con = ConstraintId::new(ConKind::MeasGeneric, k + 1);
        out.push_row(con, h);
        let (var, sel) = entry_selector(entry);
        out.set_block(con, var, sel);
        out.set_rhs(con, -y);
    }
    Ok(out)
}

/// Which measurement rows extend the Newton-Euler base, for pattern
/// generation and planning.
#[derive(Debug, Clone)]
pub enum RowSet {
    /// Base Newton-Euler rows only.
    Base,
    /// Newton-Euler plus inverse-dynamics measurements.
    Id,
    /// Newton-Euler plus forward-dynamics measurements.
    Fd,
    /// Newton-Euler plus a generic sensor distribution.
    Generic(MeasurementSpec),
}

/// Block-granular worst-case sparsity pattern.
///
/// Transform blocks are conservatively dense in their rotation and
/// translation-coupled 3x3 sub-blocks but keep their structural zero
/// corner; inertia and selector blocks use their exact patterns;
/// joint-subspace blocks use the exact single-row pattern when the axis is
/// a coordinate axis, otherwise all three angular (or linear) slots.
#[derive(Debug, Clone)]
pub struct BlockPattern {
    cons: Vec<(ConstraintId, usize)>,
    vars: Vec<(VarId, usize)>,
    blocks: BTreeMap<(ConstraintId, VarId), BTreeSet<(usize, usize)>>,
}

impl BlockPattern {
    pub fn cons(&self) -> &[(ConstraintId, usize)] {
        &self.cons
    }

    pub fn vars(&self) -> &[(VarId, usize)] {
        &self.vars
    }

    pub fn block_cells(&self, con: &ConstraintId, var: &VarId) -> Option<&BTreeSet<(usize, usize)>> {
        self.blocks.get(&(*con, *var))
    }

    pub fn natural_perms(&self) -> (Permutation<ConstraintId>, Permutation<VarId>) {
        (
            Permutation::new(
                self.cons.iter().map(|(c, _)| *c).collect(),
                self.cons.iter().map(|(_, h)| *h).collect(),
            )
            .unwrap(),
            Permutation::new(
                self.vars.iter().map(|(v, _)| *v).collect(),
                self.vars.iter().map(|(_, w)| *w).collect(),
            )
            .unwrap(),
        )
    }

    /// Scalar pattern under the given block permutations.
    pub fn scalar(
        &self,
        p: &Permutation<ConstraintId>,
        q: &Permutation<VarId>,
    ) -> Result<SparsityPattern, AssemblyError> {
        let con_ids: Vec<ConstraintId> = self.cons.iter().map(|(c, _)| *c).collect();
        let var_ids: Vec<VarId> = self.vars.iter().map(|(v, _)| *v).collect();
        p.check_covers(&con_ids)?;
        q.check_covers(&var_ids)?;
        let mut pattern = SparsityPattern::new(p.scalar_dim(), q.scalar_dim());
        for ((con, var), cells) in &self.blocks {
            let row_base = p.scalar_range(con).unwrap().start;
            let col_base = q.scalar_range(var).unwrap().start;
            for &(r, c) in cells {
                pattern.insert(row_base + r, col_base + c);
            }
        }
        Ok(pattern)
    }

    pub fn scalar_natural(&self) -> SparsityPattern {
        let (p, q) = self.natural_perms();
        self.scalar(&p, &q).unwrap()
    }
}

fn dense_cells(rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Vec<(usize, usize)> {
    let mut cells = Vec::new();
    for r in rows {
        for c in cols.clone() {
            cells.push((r, c));
        }
    }
    cells
}

fn motion_x_cells() -> BTreeSet<(usize, usize)> {
    let mut cells = BTreeSet::new();
    cells.extend(dense_cells(0..3, 0..3));
    cells.extend(dense_cells(3..6, 0..3));
    cells.extend(dense_cells(3..6, 3..6));
    cells
}

fn force_x_cells() -> BTreeSet<(usize, usize)> {
    let mut cells = BTreeSet::new();
    cells.extend(dense_cells(0..3, 0..3));
    cells.extend(dense_cells(0..3, 3..6));
    cells.extend(dense_cells(3..6, 3..6));
    cells
}

fn diag_cells(n: usize) -> BTreeSet<(usize, usize)> {
    (0..n).map(|k| (k, k)).collect()
}

fn exact_cells(m: &DMatrix<f64>) -> BTreeSet<(usize, usize)> {
    let mut cells = BTreeSet::new();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if m[(r, c)] != 0.0 {
                cells.insert((r, c));
            }
        }
    }
    cells
}

fn is_coordinate_axis(axis: &crate::spatial::Vec3) -> Option<usize> {
    let mut nonzero = None;
    for k in 0..3 {
        if axis[k].abs() > 1e-12 {
            if nonzero.is_some() {
                return None;
            }
            nonzero = Some(k);
        }
    }
    nonzero
}

fn subspace_cells(tree: &KinematicTree, i: usize) -> BTreeSet<(usize, usize)> {
    let link = tree.link(i);
    let base = match link.joint.kind {
        crate::model::JointKind::Revolute => 0,
        crate::model::JointKind::Prismatic => 3,
    };
    match is_coordinate_axis(&link.joint.axis) {
        Some(k) => [(base + k, 0)].into_iter().collect(),
        None => (base..base + 3).map(|r| (r, 0)).collect(),
    }
}

/// Worst-case sparsity pattern of the chosen row set, at block granularity.
pub fn worst_case_pattern(tree: &KinematicTree, rows: &RowSet) -> BlockPattern {
    let n = tree.n_links();
    let vars: Vec<(VarId, usize)> = all_vars(n).into_iter().map(|v| (v, v.width())).collect();
    let mut cons: Vec<(ConstraintId, usize)> = Vec::new();
    let mut blocks: BTreeMap<(ConstraintId, VarId), BTreeSet<(usize, usize)>> = BTreeMap::new();

    for i in 1..=n {
        let ca = ConstraintId::new(ConKind::NeA, i);
        cons.push((ca, 6));
        blocks.insert((ca, VarId::new(VarKind::A, i)), diag_cells(6));
        blocks.insert((ca, VarId::new(VarKind::Qdd, i)), subspace_cells(tree, i));
        if tree.parent(i) != 0 {
            blocks.insert(
                (ca, VarId::new(VarKind::A, tree.parent(i))),
                motion_x_cells(),
            );
        }

        let cf = ConstraintId::new(ConKind::NeF, i);
        cons.push((cf, 6));
        blocks.insert((cf, VarId::new(VarKind::F, i)), diag_cells(6));
        blocks.insert(
            (cf, VarId::new(VarKind::A, i)),
            exact_cells(&mat6_block(&tree.inertia(i).to_matrix6())),
        );
        blocks.insert((cf, VarId::new(VarKind::Fx, i)), diag_cells(6));
        for &j in tree.children(i) {
            blocks.insert((cf, VarId::new(VarKind::F, j)), force_x_cells());
        }

        let ct = ConstraintId::new(ConKind::NeTau, i);
        cons.push((ct, 1));
        blocks.insert((ct, VarId::new(VarKind::Tau, i)), diag_cells(1));
        blocks.insert(
            (ct, VarId::new(VarKind::F, i)),
            subspace_cells(tree, i)
                .into_iter()
                .map(|(r, _)| (0, r))
                .collect(),
        );
    }

    match rows {
        RowSet::Base => {}
        RowSet::Id => {
            for i in 1..=n {
                let cfx = ConstraintId::new(ConKind::MeasFx, i);
                cons.push((cfx, 6));
                blocks.insert((cfx, VarId::new(VarKind::Fx, i)), diag_cells(6));
                let cq = ConstraintId::new(ConKind::MeasQdd, i);
                cons.push((cq, 1));
                blocks.insert((cq, VarId::new(VarKind::Qdd, i)), diag_cells(1));
            }
        }
        RowSet::Fd => {
            for i in 1..=n {
                let cfx = ConstraintId::new(ConKind::MeasFx, i);
                cons.push((cfx, 6));
                blocks.insert((cfx, VarId::new(VarKind::Fx, i)), diag_cells(6));
                let ct = ConstraintId::new(ConKind::MeasTau, i);
                cons.push((ct, 1));
                blocks.insert((ct, VarId::new(VarKind::Tau, i)), diag_cells(1));
            }
        }
        RowSet::Generic(spec) => {
            for (k, entry) in spec.entries.iter().enumerate() {
                let con = ConstraintId::new(ConKind::MeasGeneric, k + 1);
                cons.push((con, entry.kind.rows()));
                let (var, sel) = entry_selector(entry);
                blocks.insert((con, var), exact_cells(&sel));
            }
        }
    }

    BlockPattern { cons, vars, blocks }
}

/// Write `D` in Matrix Market form and `b` as plain text (one value per
/// line), under the given block permutations.
pub fn export_system<WD: std::io::Write, WB: std::io::Write>(
    sys: &ConstraintSystem,
    p: &Permutation<ConstraintId>,
    q: &Permutation<VarId>,
    d_out: &mut WD,
    b_out: &mut WB,
) -> Result<(), AssemblyError> {
    let (d, b) = sys.to_csc(p, q)?;
    crate::sparse::market::write_matrix_market(&d, d_out)?;
    for v in b {
        writeln!(b_out, "{v}").map_err(SparseError::Io)?;
    }
    Ok(())
}
