//! Variable and constraint identifiers, block permutations, and the
//! classic orderings that make the inverse- and forward-dynamics systems
//! (block) triangular.
//!
//! Links are indexed 1..=n_links throughout; body 0 is the fixed base and
//! never appears as a variable.

use thiserror::Error;

/// Kind of a dynamic variable attached to a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarKind {
    /// Spatial acceleration (width 6).
    A,
    /// Spatial force transmitted from the parent (width 6).
    F,
    /// Joint torque (width 1).
    Tau,
    /// External spatial force (width 6).
    Fx,
    /// Joint acceleration (width 1).
    Qdd,
}

/// One block variable: a dynamic quantity of one link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId {
    pub kind: VarKind,
    pub link: usize,
}

impl VarId {
    pub fn new(kind: VarKind, link: usize) -> Self {
        VarId { kind, link }
    }

    pub fn width(&self) -> usize {
        match self.kind {
            VarKind::A | VarKind::F | VarKind::Fx => 6,
            VarKind::Tau | VarKind::Qdd => 1,
        }
    }
}

/// Scalar width of the full variable set for `n_links` links:
/// three 6-wide and two 1-wide variables per link.
pub fn total_var_dim(n_links: usize) -> usize {
    20 * n_links
}

/// The full variable set in natural order (all five kinds per link).
pub fn all_vars(n_links: usize) -> Vec<VarId> {
    let mut vars = Vec::with_capacity(5 * n_links);
    for i in 1..=n_links {
        for kind in [VarKind::A, VarKind::F, VarKind::Tau, VarKind::Fx, VarKind::Qdd] {
            vars.push(VarId::new(kind, i));
        }
    }
    vars
}

/// Kind of a constraint row-block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConKind {
    /// Newton-Euler acceleration recursion row (height 6).
    NeA,
    /// Newton-Euler force balance row (height 6).
    NeF,
    /// Joint torque projection row (height 1).
    NeTau,
    /// Measured joint acceleration (height 1).
    MeasQdd,
    /// Measured external force (height 6).
    MeasFx,
    /// Measured joint torque (height 1).
    MeasTau,
    /// Generic measurement row-block; height is spec-dependent.
    MeasGeneric,
}

/// One constraint row-block. For `MeasGeneric` the `link` field is the
/// measurement row-block index, not a link number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConstraintId {
    pub kind: ConKind,
    pub link: usize,
}

impl ConstraintId {
    pub fn new(kind: ConKind, link: usize) -> Self {
        ConstraintId { kind, link }
    }

    /// Height of the row-block; `None` for generic rows whose height is
    /// carried by the measurement spec.
    pub fn fixed_height(&self) -> Option<usize> {
        match self.kind {
            ConKind::NeA | ConKind::NeF | ConKind::MeasFx => Some(6),
            ConKind::NeTau | ConKind::MeasQdd | ConKind::MeasTau => Some(1),
            ConKind::MeasGeneric => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PermutationError {
    #[error("id {0} appears more than once in the permutation")]
    DuplicateId(String),
    #[error("id {0} is not covered by the permutation")]
    MissingId(String),
    #[error("permutation covers {expected} ids but {found} were supplied")]
    SizeMismatch { expected: usize, found: usize },
}

/// An ordered sequence of block ids together with the prefix-sum of their
/// scalar widths. Scalar-level permutation matrices are derived on demand
/// and never stored densely.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation<T: Ord + Copy + std::fmt::Debug> {
    order: Vec<T>,
    widths: Vec<usize>,
    offsets: Vec<usize>,
}

impl<T: Ord + Copy + std::fmt::Debug> Permutation<T> {
    pub fn new(order: Vec<T>, widths: Vec<usize>) -> Result<Self, PermutationError> {
        if order.len() != widths.len() {
            return Err(PermutationError::SizeMismatch {
                expected: order.len(),
                found: widths.len(),
            });
        }
        let mut seen = std::collections::BTreeSet::new();
        for id in &order {
            if !seen.insert(*id) {
                return Err(PermutationError::DuplicateId(format!("{id:?}")));
            }
        }
        let mut offsets = Vec::with_capacity(order.len() + 1);
        let mut acc = 0;
        for w in &widths {
            offsets.push(acc);
            acc += w;
        }
        offsets.push(acc);
        Ok(Permutation { order, widths, offsets })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn scalar_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn order(&self) -> &[T] {
        &self.order
    }

    /// 0-based position of `id` in the block order.
    pub fn position(&self, id: &T) -> Option<usize> {
        self.order.iter().position(|x| x == id)
    }

    /// Scalar index range occupied by `id`.
    pub fn scalar_range(&self, id: &T) -> Option<std::ops::Range<usize>> {
        self.position(id)
            .map(|p| self.offsets[p]..self.offsets[p] + self.widths[p])
    }

    pub fn width_at(&self, pos: usize) -> usize {
        self.widths[pos]
    }

    pub fn offset_at(&self, pos: usize) -> usize {
        self.offsets[pos]
    }

    /// Verify the permutation is a bijection on exactly `ids`.
    pub fn check_covers(&self, ids: &[T]) -> Result<(), PermutationError> {
        if ids.len() != self.order.len() {
            return Err(PermutationError::SizeMismatch {
                expected: ids.len(),
                found: self.order.len(),
            });
        }
        let covered: std::collections::BTreeSet<_> = self.order.iter().collect();
        for id in ids {
            if !covered.contains(id) {
                return Err(PermutationError::MissingId(format!("{id:?}")));
            }
        }
        Ok(())
    }
}

/// Stack per-id data blocks in permutation order.
///
/// `data` maps ids to blocks (any clonable payload); every id in the
/// permutation must be present and no extra ids may remain unused.
pub fn permute_blocks<T, B>(
    perm: &Permutation<T>,
    data: &std::collections::BTreeMap<T, B>,
) -> Result<Vec<B>, PermutationError>
where
    T: Ord + Copy + std::fmt::Debug,
    B: Clone,
{
    if data.len() != perm.len() {
        return Err(PermutationError::SizeMismatch {
            expected: perm.len(),
            found: data.len(),
        });
    }
    perm.order
        .iter()
        .map(|id| {
            data.get(id)
                .cloned()
                .ok_or_else(|| PermutationError::MissingId(format!("{id:?}")))
        })
        .collect()
}

/// Scalar-stack a per-id vector in permutation order.
pub fn permute_vector<T: Ord + Copy + std::fmt::Debug>(
    perm: &Permutation<T>,
    data: &std::collections::BTreeMap<T, Vec<f64>>,
) -> Result<Vec<f64>, PermutationError> {
    let blocks = permute_blocks(perm, data)?;
    let mut out = Vec::with_capacity(perm.scalar_dim());
    for b in blocks {
        out.extend_from_slice(&b);
    }
    Ok(out)
}

/// The triangularizing permutations for the inverse-dynamics system.
///
/// Column order:
/// `[fx_1, qdd_1, ..., fx_n, qdd_n, a_1, ..., a_n, f_n, tau_n, ..., f_1, tau_1]`.
/// Row order pairs each measured block first, then the acceleration rows,
/// then force/torque rows from leaf to root. Under these orderings every
/// non-null block sits on or below the block diagonal, and the diagonal
/// blocks are themselves diagonal matrices, so the scalar matrix is lower
/// triangular with a full diagonal.
pub fn id_permutations(
    n_links: usize,
) -> (Permutation<ConstraintId>, Permutation<VarId>) {
    let mut cols = Vec::with_capacity(5 * n_links);
    let mut rows = Vec::with_capacity(5 * n_links);
    for i in 1..=n_links {
        cols.push(VarId::new(VarKind::Fx, i));
        cols.push(VarId::new(VarKind::Qdd, i));
        rows.push(ConstraintId::new(ConKind::MeasFx, i));
        rows.push(ConstraintId::new(ConKind::MeasQdd, i));
    }
    for i in 1..=n_links {
        cols.push(VarId::new(VarKind::A, i));
        rows.push(ConstraintId::new(ConKind::NeA, i));
    }
    for i in (1..=n_links).rev() {
        cols.push(VarId::new(VarKind::F, i));
        cols.push(VarId::new(VarKind::Tau, i));
        rows.push(ConstraintId::new(ConKind::NeF, i));
        rows.push(ConstraintId::new(ConKind::NeTau, i));
    }
    let col_widths = cols.iter().map(|v| v.width()).collect();
    let row_widths = rows.iter().map(|c| c.fixed_height().unwrap()).collect();
    (
        Permutation::new(rows, row_widths).unwrap(),
        Permutation::new(cols, col_widths).unwrap(),
    )
}

/// The permutations under which the forward-dynamics system becomes block
/// lower triangular after the articulated-body weighting (`W^L D W^R`).
///
/// Column order:
/// `[fx_1, tau_1, ..., fx_n, tau_n, f_n, ..., f_1, a_1, ..., a_n, qdd_1, ..., qdd_n]`.
/// Row order: measured fx/tau pairs, then force rows leaf to root, then
/// acceleration rows root to leaf, then the torque-projection rows (which
/// the weighting turns into joint-acceleration definitions).
pub fn fd_permutations(
    n_links: usize,
) -> (Permutation<ConstraintId>, Permutation<VarId>) {
    let mut cols = Vec::with_capacity(5 * n_links);
    let mut rows = Vec::with_capacity(5 * n_links);
    for i in 1..=n_links {
        cols.push(VarId::new(VarKind::Fx, i));
        cols.push(VarId::new(VarKind::Tau, i));
        rows.push(ConstraintId::new(ConKind::MeasFx, i));
        rows.push(ConstraintId::new(ConKind::MeasTau, i));
    }
    for i in (1..=n_links).rev() {
        cols.push(VarId::new(VarKind::F, i));
        rows.push(ConstraintId::new(ConKind::NeF, i));
    }
    for i in 1..=n_links {
        cols.push(VarId::new(VarKind::A, i));
        rows.push(ConstraintId::new(ConKind::NeA, i));
    }
    for i in 1..=n_links {
        cols.push(VarId::new(VarKind::Qdd, i));
        rows.push(ConstraintId::new(ConKind::NeTau, i));
    }
    let col_widths = cols.iter().map(|v| v.width()).collect();
    let row_widths = rows.iter().map(|c| c.fixed_height().unwrap()).collect();
    (
        Permutation::new(rows, row_widths).unwrap(),
        Permutation::new(cols, col_widths).unwrap(),
    )
}
