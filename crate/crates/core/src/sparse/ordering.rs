//! Structural analysis: fill-minimizing orderings and symbolic LU.
//!
//! The ordering heuristic is greedy Markowitz on the boolean pattern: at
//! each step pick the candidate entry `(r, c)` minimizing
//! `(row_count(r) - 1) * (col_count(c) - 1)` on the reduced pattern, ties
//! broken by lower row index. Candidates are restricted to the edges of a
//! perfect matching computed once up front; this keeps every leading minor
//! of the pivot sequence structurally nonsingular, so a pivot can never
//! land on a position whose value is identically zero (symbolic
//! elimination alone would admit such phantom pivots, which fail for
//! every numeric instance).
//!
//! On patterns that are triangularizable with permutations the matching is
//! unique, a zero-cost matched pivot always exists, and eliminating it
//! keeps the remainder triangularizable, so the heuristic provably reaches
//! zero fill. A direct singleton-peeling extraction is kept as a certified
//! fallback and used whenever Markowitz reports fill on a pattern that
//! peeling can triangularize.

use super::pattern::SparsityPattern;
use super::SparseError;

/// Frozen output of the offline analysis: row/column permutations, the
/// symbolic structure of L and U, and the predicted fill.
#[derive(Debug, Clone)]
pub struct OrderingPlan {
    pub n: usize,
    /// `row_order[k]` = original row eliminated at step `k` (the rows of P).
    pub row_order: Vec<usize>,
    /// `col_order[k]` = original column at step `k` (the columns of Q).
    pub col_order: Vec<usize>,
    /// Elimination step of each original row / column.
    pub row_step: Vec<usize>,
    pub col_step: Vec<usize>,
    /// New positions in L and U absent from the analyzed pattern.
    pub predicted_fill: usize,
    /// Strictly-upper structure of each column of U (permuted indices, ascending).
    pub u_cols: Vec<Vec<usize>>,
    /// Strictly-lower structure of each column of L (permuted indices, ascending).
    pub l_cols: Vec<Vec<usize>>,
    /// True when the singleton-peeling fallback supplied the order.
    pub used_fallback: bool,
}

impl OrderingPlan {
    /// Total symbolic nonzeros of L and U including the unit/pivot diagonals.
    pub fn symbolic_nnz(&self) -> usize {
        let l: usize = self.l_cols.iter().map(Vec::len).sum();
        let u: usize = self.u_cols.iter().map(Vec::len).sum();
        l + u + 2 * self.n
    }
}

/// Maximum matching via Kuhn's augmenting paths, excluding `banned` edges.
/// Seeded with the structural diagonal so that growing a system by one
/// link perturbs the matching only locally (keeps fill counts stable
/// across sizes). Returns the row-to-column assignment, or the unmatched
/// rows and columns when no perfect matching exists.
fn perfect_matching(
    pattern: &SparsityPattern,
    banned: &std::collections::BTreeSet<(usize, usize)>,
) -> Result<Vec<usize>, SparseError> {
    let n = pattern.nrows();
    let mut row_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (r, c) in pattern.iter() {
        if !banned.contains(&(r, c)) {
            row_adj[r].push(c);
        }
    }
    let mut col_match: Vec<Option<usize>> = vec![None; pattern.ncols()];
    let mut row_match: Vec<Option<usize>> = vec![None; n];
    for r in 0..n.min(pattern.ncols()) {
        if pattern.contains(r, r) && !banned.contains(&(r, r)) {
            col_match[r] = Some(r);
            row_match[r] = Some(r);
        }
    }

    fn augment(
        r: usize,
        row_adj: &[Vec<usize>],
        col_match: &mut [Option<usize>],
        row_match: &mut [Option<usize>],
        visited: &mut [bool],
    ) -> bool {
        for &c in &row_adj[r] {
            if visited[c] {
                continue;
            }
            visited[c] = true;
            if col_match[c].is_none()
                || augment(col_match[c].unwrap(), row_adj, col_match, row_match, visited)
            {
                col_match[c] = Some(r);
                row_match[r] = Some(c);
                return true;
            }
        }
        false
    }

    let mut matched = 0;
    for r in 0..n {
        if row_match[r].is_some() {
            matched += 1;
            continue;
        }
        let mut visited = vec![false; pattern.ncols()];
        if augment(r, &row_adj, &mut col_match, &mut row_match, &mut visited) {
            matched += 1;
        }
    }
    if matched == n && pattern.nrows() == pattern.ncols() {
        Ok(row_match.into_iter().map(|c| c.unwrap()).collect())
    } else {
        let rows: Vec<usize> = (0..n).filter(|&r| row_match[r].is_none()).take(8).collect();
        let cols: Vec<usize> = (0..pattern.ncols())
            .filter(|&c| col_match[c].is_none())
            .take(8)
            .collect();
        Err(SparseError::StructurallySingular(n - matched, rows, cols))
    }
}

struct Reduced {
    rows: Vec<std::collections::BTreeSet<usize>>,
    cols: Vec<std::collections::BTreeSet<usize>>,
    active_rows: Vec<bool>,
    active_cols: Vec<bool>,
}

impl Reduced {
    fn new(pattern: &SparsityPattern) -> Self {
        let n = pattern.nrows();
        let mut rows = vec![std::collections::BTreeSet::new(); n];
        let mut cols = vec![std::collections::BTreeSet::new(); pattern.ncols()];
        for (r, c) in pattern.iter() {
            rows[r].insert(c);
            cols[c].insert(r);
        }
        Reduced {
            rows,
            cols,
            active_rows: vec![true; n],
            active_cols: vec![true; pattern.ncols()],
        }
    }

    /// Eliminate pivot `(r, c)`; returns (fill created, U-row snapshot,
    /// L-col snapshot) where snapshots exclude the pivot itself.
    fn eliminate(&mut self, r: usize, c: usize) -> (usize, Vec<usize>, Vec<usize>) {
        let urow: Vec<usize> = self.rows[r].iter().copied().filter(|&cc| cc != c).collect();
        let lcol: Vec<usize> = self.cols[c].iter().copied().filter(|&rr| rr != r).collect();
        let mut fill = 0;
        for &rr in &lcol {
            for &cc in &urow {
                if self.rows[rr].insert(cc) {
                    fill += 1;
                    self.cols[cc].insert(rr);
                }
            }
        }
        for &cc in &urow {
            self.cols[cc].remove(&r);
        }
        for &rr in &lcol {
            self.rows[rr].remove(&c);
        }
        self.rows[r].clear();
        self.cols[c].clear();
        self.active_rows[r] = false;
        self.active_cols[c] = false;
        (fill, urow, lcol)
    }

    /// Minimum-Markowitz-cost pivot among the matching edges, ties broken
    /// by lower row index.
    fn best_pivot(&self, matching: &[usize]) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize, usize)> = None;
        for (r, &c) in matching.iter().enumerate() {
            if !self.active_rows[r] {
                continue;
            }
            debug_assert!(self.rows[r].contains(&c), "matched edge must persist");
            let cost = (self.rows[r].len() - 1) * (self.cols[c].len() - 1);
            if best.is_none_or(|(bc, _, _)| cost < bc) {
                best = Some((cost, r, c));
                if cost == 0 {
                    return Some((r, c));
                }
            }
        }
        best.map(|(_, r, c)| (r, c))
    }
}

enum PivotRule {
    /// Markowitz restricted to the given perfect matching.
    Matching(Vec<usize>),
    /// Caller-supplied elimination order.
    Forced(Vec<usize>, Vec<usize>),
}

fn build_plan(
    pattern: &SparsityPattern,
    rule: PivotRule,
    used_fallback: bool,
) -> Result<OrderingPlan, SparseError> {
    let n = pattern.nrows();
    let mut reduced = Reduced::new(pattern);
    let mut row_order = Vec::with_capacity(n);
    let mut col_order = Vec::with_capacity(n);
    let mut fill_total = 0;
    let mut urows: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut lcols: Vec<Vec<usize>> = Vec::with_capacity(n);

    for k in 0..n {
        let (r, c) = match &rule {
            PivotRule::Forced(rows, cols) => (rows[k], cols[k]),
            PivotRule::Matching(matching) => reduced
                .best_pivot(matching)
                .expect("structurally nonsingular pattern cannot stall"),
        };
        debug_assert!(reduced.rows[r].contains(&c), "pivot must be a pattern entry");
        let (fill, urow, lcol) = reduced.eliminate(r, c);
        fill_total += fill;
        row_order.push(r);
        col_order.push(c);
        urows.push(urow);
        lcols.push(lcol);
    }

    let mut row_step = vec![0; n];
    let mut col_step = vec![0; n];
    for k in 0..n {
        row_step[row_order[k]] = k;
        col_step[col_order[k]] = k;
    }

    // U by columns (strictly upper) and L by columns (strictly lower), in
    // permuted indices.
    let mut u_cols: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, urow) in urows.iter().enumerate() {
        for &cc in urow {
            u_cols[col_step[cc]].push(k);
        }
    }
    for col in &mut u_cols {
        col.sort_unstable();
    }
    let mut l_cols: Vec<Vec<usize>> = Vec::with_capacity(n);
    for lcol in &lcols {
        let mut rows: Vec<usize> = lcol.iter().map(|&rr| row_step[rr]).collect();
        rows.sort_unstable();
        l_cols.push(rows);
    }

    Ok(OrderingPlan {
        n,
        row_order,
        col_order,
        row_step,
        col_step,
        predicted_fill: fill_total,
        u_cols,
        l_cols,
        used_fallback,
    })
}

/// Extract a triangular order by repeatedly peeling singleton rows.
/// Returns `None` if the pattern is not triangularizable with permutations.
pub fn triangular_order(pattern: &SparsityPattern) -> Option<(Vec<usize>, Vec<usize>)> {
    if !pattern.is_square() {
        return None;
    }
    let n = pattern.nrows();
    let mut rows = vec![std::collections::BTreeSet::new(); n];
    let mut cols = vec![std::collections::BTreeSet::new(); n];
    for (r, c) in pattern.iter() {
        rows[r].insert(c);
        cols[c].insert(r);
    }
    let mut singles: std::collections::BTreeSet<usize> = (0..n)
        .filter(|&r| rows[r].len() == 1)
        .collect();
    let mut row_order = Vec::with_capacity(n);
    let mut col_order = Vec::with_capacity(n);
    let mut done = vec![false; n];
    for _ in 0..n {
        let r = *singles.iter().next()?;
        singles.remove(&r);
        if done[r] {
            return None;
        }
        let c = *rows[r].iter().next()?;
        done[r] = true;
        row_order.push(r);
        col_order.push(c);
        for &rr in &cols[c].clone() {
            if rr != r {
                rows[rr].remove(&c);
                match rows[rr].len() {
                    1 => {
                        singles.insert(rr);
                    }
                    0 => return None,
                    _ => {}
                }
            }
        }
        cols[c].clear();
        rows[r].clear();
    }
    Some((row_order, col_order))
}

/// Offline structural analysis: structural-nonsingularity check, greedy
/// Markowitz ordering, symbolic factorization, and predicted fill.
pub fn analyze(pattern: &SparsityPattern) -> Result<OrderingPlan, SparseError> {
    analyze_avoiding(pattern, &std::collections::BTreeSet::new())
}

/// [`analyze`] with a set of pivot positions to keep off the matching.
/// Used by the numeric-singularity recovery path: a pivot whose value
/// cancelled exactly for the instance at hand is banned and the analysis
/// rerun, forcing a different elimination order.
pub fn analyze_avoiding(
    pattern: &SparsityPattern,
    banned: &std::collections::BTreeSet<(usize, usize)>,
) -> Result<OrderingPlan, SparseError> {
    if !pattern.is_square() {
        return Err(SparseError::Shape(format!(
            "analysis requires a square pattern, got {}x{}",
            pattern.nrows(),
            pattern.ncols()
        )));
    }
    let matching = perfect_matching(pattern, banned)?;
    let plan = build_plan(pattern, PivotRule::Matching(matching), false)?;
    if plan.predicted_fill > 0 && banned.is_empty() {
        if let Some((rows, cols)) = triangular_order(pattern) {
            // Markowitz missed a zero-fill order that peeling found.
            return build_plan(pattern, PivotRule::Forced(rows, cols), true);
        }
    }
    Ok(plan)
}

/// Symbolic factorization with a caller-supplied elimination order
/// (`row_order[k]`, `col_order[k]` must be a pattern entry at every step).
pub fn analyze_with_order(
    pattern: &SparsityPattern,
    row_order: Vec<usize>,
    col_order: Vec<usize>,
) -> Result<OrderingPlan, SparseError> {
    if !pattern.is_square() {
        return Err(SparseError::Shape("square pattern required".into()));
    }
    if row_order.len() != pattern.nrows() || col_order.len() != pattern.ncols() {
        return Err(SparseError::Shape("order length mismatch".into()));
    }
    build_plan(pattern, PivotRule::Forced(row_order, col_order), false)
}
