//! End-to-end two-phase solver for inverse dynamics, forward dynamics, and
//! generic sensor-distribution estimation.
//!
//! The offline phase ([`plan`]) derives everything from the tree topology
//! and the worst-case sparsity pattern: block permutations, scalar row and
//! column orderings, and the symbolic factorization. The online phase
//! ([`execute`]) assembles numbers for one state, refactorizes along the
//! frozen structure, substitutes, and unpacks named outputs. Plans contain
//! no state-dependent numerics and are never mutated by execution.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::assembly::{
    assemble_ne, extend_fd, extend_generic, extend_id, worst_case_pattern, AssemblyError,
    MeasureKind, MeasurementSpec, RowSet,
};
use crate::classic::{DynVars, DynamicsError};
use crate::flops::FlopCount;
use crate::indexing::{fd_permutations, id_permutations, Permutation, VarId, VarKind};
use crate::model::{kinematics, KinematicTree, ModelError};
use crate::sparse::{
    analyze, factorize_with_recovery, CscMatrix, OrderingPlan, SparseError, SparsityPattern,
};
use crate::spatial::{skew, Mat3, SpatialVec, Vec3};

/// Number of random configurations used by the numeric well-posedness
/// spot-check.
pub const WELLPOSED_SAMPLES: usize = 100;
/// Joint positions are sampled uniformly in `(-RANGE, RANGE)`.
pub const WELLPOSED_Q_RANGE: f64 = std::f64::consts::PI;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error("problem is not well-posed: {0}")]
    NotWellPosed(Wellposedness),
    #[error("missing measurement channel `{0}`")]
    MissingChannel(String),
    #[error("measurement spec parse error at line {line}: {msg}")]
    SpecParse { line: usize, msg: String },
}

/// Which estimation problem a plan solves.
#[derive(Debug, Clone)]
pub enum Problem {
    Id,
    Fd,
    Generic(MeasurementSpec),
}

impl Problem {
    fn row_set(&self) -> RowSet {
        match self {
            Problem::Id => RowSet::Id,
            Problem::Fd => RowSet::Fd,
            Problem::Generic(spec) => RowSet::Generic(spec.clone()),
        }
    }
}

/// Well-posedness verdict with a witness.
#[derive(Debug, Clone)]
pub enum Wellposedness {
    /// Structurally sound and numerically solvable at every sampled
    /// configuration.
    WellPosed { numeric_samples: usize },
    /// No configuration can make the system solvable with this sensor set:
    /// the system is non-square or lacks a perfect matching.
    StructurallySingular {
        rows: usize,
        cols: usize,
        unmatched_rows: Vec<usize>,
        unmatched_cols: Vec<usize>,
    },
    /// Structure admits a solution but factorization failed at a sampled
    /// configuration even after instance re-analysis.
    NumericallySingularConfig { q: Vec<f64>, step: usize },
}

impl Wellposedness {
    pub fn is_well_posed(&self) -> bool {
        matches!(self, Wellposedness::WellPosed { .. })
    }
}

impl std::fmt::Display for Wellposedness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Wellposedness::WellPosed { numeric_samples } => {
                write!(f, "well-posed (numeric, {numeric_samples} samples)")
            }
            Wellposedness::StructurallySingular {
                rows,
                cols,
                unmatched_rows,
                unmatched_cols,
            } => {
                write!(f, "structurally singular: {rows} x {cols} scalar system")?;
                if rows != cols {
                    let (short, what) = if rows < cols {
                        (cols - rows, "row")
                    } else {
                        (rows - cols, "column")
                    };
                    write!(f, " ({short} {what}{} short)", if short == 1 { "" } else { "s" })?;
                }
                if !unmatched_rows.is_empty() || !unmatched_cols.is_empty() {
                    write!(
                        f,
                        ", unmatched rows {unmatched_rows:?}, unmatched cols {unmatched_cols:?}"
                    )?;
                }
                Ok(())
            }
            Wellposedness::NumericallySingularConfig { q, step } => {
                write!(
                    f,
                    "numerically singular at sampled configuration {q:?} (pivot step {step})"
                )
            }
        }
    }
}

/// Frozen offline artifacts: block permutations, scalar ordering plan, and
/// output offsets. Built solely from topology and the worst-case pattern.
#[derive(Debug, Clone)]
pub struct SolverPlan {
    tree: KinematicTree,
    problem: Problem,
    row_perm: Permutation<crate::indexing::ConstraintId>,
    col_perm: Permutation<VarId>,
    ordering: OrderingPlan,
    pattern: SparsityPattern,
}

impl SolverPlan {
    pub fn tree(&self) -> &KinematicTree {
        &self.tree
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn predicted_fill(&self) -> usize {
        self.ordering.predicted_fill
    }

    pub fn used_fallback(&self) -> bool {
        self.ordering.used_fallback
    }

    pub fn pattern(&self) -> &SparsityPattern {
        &self.pattern
    }

    pub fn ordering(&self) -> &OrderingPlan {
        &self.ordering
    }
}

fn block_perms_for(
    tree: &KinematicTree,
    problem: &Problem,
) -> (Permutation<crate::indexing::ConstraintId>, Permutation<VarId>) {
    let n = tree.n_links();
    match problem {
        Problem::Id => id_permutations(n),
        Problem::Fd => fd_permutations(n),
        Problem::Generic(spec) => {
            worst_case_pattern(tree, &RowSet::Generic(spec.clone())).natural_perms()
        }
    }
}

fn structural_verdict(pattern: &SparsityPattern) -> Option<Wellposedness> {
    if !pattern.is_square() {
        return Some(Wellposedness::StructurallySingular {
            rows: pattern.nrows(),
            cols: pattern.ncols(),
            unmatched_rows: Vec::new(),
            unmatched_cols: Vec::new(),
        });
    }
    match analyze(pattern) {
        Err(SparseError::StructurallySingular(_, rows, cols)) => {
            Some(Wellposedness::StructurallySingular {
                rows: pattern.nrows(),
                cols: pattern.ncols(),
                unmatched_rows: rows,
                unmatched_cols: cols,
            })
        }
        _ => None,
    }
}

/// Offline phase: worst-case pattern, permutations, symbolic factorization.
/// Fails with a structural witness when the sensor distribution cannot
/// yield a solvable system.
pub fn plan(tree: &KinematicTree, problem: Problem) -> Result<SolverPlan, EstimateError> {
    if let Problem::Generic(spec) = &problem {
        spec.validate(tree.n_links())?;
    }
    let (row_perm, col_perm) = block_perms_for(tree, &problem);
    let block_pattern = worst_case_pattern(tree, &problem.row_set());
    let pattern = block_pattern.scalar(&row_perm, &col_perm)?;
    if let Some(verdict) = structural_verdict(&pattern) {
        return Err(EstimateError::NotWellPosed(verdict));
    }
    let ordering = analyze(&pattern)?;
    Ok(SolverPlan {
        tree: tree.clone(),
        problem,
        row_perm,
        col_perm,
        ordering,
        pattern,
    })
}

/// Measured inputs for one online solve. Classic channels are indexed by
/// link; load-cell channels are keyed by [`channel_key`].
#[derive(Debug, Clone, Default)]
pub struct InputValues {
    pub qdd: Vec<f64>,
    pub tau: Vec<f64>,
    pub fx: Vec<SpatialVec>,
    pub channels: BTreeMap<String, DVector<f64>>,
}

/// Key under which a load-cell channel is looked up: `<kind>:<link index>`.
pub fn channel_key(kind: MeasureKind, link: usize) -> String {
    let name = match kind {
        MeasureKind::Qdd => "qdd",
        MeasureKind::Fx => "fx",
        MeasureKind::Tau => "tau",
        MeasureKind::LoadCell3 => "loadcell3",
        MeasureKind::Slippery => "slippery",
    };
    format!("{name}:{link}")
}

/// Resolve the measured value vector of every spec entry from the inputs
/// (classic channels by link, load-cell channels by [`channel_key`]).
pub fn measurement_values(
    spec: &MeasurementSpec,
    inputs: &InputValues,
) -> Result<Vec<DVector<f64>>, EstimateError> {
    let link_scalar = |vals: &[f64], link: usize, what: &str| -> Result<f64, EstimateError> {
        vals.get(link - 1)
            .copied()
            .ok_or_else(|| EstimateError::MissingChannel(format!("{what}:{link}")))
    };
    spec.entries
        .iter()
        .map(|entry| {
            let link = entry.link;
            match entry.kind {
                MeasureKind::Qdd => Ok(DVector::from_element(
                    1,
                    link_scalar(&inputs.qdd, link, "qdd")?,
                )),
                MeasureKind::Tau => Ok(DVector::from_element(
                    1,
                    link_scalar(&inputs.tau, link, "tau")?,
                )),
                MeasureKind::Fx => {
                    let fx = inputs
                        .fx
                        .get(link - 1)
                        .ok_or_else(|| EstimateError::MissingChannel(format!("fx:{link}")))?;
                    Ok(DVector::from_iterator(6, fx.to_vec6().iter().copied()))
                }
                MeasureKind::LoadCell3 | MeasureKind::Slippery => {
                    let key = channel_key(entry.kind, link);
                    let v = inputs
                        .channels
                        .get(&key)
                        .ok_or(EstimateError::MissingChannel(key))?;
                    if v.len() != entry.kind.rows() {
                        return Err(EstimateError::MissingChannel(format!(
                            "{}: expected {} values, got {}",
                            channel_key(entry.kind, link),
                            entry.kind.rows(),
                            v.len()
                        )));
                    }
                    Ok(v.clone())
                }
            }
        })
        .collect()
}

/// Result of one online solve.
#[derive(Debug, Clone)]
pub struct ExecuteOutput {
    pub vars: DynVars,
    pub flops: FlopCount,
    /// True when the frozen pivots hit a numeric zero and the solve fell
    /// back to a fresh analysis of the instance pattern.
    pub refactored_on_instance: bool,
}

fn assemble_numeric(
    plan: &SolverPlan,
    q: &[f64],
    qd: &[f64],
    inputs: &InputValues,
) -> Result<(CscMatrix, Vec<f64>), EstimateError> {
    let tree = &plan.tree;
    let kin = kinematics(tree, q, qd)?;
    let base = assemble_ne(tree, &kin);
    let sys = match &plan.problem {
        Problem::Id => {
            tree.check_dims(inputs.qdd.len())?;
            tree.check_dims(inputs.fx.len())?;
            extend_id(&base, &inputs.qdd, &inputs.fx)?
        }
        Problem::Fd => {
            tree.check_dims(inputs.tau.len())?;
            tree.check_dims(inputs.fx.len())?;
            extend_fd(&base, &inputs.tau, &inputs.fx)?
        }
        Problem::Generic(spec) => {
            let values = measurement_values(spec, inputs)?;
            extend_generic(&base, spec, &values)?
        }
    };
    Ok(sys.to_csc(&plan.row_perm, &plan.col_perm)?)
}

fn unpack(plan: &SolverPlan, x: &[f64]) -> DynVars {
    let n = plan.tree.n_links();
    let mut d = DynVars::zeros(n);
    for i in 1..=n {
        let take6 = |kind: VarKind| {
            let range = plan
                .col_perm
                .scalar_range(&VarId::new(kind, i))
                .expect("plan covers all variables");
            SpatialVec::from_vec6(&nalgebra::Vector6::from_iterator(
                x[range].iter().copied(),
            ))
        };
        d.a[i - 1] = take6(VarKind::A);
        d.f[i - 1] = take6(VarKind::F);
        d.fx[i - 1] = take6(VarKind::Fx);
        let tr = plan
            .col_perm
            .scalar_range(&VarId::new(VarKind::Tau, i))
            .unwrap();
        d.tau[i - 1] = x[tr.start];
        let qr = plan
            .col_perm
            .scalar_range(&VarId::new(VarKind::Qdd, i))
            .unwrap();
        d.qdd[i - 1] = x[qr.start];
    }
    d
}

/// Online phase: assemble the numeric system for `(q, qd, inputs)`, solve
/// it along the frozen plan, and unpack the full variable vector. The plan
/// is read-only; identical inputs produce identical outputs and identical
/// flop counts.
pub fn execute(
    plan: &SolverPlan,
    q: &[f64],
    qd: &[f64],
    inputs: &InputValues,
) -> Result<ExecuteOutput, EstimateError> {
    let (a, b) = assemble_numeric(plan, q, qd, inputs)?;
    let neg_b: Vec<f64> = b.iter().map(|v| -v).collect();
    let (factors, refactored) = factorize_with_recovery(&a, &plan.ordering)?;
    let (x, solve_flops) = factors.solve(&neg_b);
    Ok(ExecuteOutput {
        vars: unpack(plan, &x),
        flops: factors.flops + solve_flops,
        refactored_on_instance: refactored,
    })
}

/// Structural check (perfect matching on the worst-case pattern) plus a
/// numeric spot-check: factorize at [`WELLPOSED_SAMPLES`] random
/// configurations sampled uniformly in the default joint range.
pub fn check_wellposed(tree: &KinematicTree, problem: &Problem) -> Wellposedness {
    use rand::Rng;
    use rand::SeedableRng;

    if let Problem::Generic(spec) = problem {
        // verdicts are for sensor distributions; a spec naming missing
        // links is a caller bug
        spec.validate(tree.n_links())
            .expect("measurement spec references links outside the tree");
    }
    let (row_perm, col_perm) = block_perms_for(tree, problem);
    let block_pattern = worst_case_pattern(tree, &problem.row_set());
    let pattern = match block_pattern.scalar(&row_perm, &col_perm) {
        Ok(p) => p,
        Err(_) => unreachable!("natural permutations always cover the pattern"),
    };
    if let Some(verdict) = structural_verdict(&pattern) {
        return verdict;
    }
    let plan = match plan(tree, problem.clone()) {
        Ok(p) => p,
        Err(EstimateError::NotWellPosed(v)) => return v,
        Err(_) => unreachable!("structural checks already passed"),
    };

    let n = tree.n_links();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x57E11);
    let zero_inputs = InputValues {
        qdd: vec![0.0; n],
        tau: vec![0.0; n],
        fx: vec![SpatialVec::zero(); n],
        channels: zero_channels(problem, n),
    };
    for _ in 0..WELLPOSED_SAMPLES {
        let q: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-WELLPOSED_Q_RANGE..WELLPOSED_Q_RANGE))
            .collect();
        let qd: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (a, _) = match assemble_numeric(&plan, &q, &qd, &zero_inputs) {
            Ok(sys) => sys,
            Err(_) => unreachable!("assembly of a planned problem cannot fail"),
        };
        match factorize_with_recovery(&a, &plan.ordering) {
            Ok(_) => {}
            Err(SparseError::NumericallySingularPivot { step, .. }) => {
                return Wellposedness::NumericallySingularConfig { q, step };
            }
            Err(_) => {
                return Wellposedness::NumericallySingularConfig { q, step: 0 };
            }
        }
    }
    Wellposedness::WellPosed {
        numeric_samples: WELLPOSED_SAMPLES,
    }
}

fn zero_channels(problem: &Problem, _n: usize) -> BTreeMap<String, DVector<f64>> {
    let mut channels = BTreeMap::new();
    if let Problem::Generic(spec) = problem {
        for entry in &spec.entries {
            if matches!(entry.kind, MeasureKind::LoadCell3 | MeasureKind::Slippery) {
                channels.insert(
                    channel_key(entry.kind, entry.link),
                    DVector::zeros(entry.kind.rows()),
                );
            }
        }
    }
    channels
}

/// Report produced by the feet-singularity construction.
#[derive(Debug, Clone)]
pub struct FeetCertificate {
    /// Rotation of the constructed relative foot pose (the proof uses the
    /// identity).
    pub rotation: Mat3,
    /// Moment arm `p` of the constructed pose.
    pub moment_arm: Vec3,
    /// The force-dual transform `[[R, 0], [p x R, R]]` of the construction.
    pub force_dual: nalgebra::Matrix6<f64>,
    /// Minimum singular value of `[H, X* H]` at the constructed pose.
    pub min_singular_value: f64,
    /// Numeric rank of `[H, X* H]` at the constructed pose.
    pub rank: usize,
    /// Numeric rank of `[H, X* H]` at a generic relative pose (rotated,
    /// displaced); relevant for non-square selectors where full column
    /// rank, not invertibility, is the question.
    pub generic_rank: usize,
    /// True when the unmeasured selector's force part is singular, so the
    /// construction certifies an unsolvable relative pose.
    pub witness_found: bool,
}

fn force_dual(rotation: &Mat3, p: &Vec3) -> nalgebra::Matrix6<f64> {
    let mut m = nalgebra::Matrix6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(rotation);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&(skew(p) * rotation));
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(rotation);
    m
}

fn concat_with_pose(h: &DMatrix<f64>, xdual: &nalgebra::Matrix6<f64>) -> DMatrix<f64> {
    let k = h.ncols();
    let mut concat = DMatrix::zeros(6, 2 * k);
    concat.view_mut((0, 0), (6, k)).copy_from(h);
    let xh = DMatrix::from_fn(6, k, |r, c| (0..6).map(|j| xdual[(r, j)] * h[(j, c)]).sum());
    concat.view_mut((0, k), (6, k)).copy_from(&xh);
    concat
}

fn rank_and_min_sv(m: &DMatrix<f64>) -> (usize, f64) {
    let svd = m.clone().svd(false, false);
    let min_sv = svd.singular_values.iter().fold(f64::MAX, |acc, s| acc.min(*s));
    let max_sv = svd.singular_values.iter().fold(0.0_f64, |acc, s| acc.max(*s));
    let rank = svd
        .singular_values
        .iter()
        .filter(|s| **s > 1e-12 * max_sv.max(1.0))
        .count();
    (rank, min_sv)
}

/// Rank/singular-value report for `[H, X* H]` with `H` a 6 x k unmeasured
/// selector. When `H`'s top (force-coupling) 3x3 block is singular in the
/// square case, the construction with `R = I` and any nonzero `p` is
/// itself singular: there exists a relative foot pose at which the
/// unmeasured components cannot be recovered, certifying ill-posedness of
/// the sensor set. The certificate covers only that direction; a
/// nonsingular force block yields no witness and the generic-pose rank is
/// reported instead.
pub fn feet_singularity_certificate(h: &DMatrix<f64>) -> FeetCertificate {
    assert_eq!(h.nrows(), 6, "H must have six rows");
    let k = h.ncols();
    let rotation = Mat3::identity();
    let moment_arm = Vec3::new(1.0, 2.0, 3.0);
    let xdual = force_dual(&rotation, &moment_arm);

    let witness_found = if k == 3 {
        let hf = h.view((0, 0), (3, 3)).clone_owned();
        hf.svd(false, false)
            .singular_values
            .iter()
            .fold(f64::MAX, |m, s| m.min(*s))
            <= 1e-10
    } else {
        false
    };

    let (rank, min_sv) = rank_and_min_sv(&concat_with_pose(h, &xdual));

    // deterministic generic pose: rotate about a skewed axis, displace
    let generic_rot = nalgebra::Rotation3::from_axis_angle(
        &nalgebra::Unit::new_normalize(Vec3::new(1.0, 2.0, 3.0)),
        1.0,
    )
    .matrix()
    .clone_owned();
    let generic = force_dual(&generic_rot, &Vec3::new(0.7, -0.4, 1.1));
    let (generic_rank, _) = rank_and_min_sv(&concat_with_pose(h, &generic));

    FeetCertificate {
        rotation,
        moment_arm,
        force_dual: xdual,
        min_singular_value: min_sv,
        rank,
        generic_rank,
        witness_found,
    }
}

/// Parse a measurement-spec file: one `measure <kind> link=<name>` per
/// line, `#` comments.
pub fn parse_measurement_spec(
    text: &str,
    tree: &KinematicTree,
) -> Result<MeasurementSpec, EstimateError> {
    let mut entries = Vec::new();
    for (lineno0, raw) in text.lines().enumerate() {
        let line = lineno0 + 1;
        let content = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        let mut tokens = content.split_whitespace();
        let head = tokens.next().unwrap();
        if head != "measure" {
            return Err(EstimateError::SpecParse {
                line,
                msg: format!("unknown directive `{head}`"),
            });
        }
        let kind = match tokens.next() {
            Some("qdd") => MeasureKind::Qdd,
            Some("fx") => MeasureKind::Fx,
            Some("tau") => MeasureKind::Tau,
            Some("loadcell3") => MeasureKind::LoadCell3,
            Some("slippery") => MeasureKind::Slippery,
            Some(other) => {
                return Err(EstimateError::SpecParse {
                    line,
                    msg: format!("unknown measurement kind `{other}`"),
                })
            }
            None => {
                return Err(EstimateError::SpecParse {
                    line,
                    msg: "expected `measure <kind> link=<name>`".into(),
                })
            }
        };
        let link_tok = tokens.next().ok_or(EstimateError::SpecParse {
            line,
            msg: "missing link=<name>".into(),
        })?;
        let name = link_tok.strip_prefix("link=").ok_or(EstimateError::SpecParse {
            line,
            msg: format!("expected link=<name>, got `{link_tok}`"),
        })?;
        let link = tree.link_index(name)?;
        entries.push(crate::assembly::MeasureEntry { kind, link });
    }
    Ok(MeasurementSpec::new(entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{loadcell_h, slippery_h};
    use crate::classic::{aba, rnea};
    use crate::model::builders::{random_state, random_tree, serial_chain, serial_chain_with_feet};

    fn id_inputs(n: usize, qdd: &[f64], fx: &[SpatialVec]) -> InputValues {
        InputValues {
            qdd: qdd.to_vec(),
            tau: vec![0.0; n],
            fx: fx.to_vec(),
            channels: BTreeMap::new(),
        }
    }

    #[test]
    fn id_plan_has_zero_fill() {
        for n in [1, 3, 10, 25] {
            let tree = random_tree(900 + n as u64, n);
            let p = plan(&tree, Problem::Id).unwrap();
            assert_eq!(p.predicted_fill(), 0, "n = {n}");
            assert!(!p.used_fallback());
        }
    }

    #[test]
    fn id_execute_matches_rnea() {
        for seed in 0..6 {
            let n = 3 + (seed as usize % 5) * 4;
            let tree = random_tree(40 + seed, n);
            let (q, qd) = random_state(50 + seed, n);
            let qdd: Vec<f64> = (0..n).map(|k| (k as f64 * 0.7 + seed as f64).sin()).collect();
            let fx: Vec<SpatialVec> = (0..n)
                .map(|k| {
                    SpatialVec::new(
                        Vec3::new(0.2 * k as f64, 0.1, -0.3),
                        Vec3::new(-0.1, 0.4, 0.2 * k as f64),
                    )
                })
                .collect();
            let oracle = rnea(&tree, &q, &qd, &qdd, &fx).unwrap();
            let p = plan(&tree, Problem::Id).unwrap();
            let out = execute(&p, &q, &qd, &id_inputs(n, &qdd, &fx)).unwrap();
            for i in 0..n {
                let scale = 1.0f64.max(oracle.tau[i].abs());
                assert!(
                    (out.vars.tau[i] - oracle.tau[i]).abs() <= 1e-8 * scale,
                    "seed {seed} link {} tau {} vs {}",
                    i + 1,
                    out.vars.tau[i],
                    oracle.tau[i]
                );
            }
        }
    }

    #[test]
    fn fd_execute_matches_aba() {
        for seed in 0..6 {
            let n = 2 + (seed as usize % 4) * 5;
            let tree = random_tree(60 + seed, n);
            let (q, qd) = random_state(70 + seed, n);
            let tau: Vec<f64> = (0..n).map(|k| (k as f64 * 0.9 - seed as f64).cos()).collect();
            let fx: Vec<SpatialVec> = (0..n)
                .map(|k| SpatialVec::new(Vec3::new(0.1, 0.2 * k as f64, 0.0), Vec3::new(0.3, 0.0, -0.2)))
                .collect();
            let oracle = aba(&tree, &q, &qd, &tau, &fx).unwrap();
            let p = plan(&tree, Problem::Fd).unwrap();
            let inputs = InputValues {
                qdd: vec![0.0; n],
                tau: tau.clone(),
                fx: fx.clone(),
                channels: BTreeMap::new(),
            };
            let out = execute(&p, &q, &qd, &inputs).unwrap();
            for i in 0..n {
                let scale = 1.0f64.max(oracle.qdd[i].abs());
                assert!(
                    (out.vars.qdd[i] - oracle.qdd[i]).abs() <= 1e-8 * scale,
                    "seed {seed} link {} qdd {} vs {}",
                    i + 1,
                    out.vars.qdd[i],
                    oracle.qdd[i]
                );
            }
        }
    }

    #[test]
    fn plans_and_outputs_are_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<SolverPlan>();
        assert_send_sync::<ExecuteOutput>();
        assert_send_sync::<Wellposedness>();
        assert_send_sync::<crate::model::KinematicTree>();
        assert_send_sync::<crate::assembly::ConstraintSystem>();
        assert_send_sync::<crate::sparse::SparseLuFactors>();

        // concurrent executes on one shared plan
        let n = 5;
        let tree = serial_chain(n);
        let p = std::sync::Arc::new(plan(&tree, Problem::Id).unwrap());
        let (q, qd) = random_state(4, n);
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let p = p.clone();
                let (q, qd) = (q.clone(), qd.clone());
                std::thread::spawn(move || {
                    let inputs = InputValues {
                        qdd: vec![0.25; n],
                        tau: vec![0.0; n],
                        fx: vec![SpatialVec::zero(); n],
                        channels: BTreeMap::new(),
                    };
                    execute(&p, &q, &qd, &inputs).unwrap().vars.tau
                })
            })
            .collect();
        let results: Vec<Vec<f64>> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        for r in &results[1..] {
            assert_eq!(r, &results[0]);
        }
    }

    #[test]
    fn execute_is_pure_and_deterministic() {
        let n = 6;
        let tree = serial_chain(n);
        let (q, qd) = random_state(3, n);
        let p = plan(&tree, Problem::Id).unwrap();
        let inputs = id_inputs(n, &vec![0.4; n], &vec![SpatialVec::zero(); n]);
        let a = execute(&p, &q, &qd, &inputs).unwrap();
        let b = execute(&p, &q, &qd, &inputs).unwrap();
        assert_eq!(a.vars.tau, b.vars.tau);
        assert_eq!(a.flops, b.flops);
    }

    #[test]
    fn classic_problems_are_well_posed() {
        let tree = random_tree(81, 5);
        assert!(check_wellposed(&tree, &Problem::Id).is_well_posed());
        assert!(check_wellposed(&tree, &Problem::Fd).is_well_posed());
    }

    #[test]
    fn four_load_cell_two_feet_is_ill_posed() {
        let n = 12;
        let tree = serial_chain_with_feet(n);
        let spec = MeasurementSpec::two_feet(n, MeasureKind::LoadCell3);
        let verdict = check_wellposed(&tree, &Problem::Generic(spec.clone()));
        assert!(
            matches!(verdict, Wellposedness::StructurallySingular { .. }),
            "expected structural singularity, got {verdict}"
        );
        // plan refuses, execute never runs on garbage
        assert!(matches!(
            plan(&tree, Problem::Generic(spec)),
            Err(EstimateError::NotWellPosed(_))
        ));
    }

    #[test]
    fn slippery_two_feet_solves_and_matches_rnea() {
        let n = 12;
        let tree = serial_chain_with_feet(n);
        let spec = MeasurementSpec::two_feet(n, MeasureKind::Slippery);
        let verdict = check_wellposed(&tree, &Problem::Generic(spec.clone()));
        assert!(verdict.is_well_posed(), "verdict: {verdict}");

        let (q, qd) = random_state(17, n);
        let qdd: Vec<f64> = (0..n).map(|k| (0.3 * k as f64).sin()).collect();
        // ground truth: external wrenches only at the feet
        let mut fx_true = vec![SpatialVec::zero(); n];
        fx_true[0] = SpatialVec::new(Vec3::new(0.4, -0.2, 0.9), Vec3::new(1.2, 0.7, 14.0));
        fx_true[n - 1] = SpatialVec::new(Vec3::new(-0.3, 0.5, 0.2), Vec3::new(-0.8, 0.4, 11.0));
        let truth = rnea(&tree, &q, &qd, &qdd, &fx_true).unwrap();

        let mut channels = BTreeMap::new();
        for foot in [1, n] {
            let y = slippery_y_times(&fx_true[foot - 1]);
            channels.insert(channel_key(MeasureKind::Slippery, foot), y);
        }
        let inputs = InputValues {
            qdd: qdd.clone(),
            tau: truth.tau.clone(),
            fx: fx_true.clone(),
            channels,
        };
        let p = plan(&tree, Problem::Generic(spec)).unwrap();
        let out = execute(&p, &q, &qd, &inputs).unwrap();

        for i in 0..n {
            let scale = 1.0f64.max(truth.tau[i].abs());
            assert!(
                (out.vars.tau[i] - truth.tau[i]).abs() <= 1e-8 * scale,
                "link {} tau {} vs {}",
                i + 1,
                out.vars.tau[i],
                truth.tau[i]
            );
        }
        // recovered feet wrenches feed back into the oracle consistently
        let mut fx_rec = fx_true.clone();
        fx_rec[0] = out.vars.fx[0];
        fx_rec[n - 1] = out.vars.fx[n - 1];
        let replay = rnea(&tree, &q, &qd, &qdd, &fx_rec).unwrap();
        for i in 0..n {
            let scale = 1.0f64.max(truth.tau[i].abs());
            assert!((replay.tau[i] - out.vars.tau[i]).abs() <= 1e-8 * scale);
        }
    }

    fn slippery_y_times(fx: &SpatialVec) -> DVector<f64> {
        let y = crate::assembly::slippery_y();
        let v = DVector::from_iterator(6, fx.to_vec6().iter().copied());
        y.transpose() * v
    }

    #[test]
    fn four_load_cell_certificate_is_singular() {
        let cert = feet_singularity_certificate(&loadcell_h());
        assert!(cert.witness_found);
        assert!(
            cert.min_singular_value <= 1e-12,
            "min sv {}",
            cert.min_singular_value
        );
        assert_eq!(cert.rotation, Mat3::identity());
    }

    #[test]
    fn nonsingular_selector_has_no_witness() {
        let h = DMatrix::<f64>::identity(6, 3); // H_f = I_3
        let cert = feet_singularity_certificate(&h);
        assert!(!cert.witness_found);
    }

    #[test]
    fn slippery_selector_keeps_full_column_rank() {
        let cert = feet_singularity_certificate(&slippery_h());
        assert!(!cert.witness_found);
        assert_eq!(cert.generic_rank, 2);
    }

    #[test]
    fn out_of_range_spec_links_are_rejected() {
        let tree = serial_chain(3);
        let spec = MeasurementSpec::new(vec![crate::assembly::MeasureEntry {
            kind: MeasureKind::Qdd,
            link: 7,
        }]);
        assert!(matches!(
            plan(&tree, Problem::Generic(spec)),
            Err(EstimateError::Assembly(AssemblyError::Dimension(_)))
        ));
    }

    #[test]
    fn wrong_input_lengths_are_reported() {
        let tree = serial_chain(4);
        let p = plan(&tree, Problem::Id).unwrap();
        let inputs = InputValues {
            qdd: vec![0.0; 2], // too short
            tau: vec![0.0; 4],
            fx: vec![SpatialVec::zero(); 4],
            channels: BTreeMap::new(),
        };
        assert!(matches!(
            execute(&p, &[0.0; 4], &[0.0; 4], &inputs),
            Err(EstimateError::Model(ModelError::DimensionMismatch { .. }))
        ));
    }

    #[test]
    fn spec_parsing_resolves_link_names() {
        let tree = serial_chain(3);
        let text = "# sensors\nmeasure qdd link=link1\nmeasure loadcell3 link=link3\n";
        let spec = parse_measurement_spec(text, &tree).unwrap();
        assert_eq!(spec.entries.len(), 2);
        assert_eq!(spec.entries[0].kind, MeasureKind::Qdd);
        assert_eq!(spec.entries[0].link, 1);
        assert_eq!(spec.entries[1].kind, MeasureKind::LoadCell3);
        assert_eq!(spec.entries[1].link, 3);

        assert!(matches!(
            parse_measurement_spec("measure qdd link=ghost\n", &tree),
            Err(EstimateError::Model(ModelError::UnknownLink(_)))
        ));
        assert!(matches!(
            parse_measurement_spec("measure wrench link=link1\n", &tree),
            Err(EstimateError::SpecParse { line: 1, .. })
        ));
    }

    use crate::spatial::Vec3;
}
