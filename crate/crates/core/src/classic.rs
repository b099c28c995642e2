//! Gold-standard recursive dynamics algorithms: the recursive Newton-Euler
//! inverse dynamics (RNEA), the articulated-body forward dynamics (ABA),
//! and the staged weighting matrices that recast ABA as a triangularizing
//! transformation of the forward-dynamics block system.
//!
//! Flop accounting covers the dynamics propagation only; transforms,
//! velocities, and velocity-product bias terms are kinematic quantities
//! (functions of q, qd) and are treated as precomputed, in line with how
//! the sparse solve is charged (numeric assembly of the matrix is copying,
//! not arithmetic).

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::flops::FlopCount;
use crate::indexing::{ConKind, ConstraintId, VarId, VarKind};
use crate::model::{kinematics, KinematicState, KinematicTree, ModelError};
use crate::spatial::{
    Mat6, SpatialTransform, SpatialVec, COST_DOT6, COST_INERTIA_VEC, COST_MAT6_MAT6,
    COST_MAT6_VEC, COST_TRANSFORM_APPLY, COST_TRANSFORM_DENSE, COST_VEC6_ADD, COST_VEC6_SCALE,
};

/// Joint-space singularity guard for `S^T I^A S`.
pub const JOINT_INERTIA_MIN: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("joint {link}: apparent joint inertia {value:.3e} below {JOINT_INERTIA_MIN:.0e}")]
    SingularJointInertia { link: usize, value: f64 },
}

/// The complete per-link variable vector produced by a dynamics solve:
/// accelerations, transmitted forces, joint torques, external forces, and
/// joint accelerations. Indexed by link (0-based internally, links are
/// 1-based in the API).
#[derive(Debug, Clone)]
pub struct DynVars {
    pub a: Vec<SpatialVec>,
    pub f: Vec<SpatialVec>,
    pub tau: Vec<f64>,
    pub fx: Vec<SpatialVec>,
    pub qdd: Vec<f64>,
}

impl DynVars {
    pub fn zeros(n: usize) -> Self {
        DynVars {
            a: vec![SpatialVec::zero(); n],
            f: vec![SpatialVec::zero(); n],
            tau: vec![0.0; n],
            fx: vec![SpatialVec::zero(); n],
            qdd: vec![0.0; n],
        }
    }

    /// Scalar values of one block variable, for stacking into system vectors.
    pub fn block(&self, id: &VarId) -> Vec<f64> {
        let i = id.link - 1;
        match id.kind {
            VarKind::A => self.a[i].to_vec6().iter().copied().collect(),
            VarKind::F => self.f[i].to_vec6().iter().copied().collect(),
            VarKind::Fx => self.fx[i].to_vec6().iter().copied().collect(),
            VarKind::Tau => vec![self.tau[i]],
            VarKind::Qdd => vec![self.qdd[i]],
        }
    }
}

struct Ops<'a> {
    fc: &'a mut FlopCount,
}

impl Ops<'_> {
    fn tick(&mut self, cost: FlopCount) {
        *self.fc += cost;
    }

    fn xform_motion(&mut self, x: &SpatialTransform, v: &SpatialVec) -> SpatialVec {
        *self.fc += COST_TRANSFORM_APPLY;
        x.apply_motion(v)
    }

    fn xform_force_to_parent(&mut self, x: &SpatialTransform, f: &SpatialVec) -> SpatialVec {
        *self.fc += COST_TRANSFORM_APPLY;
        x.inv_apply_force(f)
    }

    fn add(&mut self, a: SpatialVec, b: SpatialVec) -> SpatialVec {
        *self.fc += COST_VEC6_ADD;
        a + b
    }

    fn sub(&mut self, a: SpatialVec, b: SpatialVec) -> SpatialVec {
        *self.fc += COST_VEC6_ADD;
        a - b
    }

    fn scale(&mut self, v: &SpatialVec, s: f64) -> SpatialVec {
        *self.fc += COST_VEC6_SCALE;
        v.scale(s)
    }

    fn dot(&mut self, a: &SpatialVec, b: &SpatialVec) -> f64 {
        *self.fc += COST_DOT6;
        a.dot(b)
    }

    fn inertia_vec(&mut self, i: &crate::spatial::SpatialInertia, v: &SpatialVec) -> SpatialVec {
        *self.fc += COST_INERTIA_VEC;
        i.mul_vec(v)
    }

    fn mat6_vec(&mut self, m: &Mat6, v: &SpatialVec) -> SpatialVec {
        *self.fc += COST_MAT6_VEC;
        SpatialVec::from_vec6(&(m * v.to_vec6()))
    }
}

fn rnea_inner(
    tree: &KinematicTree,
    kin: &KinematicState,
    qdd: &[f64],
    fx: &[SpatialVec],
    fc: &mut FlopCount,
) -> DynVars {
    let n = tree.n_links();
    let mut ops = Ops { fc };
    let a0 = tree.base_acceleration();

    let mut a = Vec::with_capacity(n);
    let mut f = Vec::with_capacity(n);
    for i in 1..=n {
        let link = tree.link(i);
        let s = link.joint.motion_subspace();
        let a_parent = if link.parent == 0 {
            ops.xform_motion(kin.x(i), &a0)
        } else {
            let ap = a[link.parent - 1];
            ops.xform_motion(kin.x(i), &ap)
        };
        let s_qdd = ops.scale(&s, qdd[i - 1]);
        let a_i = {
            let t = ops.add(a_parent, s_qdd);
            ops.add(t, *kin.bias_c(i))
        };
        let f_i = {
            let ia = ops.inertia_vec(&link.inertia, &a_i);
            let t = ops.add(ia, *kin.bias_nu(i));
            ops.sub(t, fx[i - 1])
        };
        a.push(a_i);
        f.push(f_i);
    }

    let mut tau = vec![0.0; n];
    for i in (1..=n).rev() {
        let link = tree.link(i);
        let s = link.joint.motion_subspace();
        tau[i - 1] = ops.dot(&s, &f[i - 1]);
        if link.parent != 0 {
            let contrib = ops.xform_force_to_parent(kin.x(i), &f[i - 1]);
            f[link.parent - 1] = ops.add(f[link.parent - 1], contrib);
        }
    }

    DynVars {
        a,
        f,
        tau,
        fx: fx.to_vec(),
        qdd: qdd.to_vec(),
    }
}

/// Inverse dynamics: joint torques (and the full variable vector) from
/// joint accelerations and external forces.
pub fn rnea(
    tree: &KinematicTree,
    q: &[f64],
    qd: &[f64],
    qdd: &[f64],
    fx: &[SpatialVec],
) -> Result<DynVars, DynamicsError> {
    Ok(rnea_counted(tree, q, qd, qdd, fx)?.0)
}

/// `rnea` with the flop tally of the dynamics passes.
pub fn rnea_counted(
    tree: &KinematicTree,
    q: &[f64],
    qd: &[f64],
    qdd: &[f64],
    fx: &[SpatialVec],
) -> Result<(DynVars, FlopCount), DynamicsError> {
    tree.check_dims(qdd.len())?;
    tree.check_dims(fx.len())?;
    let kin = kinematics(tree, q, qd)?;
    let mut fc = FlopCount::ZERO;
    let out = rnea_inner(tree, &kin, qdd, fx, &mut fc);
    Ok((out, fc))
}

/// Articulated-body quantities computed by the backward sweep.
#[derive(Debug, Clone)]
pub struct AbaState {
    /// Articulated-body inertias `I_i^A`.
    pub inertia_art: Vec<Mat6>,
    /// Apparent inertias `I_i^a = I_i^A - U dinv U^T`.
    pub inertia_apparent: Vec<Mat6>,
    /// Articulated-body bias forces `p_i^A`.
    pub bias_art: Vec<SpatialVec>,
    /// `U_i = I_i^A S_i`.
    pub u_vec: Vec<SpatialVec>,
    /// `(S_i^T I_i^A S_i)^{-1}`.
    pub dinv: Vec<f64>,
    /// `u_i = tau_i - S_i^T p_i^A`.
    pub u_scalar: Vec<f64>,
}

fn aba_inner(
    tree: &KinematicTree,
    kin: &KinematicState,
    tau: &[f64],
    fx: &[SpatialVec],
    fc: &mut FlopCount,
) -> Result<(DynVars, AbaState), DynamicsError> {
    let n = tree.n_links();
    let a0 = tree.base_acceleration();

    let mut inertia_art: Vec<Mat6> = (1..=n).map(|i| tree.inertia(i).to_matrix6()).collect();
    let mut bias_art: Vec<SpatialVec> = Vec::with_capacity(n);
    {
        let mut ops = Ops { fc };
        for i in 1..=n {
            bias_art.push(ops.sub(*kin.bias_nu(i), fx[i - 1]));
        }
    }
    let mut inertia_apparent = vec![Mat6::zeros(); n];
    let mut u_vec = vec![SpatialVec::zero(); n];
    let mut dinv = vec![0.0; n];
    let mut u_scalar = vec![0.0; n];

    for i in (1..=n).rev() {
        let link = tree.link(i);
        let s = link.joint.motion_subspace();
        let ia = inertia_art[i - 1];
        let u;
        let d;
        {
            let mut ops = Ops { fc };
            u = ops.mat6_vec(&ia, &s);
            d = ops.dot(&s, &u);
        }
        if d.abs() < JOINT_INERTIA_MIN {
            return Err(DynamicsError::SingularJointInertia { link: i, value: d });
        }
        *fc += FlopCount::new(0, 0, 1);
        let di = 1.0 / d;
        let us;
        {
            let mut ops = Ops { fc };
            let sp = ops.dot(&s, &bias_art[i - 1]);
            *fc += FlopCount::new(0, 1, 0);
            us = tau[i - 1] - sp;
        }

        // I^a = I^A - U dinv U^T
        let uv = u.to_vec6();
        *fc += FlopCount::new(6, 0, 0);
        let udi = uv * di;
        *fc += FlopCount::new(36, 36, 0);
        let ia_app = ia - udi * uv.transpose();

        u_vec[i - 1] = u;
        dinv[i - 1] = di;
        u_scalar[i - 1] = us;
        inertia_apparent[i - 1] = ia_app;

        let parent = link.parent;
        if parent != 0 {
            let mut ops = Ops { fc };
            // p^a = p^A + I^a c + U dinv u
            let iac = ops.mat6_vec(&ia_app, kin.bias_c(i));
            ops.tick(FlopCount::new(1, 0, 0));
            let udu = ops.scale(&u, di * us);
            let pa = {
                let t = ops.add(bias_art[i - 1], iac);
                ops.add(t, udu)
            };
            let pa_parent = ops.xform_force_to_parent(kin.x(i), &pa);
            bias_art[parent - 1] = ops.add(bias_art[parent - 1], pa_parent);

            // I^A_parent += X^T I^a X (dense congruence with the motion form)
            *fc += COST_TRANSFORM_DENSE + COST_MAT6_MAT6 * 2 + FlopCount::new(0, 36, 0);
            let x6 = kin.x(i).to_motion_matrix();
            inertia_art[parent - 1] += x6.transpose() * ia_app * x6;
        }
    }

    let mut a = Vec::with_capacity(n);
    let mut qdd = vec![0.0; n];
    for i in 1..=n {
        let link = tree.link(i);
        let s = link.joint.motion_subspace();
        let mut ops = Ops { fc };
        let a_parent = if link.parent == 0 {
            ops.xform_motion(kin.x(i), &a0)
        } else {
            let ap = a[link.parent - 1];
            ops.xform_motion(kin.x(i), &ap)
        };
        let a_free = ops.add(a_parent, *kin.bias_c(i));
        let ua = ops.dot(&u_vec[i - 1], &a_free);
        ops.tick(FlopCount::new(1, 1, 0));
        let qdd_i = dinv[i - 1] * (u_scalar[i - 1] - ua);
        let s_qdd = ops.scale(&s, qdd_i);
        let a_i = ops.add(a_free, s_qdd);
        qdd[i - 1] = qdd_i;
        a.push(a_i);
    }

    // Recover transmitted forces from the articulated-body equation of motion.
    let mut f = Vec::with_capacity(n);
    {
        let mut ops = Ops { fc };
        for i in 1..=n {
            let ia_a = ops.mat6_vec(&inertia_art[i - 1], &a[i - 1]);
            f.push(ops.add(ia_a, bias_art[i - 1]));
        }
    }

    Ok((
        DynVars {
            a,
            f,
            tau: tau.to_vec(),
            fx: fx.to_vec(),
            qdd,
        },
        AbaState {
            inertia_art,
            inertia_apparent,
            bias_art,
            u_vec,
            dinv,
            u_scalar,
        },
    ))
}

/// Forward dynamics: joint accelerations (and the full variable vector)
/// from joint torques and external forces. O(n) in the number of links.
pub fn aba(
    tree: &KinematicTree,
    q: &[f64],
    qd: &[f64],
    tau: &[f64],
    fx: &[SpatialVec],
) -> Result<DynVars, DynamicsError> {
    Ok(aba_counted(tree, q, qd, tau, fx)?.0)
}

/// `aba` with the flop tally of the dynamics sweeps.
pub fn aba_counted(
    tree: &KinematicTree,
    q: &[f64],
    qd: &[f64],
    tau: &[f64],
    fx: &[SpatialVec],
) -> Result<(DynVars, FlopCount), DynamicsError> {
    let (out, _, fc) = aba_with_state(tree, q, qd, tau, fx)?;
    Ok((out, fc))
}

/// `aba` exposing the articulated-body quantities for the weighting matrices.
pub fn aba_with_state(
    tree: &KinematicTree,
    q: &[f64],
    qd: &[f64],
    tau: &[f64],
    fx: &[SpatialVec],
) -> Result<(DynVars, AbaState, FlopCount), DynamicsError> {
    tree.check_dims(tau.len())?;
    tree.check_dims(fx.len())?;
    let kin = kinematics(tree, q, qd)?;
    let mut fc = FlopCount::ZERO;
    let (out, state) = aba_inner(tree, &kin, tau, fx, &mut fc)?;
    Ok((out, state, fc))
}

/// The weighting matrices of the articulated-body triangularization.
///
/// `W^R` changes variables `f_i -> p_i^A = f_i - I_i^A a_i` (so the
/// triangular system is in the transformed coordinates); `W^L` is kept as
/// the product of its four staged factors, applied rightmost first. Under
/// the forward-dynamics permutations, `W^L D W^R` is block lower triangular
/// with invertible diagonal blocks.
#[derive(Debug, Clone)]
pub struct AbaWeights {
    /// Exception blocks of `W^R`; identity elsewhere.
    pub wr: BTreeMap<(VarId, VarId), DMatrix<f64>>,
    /// Exception blocks of the staged factors `W^{L,1}..W^{L,4}`;
    /// identity elsewhere. Entries on the diagonal override the identity.
    pub wl_stages: [BTreeMap<(ConstraintId, ConstraintId), DMatrix<f64>>; 4],
}

/// Build the articulated-body weighting blocks from a computed `AbaState`.
pub fn aba_weights(
    tree: &KinematicTree,
    kin: &KinematicState,
    state: &AbaState,
) -> Result<AbaWeights, DynamicsError> {
    let n = tree.n_links();
    let mut wr = BTreeMap::new();
    let mut l1 = BTreeMap::new();
    let mut l2 = BTreeMap::new();
    let mut l3 = BTreeMap::new();
    let mut l4 = BTreeMap::new();

    for i in 1..=n {
        let s = tree.motion_subspace(i).to_vec6();
        let ia = &state.inertia_art[i - 1];
        let d = s.dot(&(ia * s));
        if d.abs() < JOINT_INERTIA_MIN {
            return Err(DynamicsError::SingularJointInertia { link: i, value: d });
        }

        // W^R: f_i column picks up I_i^A from the a_i column.
        wr.insert(
            (VarId::new(VarKind::F, i), VarId::new(VarKind::A, i)),
            DMatrix::from_fn(6, 6, |r, c| ia[(r, c)]),
        );

        // Step 2: torque rows absorb S^T I^A times the acceleration rows.
        let sia = (ia * s).transpose();
        l1.insert(
            (
                ConstraintId::new(ConKind::NeTau, i),
                ConstraintId::new(ConKind::NeA, i),
            ),
            DMatrix::from_fn(1, 6, |_, c| sia[(0, c)]),
        );

        // Step 3: scale torque rows by (S^T I^A S)^{-1}.
        l2.insert(
            (
                ConstraintId::new(ConKind::NeTau, i),
                ConstraintId::new(ConKind::NeTau, i),
            ),
            DMatrix::from_element(1, 1, 1.0 / d),
        );

        // Step 4: acceleration rows absorb -S_i times the torque rows.
        l3.insert(
            (
                ConstraintId::new(ConKind::NeA, i),
                ConstraintId::new(ConKind::NeTau, i),
            ),
            DMatrix::from_fn(6, 1, |r, _| -s[r]),
        );

        // Step 5: force rows absorb ^i X*_j I_j^A times the acceleration
        // rows of their children.
        for &j in tree.children(i) {
            let xf = kin.x(j).to_motion_matrix().transpose();
            let block = xf * state.inertia_art[j - 1];
            l4.insert(
                (
                    ConstraintId::new(ConKind::NeF, i),
                    ConstraintId::new(ConKind::NeA, j),
                ),
                DMatrix::from_fn(6, 6, |r, c| block[(r, c)]),
            );
        }
    }

    Ok(AbaWeights {
        wr,
        wl_stages: [l1, l2, l3, l4],
    })
}

/// Which classic algorithm to count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassicAlgo {
    Rnea,
    Aba,
}

/// Deterministic flop count of one solve of the given algorithm on `tree`.
/// Counts depend only on the tree structure, never on numeric state.
pub fn count_flops_classic(algo: ClassicAlgo, tree: &KinematicTree) -> FlopCount {
    let n = tree.n_links();
    let zeros = vec![0.0; n];
    let fx = vec![SpatialVec::zero(); n];
    match algo {
        ClassicAlgo::Rnea => rnea_counted(tree, &zeros, &zeros, &zeros, &fx).unwrap().1,
        ClassicAlgo::Aba => aba_counted(tree, &zeros, &zeros, &zeros, &fx).unwrap().1,
    }
}
