//! Structural verification of the articulated-body weighting.
//!
//! The claim: under the forward-dynamics permutations, `W^L D W^R` is
//! block lower triangular with invertible diagonal blocks. The off-diagonal
//! cancellations are algebraic identities in the articulated inertias, so
//! floating-point evaluation leaves rounding dust above the diagonal. To
//! assert the zeros *exactly*, this test re-derives the articulated
//! inertias and every product in exact rational arithmetic (f64 inputs are
//! rationals); a second, independent f64 path then checks that forward
//! substitution on the weighted system reproduces the articulated-body
//! algorithm.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use dynlu::classic::{aba, aba_weights, aba_with_state};
use dynlu::indexing::{fd_permutations, ConKind, ConstraintId, VarId, VarKind};
use dynlu::model::builders::{random_state, random_tree};
use dynlu::model::{kinematics, KinematicTree};
use dynlu::spatial::SpatialVec;

type Rat = BigRational;

fn rat(x: f64) -> Rat {
    BigRational::from_float(x).expect("finite input")
}

#[derive(Clone, Debug, PartialEq)]
struct RMat {
    rows: usize,
    cols: usize,
    e: Vec<Rat>,
}

impl RMat {
    fn zeros(rows: usize, cols: usize) -> Self {
        RMat {
            rows,
            cols,
            e: vec![Rat::zero(); rows * cols],
        }
    }

    fn identity(n: usize) -> Self {
        let mut m = RMat::zeros(n, n);
        for k in 0..n {
            m.e[k * n + k] = Rat::one();
        }
        m
    }

    fn from_f64<F: Fn(usize, usize) -> f64>(rows: usize, cols: usize, f: F) -> Self {
        let mut m = RMat::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                m.e[r * cols + c] = rat(f(r, c));
            }
        }
        m
    }

    fn get(&self, r: usize, c: usize) -> &Rat {
        &self.e[r * self.cols + c]
    }

    fn set(&mut self, r: usize, c: usize, v: Rat) {
        self.e[r * self.cols + c] = v;
    }

    fn mul(&self, other: &RMat) -> RMat {
        assert_eq!(self.cols, other.rows);
        let mut out = RMat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a.is_zero() {
                    continue;
                }
                for c in 0..other.cols {
                    let add = a * other.get(k, c);
                    let cur = out.get(r, c) + add;
                    out.set(r, c, cur);
                }
            }
        }
        out
    }

    fn add(&self, other: &RMat) -> RMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for k in 0..out.e.len() {
            out.e[k] = &out.e[k] + &other.e[k];
        }
        out
    }

    fn sub(&self, other: &RMat) -> RMat {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let mut out = self.clone();
        for k in 0..out.e.len() {
            out.e[k] = &out.e[k] - &other.e[k];
        }
        out
    }

    fn scale(&self, s: &Rat) -> RMat {
        let mut out = self.clone();
        for k in 0..out.e.len() {
            out.e[k] = &out.e[k] * s;
        }
        out
    }

    fn transpose(&self) -> RMat {
        let mut out = RMat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c).clone());
            }
        }
        out
    }

    fn neg(&self) -> RMat {
        self.scale(&-Rat::one())
    }

    fn is_zero(&self) -> bool {
        self.e.iter().all(Rat::is_zero)
    }
}

type BlockMap<R, C> = BTreeMap<(R, C), RMat>;

fn add_block<R: Ord + Copy, C: Ord + Copy>(map: &mut BlockMap<R, C>, r: R, c: C, m: RMat) {
    match map.get_mut(&(r, c)) {
        Some(existing) => *existing = existing.add(&m),
        None => {
            map.insert((r, c), m);
        }
    }
}

struct RationalSystem {
    d: BlockMap<ConstraintId, VarId>,
    x6: Vec<RMat>,
    inertia_art: Vec<RMat>,
    s: Vec<RMat>,
    dinv: Vec<Rat>,
}

/// Rational FD system blocks plus the rational articulated-body recursion.
fn rational_system(tree: &KinematicTree, q: &[f64], qd: &[f64]) -> RationalSystem {
    let n = tree.n_links();
    let kin = kinematics(tree, q, qd).unwrap();

    let x6: Vec<RMat> = (1..=n)
        .map(|i| {
            let m = kin.x(i).to_motion_matrix();
            RMat::from_f64(6, 6, |r, c| m[(r, c)])
        })
        .collect();
    let i6: Vec<RMat> = (1..=n)
        .map(|i| {
            let m = tree.inertia(i).to_matrix6();
            RMat::from_f64(6, 6, |r, c| m[(r, c)])
        })
        .collect();
    let s: Vec<RMat> = (1..=n)
        .map(|i| {
            let v = tree.motion_subspace(i).to_vec6();
            RMat::from_f64(6, 1, |r, _| v[r])
        })
        .collect();

    // articulated inertias, exact
    let mut inertia_art = i6.clone();
    let mut dinv = vec![Rat::zero(); n];
    for i in (1..=n).rev() {
        let u = inertia_art[i - 1].mul(&s[i - 1]);
        let d = s[i - 1].transpose().mul(&u).get(0, 0).clone();
        assert!(!d.is_zero());
        dinv[i - 1] = d.recip();
        let ia_app = inertia_art[i - 1].sub(&u.scale(&dinv[i - 1]).mul(&u.transpose()));
        let parent = tree.parent(i);
        if parent != 0 {
            let xt = x6[i - 1].transpose();
            let contribution = xt.mul(&ia_app).mul(&x6[i - 1]);
            inertia_art[parent - 1] = inertia_art[parent - 1].add(&contribution);
        }
    }

    // constraint blocks (rhs not needed for the structural claim)
    let mut d: BlockMap<ConstraintId, VarId> = BTreeMap::new();
    for i in 1..=n {
        let ca = ConstraintId::new(ConKind::NeA, i);
        add_block(&mut d, ca, VarId::new(VarKind::A, i), RMat::identity(6).neg());
        add_block(&mut d, ca, VarId::new(VarKind::Qdd, i), s[i - 1].clone());
        if tree.parent(i) != 0 {
            add_block(
                &mut d,
                ca,
                VarId::new(VarKind::A, tree.parent(i)),
                x6[i - 1].clone(),
            );
        }

        let cf = ConstraintId::new(ConKind::NeF, i);
        add_block(&mut d, cf, VarId::new(VarKind::F, i), RMat::identity(6).neg());
        add_block(&mut d, cf, VarId::new(VarKind::A, i), i6[i - 1].clone());
        add_block(&mut d, cf, VarId::new(VarKind::Fx, i), RMat::identity(6).neg());
        for &j in tree.children(i) {
            add_block(
                &mut d,
                cf,
                VarId::new(VarKind::F, j),
                x6[j - 1].transpose(),
            );
        }

        let ct = ConstraintId::new(ConKind::NeTau, i);
        add_block(&mut d, ct, VarId::new(VarKind::Tau, i), RMat::identity(1).neg());
        add_block(&mut d, ct, VarId::new(VarKind::F, i), s[i - 1].transpose());

        add_block(
            &mut d,
            ConstraintId::new(ConKind::MeasFx, i),
            VarId::new(VarKind::Fx, i),
            RMat::identity(6),
        );
        add_block(
            &mut d,
            ConstraintId::new(ConKind::MeasTau, i),
            VarId::new(VarKind::Tau, i),
            RMat::identity(1),
        );
    }

    RationalSystem {
        d,
        x6,
        inertia_art,
        s,
        dinv,
    }
}

/// `M W^R` where `W^R` is identity plus the `(f_i, a_i) -> I_i^A` blocks.
fn apply_wr(sys: &RationalSystem, n: usize) -> BlockMap<ConstraintId, VarId> {
    let mut out = sys.d.clone();
    for i in 1..=n {
        let fi = VarId::new(VarKind::F, i);
        let ai = VarId::new(VarKind::A, i);
        let contributions: Vec<(ConstraintId, RMat)> = sys
            .d
            .iter()
            .filter(|((_, v), _)| *v == fi)
            .map(|((c, _), m)| (*c, m.mul(&sys.inertia_art[i - 1])))
            .collect();
        for (c, m) in contributions {
            add_block(&mut out, c, ai, m);
        }
    }
    out
}

/// Left-multiply by one staged factor: identity rows plus exceptions;
/// a diagonal exception replaces the identity coefficient.
fn apply_stage(
    m: &BlockMap<ConstraintId, VarId>,
    exceptions: &[(ConstraintId, ConstraintId, RMat)],
) -> BlockMap<ConstraintId, VarId> {
    let mut out = m.clone();
    for (target, source, w) in exceptions {
        if target == source {
            // replace the row: coefficient w instead of 1
            let row: Vec<(VarId, RMat)> = m
                .iter()
                .filter(|((c, _), _)| c == target)
                .map(|((_, v), blk)| (*v, blk.clone()))
                .collect();
            for (v, blk) in row {
                out.insert((*target, v), w.mul(&blk));
            }
        } else {
            let row: Vec<(VarId, RMat)> = m
                .iter()
                .filter(|((c, _), _)| c == source)
                .map(|((_, v), blk)| (*v, blk.clone()))
                .collect();
            for (v, blk) in row {
                add_block(&mut out, *target, v, w.mul(&blk));
            }
        }
    }
    out
}

fn weighted_system(
    tree: &KinematicTree,
    q: &[f64],
    qd: &[f64],
) -> (RationalSystem, BlockMap<ConstraintId, VarId>) {
    let n = tree.n_links();
    let sys = rational_system(tree, q, qd);
    let dwr = apply_wr(&sys, n);

    // Stage 1: torque rows absorb S^T I^A times acceleration rows.
    let stage1: Vec<_> = (1..=n)
        .map(|i| {
            (
                ConstraintId::new(ConKind::NeTau, i),
                ConstraintId::new(ConKind::NeA, i),
                sys.s[i - 1].transpose().mul(&sys.inertia_art[i - 1]),
            )
        })
        .collect();
    let m1 = apply_stage(&dwr, &stage1);

    // Stage 2: scale torque rows by (S^T I^A S)^{-1}.
    let stage2: Vec<_> = (1..=n)
        .map(|i| {
            let mut w = RMat::zeros(1, 1);
            w.set(0, 0, sys.dinv[i - 1].clone());
            (
                ConstraintId::new(ConKind::NeTau, i),
                ConstraintId::new(ConKind::NeTau, i),
                w,
            )
        })
        .collect();
    let m2 = apply_stage(&m1, &stage2);

    // Stage 3: acceleration rows absorb -S_i times torque rows.
    let stage3: Vec<_> = (1..=n)
        .map(|i| {
            (
                ConstraintId::new(ConKind::NeA, i),
                ConstraintId::new(ConKind::NeTau, i),
                sys.s[i - 1].neg(),
            )
        })
        .collect();
    let m3 = apply_stage(&m2, &stage3);

    // Stage 4: force rows absorb ^i X*_j I_j^A times child acceleration rows.
    let mut stage4 = Vec::new();
    for i in 1..=n {
        for &j in tree.children(i) {
            stage4.push((
                ConstraintId::new(ConKind::NeF, i),
                ConstraintId::new(ConKind::NeA, j),
                sys.x6[j - 1].transpose().mul(&sys.inertia_art[j - 1]),
            ));
        }
    }
    let m4 = apply_stage(&m3, &stage4);
    (sys, m4)
}

#[test]
fn weighted_system_is_exactly_block_lower_triangular() {
    for (seed, n) in [(1u64, 1usize), (2, 4), (3, 9), (4, 20)] {
        let tree = random_tree(seed, n);
        let (q, qd) = random_state(seed + 100, n);
        let (sys, weighted) = weighted_system(&tree, &q, &qd);
        let (p_fd, q_fd) = fd_permutations(n);

        for ((con, var), block) in &weighted {
            let row_pos = p_fd.position(con).unwrap();
            let col_pos = q_fd.position(var).unwrap();
            if col_pos > row_pos {
                assert!(
                    block.is_zero(),
                    "n={n} block ({con:?}, {var:?}) at ({row_pos}, {col_pos}) must cancel exactly"
                );
            }
        }

        // diagonal blocks are invertible: identities on measurement and
        // force/acceleration rows, exactly 1 on the transformed torque rows
        for i in 1..=n {
            let tau_row = ConstraintId::new(ConKind::NeTau, i);
            let qdd_col = VarId::new(VarKind::Qdd, i);
            let blk = weighted.get(&(tau_row, qdd_col)).expect("diag block");
            assert_eq!(blk.get(0, 0), &Rat::one(), "n={n} link {i}");
        }
        let _ = sys;
    }
}

#[test]
fn single_link_weights_have_one_exception_block() {
    let tree = random_tree(9, 1);
    let (q, qd) = random_state(10, 1);
    let fx = vec![SpatialVec::zero()];
    let (_, state, _) = aba_with_state(&tree, &q, &qd, &[0.3], &fx).unwrap();
    let kin = kinematics(&tree, &q, &qd).unwrap();
    let w = aba_weights(&tree, &kin, &state).unwrap();
    assert_eq!(w.wr.len(), 1);
    let key = (VarId::new(VarKind::F, 1), VarId::new(VarKind::A, 1));
    let block = w.wr.get(&key).expect("W^R exception at (f_1, a_1)");
    for r in 0..6 {
        for c in 0..6 {
            assert_eq!(block[(r, c)], state.inertia_art[0][(r, c)]);
        }
    }
    // no children: stage 4 is pure identity
    assert!(w.wl_stages[3].is_empty());
}

/// Forward substitution on the weighted system reproduces the
/// articulated-body algorithm (f64 path, production `aba_weights`).
#[test]
fn forward_substitution_reproduces_aba() {
    for (seed, n) in [(21u64, 3usize), (22, 10)] {
        let tree = random_tree(seed, n);
        let (q, qd) = random_state(seed + 7, n);
        let tau: Vec<f64> = (0..n).map(|k| (k as f64 * 0.61).sin()).collect();
        let fx: Vec<SpatialVec> = (0..n)
            .map(|k| {
                SpatialVec::new(
                    dynlu::spatial::Vec3::new(0.1 * k as f64, -0.2, 0.05),
                    dynlu::spatial::Vec3::new(0.3, 0.1, -0.4 * k as f64),
                )
            })
            .collect();
        let oracle = aba(&tree, &q, &qd, &tau, &fx).unwrap();
        let (_, state, _) = aba_with_state(&tree, &q, &qd, &tau, &fx).unwrap();
        let kin = kinematics(&tree, &q, &qd).unwrap();
        let weights = aba_weights(&tree, &kin, &state).unwrap();
        let (p_fd, q_fd) = fd_permutations(n);

        // assemble the FD system and its rhs in the fd ordering
        let base = dynlu::assembly::assemble_ne(&tree, &kin);
        let sys = dynlu::assembly::extend_fd(&base, &tau, &fx).unwrap();
        let (a_csc, b) = sys.to_csc(&p_fd, &q_fd).unwrap();
        let dim = b.len();
        let a = a_csc.to_dense();

        // dense W^L (staged product) and W^R in the same ordering
        let mut wl = nalgebra::DMatrix::<f64>::identity(dim, dim);
        for stage in &weights.wl_stages {
            let mut factor = nalgebra::DMatrix::<f64>::identity(dim, dim);
            for ((target, source), w) in stage {
                let tr = p_fd.scalar_range(target).unwrap();
                let sr = p_fd.scalar_range(source).unwrap();
                for (r_off, row) in (tr.clone()).enumerate() {
                    for (c_off, col) in (sr.clone()).enumerate() {
                        factor[(row, col)] = w[(r_off, c_off)];
                    }
                }
            }
            wl = factor * wl;
        }
        let mut wr = nalgebra::DMatrix::<f64>::identity(dim, dim);
        for ((v1, v2), w) in &weights.wr {
            let rr = q_fd.scalar_range(v1).unwrap();
            let cr = q_fd.scalar_range(v2).unwrap();
            for (r_off, row) in (rr.clone()).enumerate() {
                for (c_off, col) in (cr.clone()).enumerate() {
                    wr[(row, col)] = w[(r_off, c_off)];
                }
            }
        }

        let weighted = &wl * &a * &wr;
        let rhs = -(&wl * nalgebra::DVector::from_vec(b));

        // forward substitution reading only the lower triangle (the upper
        // part is algebraically zero; see the exact rational check)
        let mut dprime = nalgebra::DVector::zeros(dim);
        for r in 0..dim {
            let mut acc = rhs[r];
            for c in 0..r {
                acc -= weighted[(r, c)] * dprime[c];
            }
            dprime[r] = acc / weighted[(r, r)];
        }
        let d = wr * dprime;

        for i in 1..=n {
            let qr = q_fd.scalar_range(&VarId::new(VarKind::Qdd, i)).unwrap();
            let got = d[qr.start];
            let want = oracle.qdd[i - 1];
            let scale = 1.0f64.max(want.abs());
            assert!(
                (got - want).abs() <= 1e-8 * scale,
                "seed {seed} link {i}: qdd {got} vs {want}"
            );
            let ar = q_fd.scalar_range(&VarId::new(VarKind::A, i)).unwrap();
            for (off, idx) in ar.enumerate() {
                let want = oracle.a[i - 1].to_vec6()[off];
                assert!((d[idx] - want).abs() <= 1e-8 * (1.0 + want.abs()));
            }
        }
    }
}

/// The exact-rational route and the production f64 weights agree on which
/// blocks exist (spot check on the stage-4 exception blocks).
#[test]
fn rational_and_f64_weights_agree_structurally() {
    let n = 6;
    let tree = random_tree(31, n);
    let (q, qd) = random_state(32, n);
    let fx = vec![SpatialVec::zero(); n];
    let tau = vec![0.0; n];
    let (_, state, _) = aba_with_state(&tree, &q, &qd, &tau, &fx).unwrap();
    let kin = kinematics(&tree, &q, &qd).unwrap();
    let weights = aba_weights(&tree, &kin, &state).unwrap();
    let sys = rational_system(&tree, &q, &qd);

    for i in 1..=n {
        for &j in tree.children(i) {
            let key = (
                ConstraintId::new(ConKind::NeF, i),
                ConstraintId::new(ConKind::NeA, j),
            );
            let f64_block = weights.wl_stages[3].get(&key).expect("stage-4 block");
            let exact = sys.x6[j - 1].transpose().mul(&sys.inertia_art[j - 1]);
            for r in 0..6 {
                for c in 0..6 {
                    let e = exact.get(r, c).to_f64();
                    assert!((f64_block[(r, c)] - e).abs() <= 1e-9 * (1.0 + e.abs()));
                }
            }
        }
    }
}

trait ToF64 {
    fn to_f64(&self) -> f64;
}

impl ToF64 for BigRational {
    fn to_f64(&self) -> f64 {
        let num = self.numer();
        let den = self.denom();
        // good enough for comparison tolerances
        let fnum = big_to_f64(num);
        let fden = big_to_f64(den);
        fnum / fden
    }
}

fn big_to_f64(x: &BigInt) -> f64 {
    let s = x.to_string();
    s.parse::<f64>().unwrap_or(f64::MAX)
}
