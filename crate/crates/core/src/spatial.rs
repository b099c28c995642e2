//! Spatial (6D) vector algebra: motion/force vectors, cross operators,
//! coordinate transforms, and rigid-body inertias.
//!
//! Conventions follow the usual spatial-vector formulation: the angular part
//! occupies components 0-2 and the linear part components 3-5. All
//! quantities are expressed in body-local coordinates. Transforms are kept
//! in structured `(rotation, translation)` form rather than as raw 6x6
//! matrices so that downstream sparsity analysis can reason about their
//! block structure; dense 6x6 expansions exist for test oracles.

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};

use crate::flops::FlopCount;

pub type Mat3 = Matrix3<f64>;
pub type Mat6 = Matrix6<f64>;
pub type Vec3 = Vector3<f64>;
pub type Vec6 = Vector6<f64>;

/// Default relative tolerance for numeric comparisons across the crate.
pub const NUMERIC_REL_TOL: f64 = 1e-9;
/// Orthonormality tolerance for rotation matrices.
pub const ROTATION_TOL: f64 = 1e-12;

// Operation costs for the primitives below, used by the classic-algorithm
// flop accounting. Each constant is the exact (mul, add, div) tally of the
// corresponding function body.
pub const COST_CROSS3: FlopCount = FlopCount::new(6, 3, 0);
pub const COST_MAT3_VEC: FlopCount = FlopCount::new(9, 6, 0);
pub const COST_VEC3_ADD: FlopCount = FlopCount::new(0, 3, 0);
pub const COST_VEC6_ADD: FlopCount = FlopCount::new(0, 6, 0);
pub const COST_VEC6_SCALE: FlopCount = FlopCount::new(6, 0, 0);
pub const COST_DOT6: FlopCount = FlopCount::new(6, 5, 0);
/// `apply_motion` / `apply_force` / their inverses: two rotations, one
/// 3-vector cross, one 3-vector add.
pub const COST_TRANSFORM_APPLY: FlopCount = FlopCount::new(24, 18, 0);
/// `SpatialInertia::mul_vec`: H*w (9,6) + two crosses (12,6) + scale (3,0)
/// + one 3-vector add and one subtract (0,6).
pub const COST_INERTIA_VEC: FlopCount = FlopCount::new(24, 18, 0);
/// `cross_motion_vec` / `cross_force_vec`: three 3-vector crosses and one add.
pub const COST_CROSS_APPLY: FlopCount = FlopCount::new(18, 12, 0);
/// Dense 6x6 by 6-vector product.
pub const COST_MAT6_VEC: FlopCount = FlopCount::new(36, 30, 0);
/// `SpatialTransform::to_motion_matrix`: the -R p x corner (skew has no
/// flops, 3x3 product has 27 mul / 18 add, negation is free).
pub const COST_TRANSFORM_DENSE: FlopCount = FlopCount::new(27, 18, 0);
/// Dense 6x6 by 6x6 product.
pub const COST_MAT6_MAT6: FlopCount = FlopCount::new(216, 180, 0);

/// 3x3 skew-symmetric matrix such that `skew(a) * b == a.cross(&b)`.
pub fn skew(a: &Vec3) -> Mat3 {
    Mat3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// A 6D motion or force vector: angular part first, linear part second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialVec {
    pub angular: Vec3,
    pub linear: Vec3,
}

impl SpatialVec {
    pub fn new(angular: Vec3, linear: Vec3) -> Self {
        SpatialVec { angular, linear }
    }

    pub fn zero() -> Self {
        SpatialVec {
            angular: Vec3::zeros(),
            linear: Vec3::zeros(),
        }
    }

    pub fn from_vec6(v: &Vec6) -> Self {
        SpatialVec {
            angular: Vec3::new(v[0], v[1], v[2]),
            linear: Vec3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vec6(&self) -> Vec6 {
        Vec6::new(
            self.angular.x,
            self.angular.y,
            self.angular.z,
            self.linear.x,
            self.linear.y,
            self.linear.z,
        )
    }

    pub fn dot(&self, other: &SpatialVec) -> f64 {
        self.angular.dot(&other.angular) + self.linear.dot(&other.linear)
    }

    pub fn scale(&self, s: f64) -> SpatialVec {
        SpatialVec {
            angular: self.angular * s,
            linear: self.linear * s,
        }
    }

    pub fn norm_inf(&self) -> f64 {
        self.to_vec6().amax()
    }
}

impl std::ops::Add for SpatialVec {
    type Output = SpatialVec;
    fn add(self, rhs: SpatialVec) -> SpatialVec {
        SpatialVec::new(self.angular + rhs.angular, self.linear + rhs.linear)
    }
}

impl std::ops::Sub for SpatialVec {
    type Output = SpatialVec;
    fn sub(self, rhs: SpatialVec) -> SpatialVec {
        SpatialVec::new(self.angular - rhs.angular, self.linear - rhs.linear)
    }
}

impl std::ops::Neg for SpatialVec {
    type Output = SpatialVec;
    fn neg(self) -> SpatialVec {
        SpatialVec::new(-self.angular, -self.linear)
    }
}

/// Motion-vector cross operator as a 6x6 matrix:
/// `[[w x, 0], [v x, w x]]`.
pub fn cross_motion(v: &SpatialVec) -> Mat6 {
    let wx = skew(&v.angular);
    let vx = skew(&v.linear);
    let mut m = Mat6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&wx);
    m.fixed_view_mut::<3, 3>(3, 0).copy_from(&vx);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&wx);
    m
}

/// Force-vector (dual) cross operator as a 6x6 matrix:
/// `[[w x, v x], [0, w x]]`. Satisfies `cross_force(v) == -cross_motion(v)^T`.
pub fn cross_force(v: &SpatialVec) -> Mat6 {
    let wx = skew(&v.angular);
    let vx = skew(&v.linear);
    let mut m = Mat6::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&wx);
    m.fixed_view_mut::<3, 3>(0, 3).copy_from(&vx);
    m.fixed_view_mut::<3, 3>(3, 3).copy_from(&wx);
    m
}

/// `v x s` for a motion vector `s`, without forming the 6x6 operator.
pub fn cross_motion_vec(v: &SpatialVec, s: &SpatialVec) -> SpatialVec {
    SpatialVec {
        angular: v.angular.cross(&s.angular),
        linear: v.angular.cross(&s.linear) + v.linear.cross(&s.angular),
    }
}

/// `v x* f` for a force vector `f`.
pub fn cross_force_vec(v: &SpatialVec, f: &SpatialVec) -> SpatialVec {
    SpatialVec {
        angular: v.angular.cross(&f.angular) + v.linear.cross(&f.linear),
        linear: v.angular.cross(&f.linear),
    }
}

/// A spatial coordinate transform `^B X_A` in structured form.
///
/// `rotation` maps A-frame coordinates into B-frame coordinates and
/// `translation` is the position of B's origin expressed in A coordinates.
/// The motion form is `[[E, 0], [-E p x, E]]` and the force form
/// `[[E, -E p x], [0, E]] = (X^-1)^T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl SpatialTransform {
    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        SpatialTransform { rotation, translation }
    }

    pub fn identity() -> Self {
        SpatialTransform {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Rotation about `axis` (unit vector) by angle `q`, no translation.
    ///
    /// `rotation` is the transpose of the rotating-frame matrix so that the
    /// result is the coordinate transform from the un-rotated frame into the
    /// rotated frame.
    pub fn rotation_about(axis: &Vec3, q: f64) -> Self {
        let r = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(*axis),
            q,
        );
        SpatialTransform {
            rotation: r.matrix().transpose(),
            translation: Vec3::zeros(),
        }
    }

    /// Pure translation by `p` (new origin at `p` in old coordinates).
    pub fn translation_of(p: &Vec3) -> Self {
        SpatialTransform {
            rotation: Mat3::identity(),
            translation: *p,
        }
    }

    /// `true` if the rotation block is orthonormal with determinant +1.
    pub fn rotation_is_valid(&self) -> bool {
        let e = &self.rotation;
        let err = (e.transpose() * e - Mat3::identity()).amax();
        err <= ROTATION_TOL * 10.0 && (e.determinant() - 1.0).abs() <= 1e-9
    }

    /// Apply the motion form: `v_B = X v_A`.
    pub fn apply_motion(&self, v: &SpatialVec) -> SpatialVec {
        let e = &self.rotation;
        SpatialVec {
            angular: e * v.angular,
            linear: e * (v.linear - self.translation.cross(&v.angular)),
        }
    }

    /// Apply the force form: `f_B = X* f_A` with `X* = (X^-1)^T`.
    pub fn apply_force(&self, f: &SpatialVec) -> SpatialVec {
        let e = &self.rotation;
        SpatialVec {
            angular: e * (f.angular - self.translation.cross(&f.linear)),
            linear: e * f.linear,
        }
    }

    /// Apply the inverse motion form: `v_A = X^-1 v_B`.
    pub fn inv_apply_motion(&self, v: &SpatialVec) -> SpatialVec {
        let et = self.rotation.transpose();
        let w = et * v.angular;
        SpatialVec {
            angular: w,
            linear: et * v.linear + self.translation.cross(&w),
        }
    }

    /// Apply the inverse force form: `f_A = (X*)^-1 f_B = X^T f_B`.
    pub fn inv_apply_force(&self, f: &SpatialVec) -> SpatialVec {
        let et = self.rotation.transpose();
        let lin = et * f.linear;
        SpatialVec {
            angular: et * f.angular + self.translation.cross(&lin),
            linear: lin,
        }
    }

    /// `self` is `^C X_B`, `first` is `^B X_A`; result is `^C X_A`.
    pub fn compose(&self, first: &SpatialTransform) -> SpatialTransform {
        SpatialTransform {
            rotation: self.rotation * first.rotation,
            translation: first.translation + first.rotation.transpose() * self.translation,
        }
    }

    /// `^A X_B` from `^B X_A`.
    pub fn invert(&self) -> SpatialTransform {
        SpatialTransform {
            rotation: self.rotation.transpose(),
            translation: -(self.rotation * self.translation),
        }
    }

    /// Dense 6x6 motion form `[[E, 0], [-E p x, E]]`.
    pub fn to_motion_matrix(&self) -> Mat6 {
        let e = &self.rotation;
        let corner = -e * skew(&self.translation);
        let mut m = Mat6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(e);
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&corner);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(e);
        m
    }

    /// Dense 6x6 force form `[[E, -E p x], [0, E]]`.
    pub fn to_force_matrix(&self) -> Mat6 {
        let e = &self.rotation;
        let corner = -e * skew(&self.translation);
        let mut m = Mat6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(e);
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&corner);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(e);
        m
    }
}

/// Rigid-body spatial inertia in structured form.
///
/// `rotational` is the 3x3 inertia about the link-frame origin
/// (`I_C + m cx cx^T`), `com_moment` is `m * c` where `c` is the center of
/// mass in link coordinates. The dense 6x6 form is
/// `[[rotational, hx], [hx^T, m 1_3]]` with `h = com_moment`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialInertia {
    pub mass: f64,
    pub com_moment: Vec3,
    pub rotational: Mat3,
}

impl SpatialInertia {
    /// Build from mass, center-of-mass offset, and inertia about the COM.
    pub fn from_mass_com_inertia(mass: f64, com: &Vec3, inertia_com: &Mat3) -> Self {
        let cx = skew(com);
        // (cx cx^T) * mass keeps the parallel-axis term bitwise symmetric
        let parallel_axis = (cx * cx.transpose()) * mass;
        SpatialInertia {
            mass,
            com_moment: mass * com,
            rotational: inertia_com + parallel_axis,
        }
    }

    pub fn zero() -> Self {
        SpatialInertia {
            mass: 0.0,
            com_moment: Vec3::zeros(),
            rotational: Mat3::zeros(),
        }
    }

    /// `I v` without forming the 6x6 matrix.
    pub fn mul_vec(&self, v: &SpatialVec) -> SpatialVec {
        let h = &self.com_moment;
        SpatialVec {
            angular: self.rotational * v.angular + h.cross(&v.linear),
            linear: self.mass * v.linear - h.cross(&v.angular),
        }
    }

    pub fn to_matrix6(&self) -> Mat6 {
        let hx = skew(&self.com_moment);
        let mut m = Mat6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotational);
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&hx);
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&hx.transpose());
        m.fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&(self.mass * Mat3::identity()));
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_spatial(rng: &mut StdRng) -> SpatialVec {
        SpatialVec::new(
            Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
            Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
        )
    }

    fn random_transform(rng: &mut StdRng) -> SpatialTransform {
        let axis = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let axis = if axis.norm() < 1e-6 { Vec3::z() } else { axis };
        let angle = rng.random_range(-3.0..3.0);
        let p = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let mut x = SpatialTransform::rotation_about(&axis, angle);
        x.translation = p;
        x
    }

    #[test]
    fn cross_motion_of_zero_is_zero() {
        assert_eq!(cross_motion(&SpatialVec::zero()), Mat6::zeros());
        assert_eq!(cross_force(&SpatialVec::zero()), Mat6::zeros());
    }

    #[test]
    fn cross_motion_annihilates_itself() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..50 {
            let v = random_spatial(&mut rng);
            let r = cross_motion(&v) * v.to_vec6();
            assert!(r.amax() <= 1e-14, "v x v = {r}");
        }
    }

    #[test]
    fn cross_motion_unit_z() {
        let v = SpatialVec::new(Vec3::z(), Vec3::zeros());
        let m = cross_motion(&v);
        let wx = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(m.fixed_view::<3, 3>(0, 0).clone_owned(), wx);
        assert_eq!(m.fixed_view::<3, 3>(3, 3).clone_owned(), wx);
        assert_eq!(m.fixed_view::<3, 3>(0, 3).clone_owned(), Mat3::zeros());
        assert_eq!(m.fixed_view::<3, 3>(3, 0).clone_owned(), Mat3::zeros());
    }

    #[test]
    fn cross_force_is_negative_transpose_of_cross_motion() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let v = random_spatial(&mut rng);
            // Entries are negations of identical products, so this is exact.
            assert_eq!(cross_force(&v), -cross_motion(&v).transpose());
        }
    }

    #[test]
    fn cross_vec_forms_match_matrix_forms() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..20 {
            let v = random_spatial(&mut rng);
            let s = random_spatial(&mut rng);
            let m = cross_motion(&v) * s.to_vec6();
            assert_relative_eq!(cross_motion_vec(&v, &s).to_vec6(), m, epsilon = 1e-13);
            let f = cross_force(&v) * s.to_vec6();
            assert_relative_eq!(cross_force_vec(&v, &s).to_vec6(), f, epsilon = 1e-13);
        }
    }

    #[test]
    fn bias_force_matches_dense_oracle() {
        let mut rng = StdRng::seed_from_u64(17);
        let inertia = SpatialInertia::from_mass_com_inertia(
            1.7,
            &Vec3::new(0.1, -0.2, 0.3),
            &Mat3::new(0.4, 0.01, 0.0, 0.01, 0.5, 0.02, 0.0, 0.02, 0.6),
        );
        for _ in 0..10 {
            let v = random_spatial(&mut rng);
            let nu = cross_force_vec(&v, &inertia.mul_vec(&v));
            let dense = cross_force(&v) * (inertia.to_matrix6() * v.to_vec6());
            assert_relative_eq!(nu.to_vec6(), dense, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_transform_is_noop() {
        let v = SpatialVec::new(Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 5.0, 6.0));
        let x = SpatialTransform::identity();
        assert_eq!(x.apply_motion(&v), v);
        assert_eq!(x.apply_force(&v), v);
    }

    #[test]
    fn transform_group_laws() {
        let mut rng = StdRng::seed_from_u64(19);
        for _ in 0..30 {
            let x1 = random_transform(&mut rng);
            let x2 = random_transform(&mut rng);
            let lhs = x2.compose(&x1).invert();
            let rhs = x1.invert().compose(&x2.invert());
            assert_relative_eq!(lhs.rotation, rhs.rotation, epsilon = 1e-12);
            assert_relative_eq!(lhs.translation, rhs.translation, epsilon = 1e-12);

            // Structured application agrees with the dense matrix forms.
            let v = random_spatial(&mut rng);
            assert_relative_eq!(
                x1.apply_motion(&v).to_vec6(),
                x1.to_motion_matrix() * v.to_vec6(),
                epsilon = 1e-12
            );
            assert_relative_eq!(
                x1.apply_force(&v).to_vec6(),
                x1.to_force_matrix() * v.to_vec6(),
                epsilon = 1e-12
            );
            assert_relative_eq!(
                x1.inv_apply_motion(&v).to_vec6(),
                x1.invert().to_motion_matrix() * v.to_vec6(),
                epsilon = 1e-12
            );
            assert_relative_eq!(
                x1.inv_apply_force(&v).to_vec6(),
                x1.to_motion_matrix().transpose() * v.to_vec6(),
                epsilon = 1e-12
            );

            // Force form is the inverse-transpose of the motion form.
            let fm = x1.to_force_matrix();
            let im = x1.invert().to_motion_matrix().transpose();
            assert_relative_eq!(fm, im, epsilon = 1e-12);

            // compose matches dense multiplication
            assert_relative_eq!(
                x2.compose(&x1).to_motion_matrix(),
                x2.to_motion_matrix() * x1.to_motion_matrix(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn inertia_matrix_is_symmetric() {
        let inertia = SpatialInertia::from_mass_com_inertia(
            2.5,
            &Vec3::new(0.3, 0.1, -0.2),
            &Mat3::new(0.2, 0.01, 0.02, 0.01, 0.3, 0.03, 0.02, 0.03, 0.4),
        );
        let m = inertia.to_matrix6();
        assert_eq!(m, m.transpose());
        // structured mul_vec agrees with the dense form
        let v = SpatialVec::new(Vec3::new(0.5, -1.0, 2.0), Vec3::new(1.0, 0.0, -0.5));
        assert_relative_eq!(inertia.mul_vec(&v).to_vec6(), m * v.to_vec6(), epsilon = 1e-13);
    }

    proptest! {
        #[test]
        fn power_invariance(seed in 0u64..1000) {
            let mut rng = StdRng::seed_from_u64(seed);
            let x = random_transform(&mut rng);
            let v = random_spatial(&mut rng);
            let f = random_spatial(&mut rng);
            let before = f.dot(&v);
            let after = x.apply_force(&f).dot(&x.apply_motion(&v));
            let scale = 1.0f64.max(before.abs());
            prop_assert!((before - after).abs() <= 1e-12 * scale);
        }
    }
}
