//! Physical constants, rotations, poses and the small-angle orientation map.

use std::f64::consts::PI;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Reduced Planck constant, J·s (CODATA 2018, exact).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K (CODATA 2018, exact).
pub const KB: f64 = 1.380_649e-23;
/// Unified atomic mass unit, kg (CODATA 2018).
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// Orthonormality tolerance per entry for validated rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-12;

/// Largest relative angle accepted by the rotation logarithm.
pub const MAX_LOG_ANGLE: f64 = PI - 1e-6;

/// Skew-symmetric matrix `[a]_×` with `[a]_× b = a × b`.
pub fn skew(a: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -a.z, a.y, a.z, 0.0, -a.x, -a.y, a.x, 0.0)
}

/// Proper rotation tensor. Rotates body-fixed vectors from the reference
/// orientation into the current one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation(Matrix3<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Validates orthonormality and handedness to [`ROTATION_TOLERANCE`].
    pub fn try_from_matrix(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidRotation("non-finite entry".into()));
        }
        let dev = (m.transpose() * m - Matrix3::identity()).amax();
        if dev > ROTATION_TOLERANCE {
            return Err(Error::InvalidRotation(format!(
                "R^T R deviates from identity by {dev:e}"
            )));
        }
        let det = m.determinant();
        if (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidRotation(format!("det R = {det}")));
        }
        Ok(Rotation(m))
    }

    /// Row-major entries, validated like [`Rotation::try_from_matrix`].
    pub fn try_from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::try_from_matrix(Matrix3::from_fn(|i, j| rows[i][j]))
    }

    /// Nearest proper rotation in the Frobenius norm (polar projection).
    pub fn from_matrix_projected(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidRotation("non-finite entry".into()));
        }
        let svd = m.svd(true, true);
        let (u, v_t) = match (svd.u, svd.v_t) {
            (Some(u), Some(v_t)) => (u, v_t),
            _ => return Err(Error::InvalidRotation("SVD failed".into())),
        };
        let mut q = u * v_t;
        if q.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            q = u * v_t;
        }
        if q.determinant() <= 0.0 {
            return Err(Error::InvalidRotation("singular input".into()));
        }
        Ok(Rotation(q))
    }

    /// Rotation by `angle` (rad) about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let norm = axis.norm();
        if norm == 0.0 || angle == 0.0 {
            return Self::identity();
        }
        rodrigues(&(axis * (angle / norm)))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Rotation(self.0.transpose())
    }

    pub fn apply(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }

    /// `Rᵀ v`, i.e. a lab-frame vector expressed in the body frame.
    pub fn apply_inverse(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0.tr_mul(v)
    }

    /// Composition followed by polar re-orthonormalization.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        let m = self.0 * other.0;
        Self::from_matrix_projected(m).unwrap_or(Rotation(m))
    }

    pub fn angle(&self) -> f64 {
        let (angle, _) = angle_and_vee(&self.0);
        angle
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        let m = &self.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        self.compose(&rhs)
    }
}

/// Center-of-mass position (m) and orientation of the nanoparticle.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub rotation: Rotation,
}

impl Pose {
    pub fn new(position: Vector3<f64>, rotation: Rotation) -> Self {
        Pose { position, rotation }
    }
}

/// Rotation vector `w = θ·u` on the principal branch `|w| < π`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SmallAngle(Vector3<f64>);

impl SmallAngle {
    pub fn new(w: Vector3<f64>) -> Result<Self> {
        let angle = w.norm();
        if !angle.is_finite() || angle >= PI {
            return Err(Error::AngleOutOfRange { angle, limit: PI });
        }
        Ok(SmallAngle(w))
    }

    pub fn vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }
}

fn rodrigues(w: &Vector3<f64>) -> Rotation {
    let theta = w.norm();
    let k = skew(w);
    // sin θ/θ and (1 - cos θ)/θ² with series below the cancellation threshold
    let (a, b) = if theta < 1e-4 {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    let m = Matrix3::identity() + k * a + k * k * b;
    Rotation::from_matrix_projected(m).unwrap_or(Rotation(m))
}

/// Returns the rotation angle of `q` and `vee((q - qᵀ)/2) = sin θ · u`.
fn angle_and_vee(q: &Matrix3<f64>) -> (f64, Vector3<f64>) {
    let vee = Vector3::new(
        q[(2, 1)] - q[(1, 2)],
        q[(0, 2)] - q[(2, 0)],
        q[(1, 0)] - q[(0, 1)],
    ) * 0.5;
    let cos = 0.5 * (q.trace() - 1.0);
    (vee.norm().atan2(cos), vee)
}

/// `exp([w]_×)` via Rodrigues' formula, re-orthonormalized.
pub fn rotation_from_w(w: &SmallAngle) -> Rotation {
    rodrigues(&w.0)
}

/// Rotation vector of `referenceᵀ · actual` on the principal branch.
pub fn w_from_rotations(reference: &Rotation, actual: &Rotation) -> Result<SmallAngle> {
    let q = reference.0.tr_mul(&actual.0);
    let (theta, vee) = angle_and_vee(&q);
    if theta >= MAX_LOG_ANGLE {
        return Err(Error::AngleOutOfRange {
            angle: theta,
            limit: MAX_LOG_ANGLE,
        });
    }
    if theta < 1e-4 {
        let t2 = theta * theta;
        return Ok(SmallAngle(vee * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0)));
    }
    if theta < 0.5 * PI {
        return Ok(SmallAngle(vee * (theta / theta.sin())));
    }
    // near π the skew part is small; take the axis from (q + qᵀ)/2 - cos θ·𝟙 = (1 - cos θ) u uᵀ
    let cos = theta.cos();
    let sym = (q + q.transpose()) * 0.5 - Matrix3::identity() * cos;
    let diag = Vector3::new(sym[(0, 0)], sym[(1, 1)], sym[(2, 2)]);
    let k = diag.imax();
    let mut axis = sym.column(k).into_owned();
    axis /= axis.norm();
    if axis.dot(&vee) < 0.0 {
        axis = -axis;
    }
    Ok(SmallAngle(axis * theta))
}

/// Linear momentum `√(2 m E)` of an atom of mass `m_atom` with kinetic energy `energy`.
pub fn momentum_from_energy(energy: f64, m_atom: f64) -> Result<f64> {
    if energy < 0.0 || energy.is_nan() {
        return Err(Error::NegativeEnergy(energy));
    }
    if m_atom <= 0.0 || !m_atom.is_finite() {
        return Err(Error::InvalidInput(format!("atom mass must be positive, got {m_atom}")));
    }
    Ok((2.0 * m_atom * energy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn rodrigues_oracle(axis: Vector3<f64>, theta: f64) -> Matrix3<f64> {
        let u = axis.normalize();
        let ux = Matrix3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0);
        Matrix3::identity() * theta.cos() + ux * theta.sin() + u * u.transpose() * (1.0 - theta.cos())
    }

    #[test]
    fn log_of_identical_rotations_is_zero() {
        let r = Rotation::from_axis_angle(&Vector3::new(0.3, -1.0, 0.2), 0.7);
        let w = w_from_rotations(&r, &r).unwrap();
        assert!(w.vector().norm() < 1e-15);
    }

    #[test]
    fn log_of_z_rotation() {
        let r = Rotation::try_from_matrix(rodrigues_oracle(Vector3::z(), 0.1)).unwrap();
        let w = w_from_rotations(&Rotation::identity(), &r).unwrap();
        assert_abs_diff_eq!(*w.vector(), Vector3::new(0.0, 0.0, 0.1), epsilon = 1e-14);
    }

    #[test]
    fn log_of_large_rotation_about_diagonal() {
        let axis = Vector3::new(1.0, 1.0, 1.0) / 3f64.sqrt();
        let q = rodrigues_oracle(axis, 1.9);
        // oracle: angle from the trace, axis from the skew part
        let theta = ((q.trace() - 1.0) / 2.0).acos();
        let u = Vector3::new(q[(2, 1)] - q[(1, 2)], q[(0, 2)] - q[(2, 0)], q[(1, 0)] - q[(0, 1)])
            / (2.0 * theta.sin());
        assert_abs_diff_eq!(theta, 1.9, epsilon = 1e-13);
        let r = Rotation::try_from_matrix(q).unwrap();
        let w = w_from_rotations(&Rotation::identity(), &r).unwrap();
        assert_abs_diff_eq!(*w.vector(), u * theta, epsilon = 1e-12);
        let back = rotation_from_w(&w);
        assert_abs_diff_eq!(*back.matrix(), q, epsilon = 1e-12);
    }

    #[test]
    fn log_rejects_half_turn() {
        let r = Rotation::from_axis_angle(&Vector3::x(), PI);
        assert!(matches!(
            w_from_rotations(&Rotation::identity(), &r),
            Err(Error::AngleOutOfRange { .. })
        ));
    }

    #[test]
    fn exp_of_zero_and_quarter_turn() {
        let id = rotation_from_w(&SmallAngle::new(Vector3::zeros()).unwrap());
        assert_eq!(*id.matrix(), Matrix3::identity());
        let q = rotation_from_w(&SmallAngle::new(Vector3::new(0.0, 0.0, PI / 2.0)).unwrap());
        assert_abs_diff_eq!(q.apply(&Vector3::x()), Vector3::y(), epsilon = 1e-15);
        assert_abs_diff_eq!(q.apply(&Vector3::y()), -Vector3::x(), epsilon = 1e-15);
    }

    #[test]
    fn small_angle_rejects_out_of_branch() {
        assert!(SmallAngle::new(Vector3::new(0.0, 4.0, 0.0)).is_err());
    }

    #[test]
    fn rotation_validation() {
        assert!(Rotation::try_from_matrix(Matrix3::identity() * 1.001).is_err());
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Rotation::try_from_matrix(reflection).is_err());
        let projected = Rotation::from_matrix_projected(Matrix3::identity() * 1.001).unwrap();
        assert_abs_diff_eq!(*projected.matrix(), Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn momentum_examples() {
        assert_eq!(momentum_from_energy(0.0, 4.65e-26).unwrap(), 0.0);
        let p1 = momentum_from_energy(3e-21, 4.65e-26).unwrap();
        let p4 = momentum_from_energy(12e-21, 4.65e-26).unwrap();
        assert_abs_diff_eq!(p4, 2.0 * p1, epsilon = 1e-15 * p4);
        // high-precision reference: sqrt(2 * 4.65e-26 * 4.14195e-21) = 1.962654707277874694e-23 (mpmath, 30 digits)
        let p = momentum_from_energy(4.14195e-21, 4.65e-26).unwrap();
        assert_abs_diff_eq!(p, 1.962_654_707_277_874_7e-23, epsilon = 1e-14 * p);
        assert!(matches!(momentum_from_energy(-1.0, 1.0), Err(Error::NegativeEnergy(_))));
    }

    fn arb_w(max: f64) -> impl Strategy<Value = Vector3<f64>> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, 0.0..max).prop_filter_map("nonzero axis", |(x, y, z, t)| {
            let v = Vector3::new(x, y, z);
            (v.norm() > 1e-3).then(|| v.normalize() * t)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn log_exp_round_trip(w in arb_w(3.0)) {
            let r = rotation_from_w(&SmallAngle::new(w).unwrap());
            let back = w_from_rotations(&Rotation::identity(), &r).unwrap();
            prop_assert!((back.vector() - w).amax() < 1e-10);
        }

        #[test]
        fn composition_stays_orthonormal(a in arb_w(3.0), b in arb_w(3.0)) {
            let mut r = Rotation::identity();
            for _ in 0..50 {
                r = r * rotation_from_w(&SmallAngle::new(a).unwrap()) * rotation_from_w(&SmallAngle::new(b).unwrap());
            }
            let dev = (r.matrix().transpose() * r.matrix() - Matrix3::identity()).amax();
            prop_assert!(dev < 1e-11);
            prop_assert!((r.matrix().determinant() - 1.0).abs() < 1e-11);
        }

        #[test]
        fn momentum_is_monotone_and_half_homogeneous(e in 0.0..1e-19f64, de in 1e-24..1e-19f64, m in 1e-27..1e-24f64, c in 0.1..10.0f64) {
            let p = momentum_from_energy(e, m).unwrap();
            prop_assert!(momentum_from_energy(e + de, m).unwrap() > p);
            let scaled = momentum_from_energy(c * e, c * m).unwrap();
            prop_assert!((scaled - c * p).abs() <= 1e-14 * scaled.max(1e-300));
        }
    }
}
