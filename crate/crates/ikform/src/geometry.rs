//! Planar and spatial rigid-body poses.
//!
//! Everything is generic over [`Scalar`] so the same pose arithmetic serves
//! plain evaluation and forward-mode differentiation. Rotations are stored as
//! 3x3 matrices; Euler angles appear only at the interface (targets, JSON,
//! orientation residuals) using the extrinsic X-then-Y-then-Z convention,
//! `R = Rz(yaw) * Ry(pitch) * Rx(roll)`.

use crate::autodiff::Scalar;
use serde::{Deserialize, Serialize};

/// 3-vector over any scalar.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Vec3<T = f64> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Scalar> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }

    pub fn zero() -> Self {
        Vec3::splat(0.0)
    }

    pub fn splat(c: f64) -> Self {
        Vec3::new(T::constant(c), T::constant(c), T::constant(c))
    }

    pub fn from_f64(v: &Vec3<f64>) -> Self {
        Vec3::new(T::constant(v.x), T::constant(v.y), T::constant(v.z))
    }

    pub fn add(&self, o: &Self) -> Self {
        Vec3::new(
            self.x.clone() + o.x.clone(),
            self.y.clone() + o.y.clone(),
            self.z.clone() + o.z.clone(),
        )
    }

    pub fn sub(&self, o: &Self) -> Self {
        Vec3::new(
            self.x.clone() - o.x.clone(),
            self.y.clone() - o.y.clone(),
            self.z.clone() - o.z.clone(),
        )
    }

    pub fn scale(&self, s: &T) -> Self {
        Vec3::new(
            self.x.clone() * s.clone(),
            self.y.clone() * s.clone(),
            self.z.clone() * s.clone(),
        )
    }

    pub fn dot(&self, o: &Self) -> T {
        self.x.clone() * o.x.clone() + self.y.clone() * o.y.clone() + self.z.clone() * o.z.clone()
    }

    pub fn cross(&self, o: &Self) -> Self {
        Vec3::new(
            self.y.clone() * o.z.clone() - self.z.clone() * o.y.clone(),
            self.z.clone() * o.x.clone() - self.x.clone() * o.z.clone(),
            self.x.clone() * o.y.clone() - self.y.clone() * o.x.clone(),
        )
    }

    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    pub fn norm(&self) -> T {
        self.norm_squared().sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Vec3::new(
            self.x.clone() / n.clone(),
            self.y.clone() / n.clone(),
            self.z.clone() / n,
        )
    }

    pub fn values(&self) -> Vec3<f64> {
        Vec3::new(self.x.val(), self.y.val(), self.z.val())
    }
}

/// Row-major 3x3 matrix over any scalar.
#[derive(Clone, Debug)]
pub struct Mat3<T = f64> {
    pub m: [[T; 3]; 3],
}

impl<T: Scalar> Mat3<T> {
    pub fn identity() -> Self {
        let o = || T::constant(1.0);
        let z = || T::constant(0.0);
        Mat3 {
            m: [[o(), z(), z()], [z(), o(), z()], [z(), z(), o()]],
        }
    }

    pub fn from_f64(r: &Mat3<f64>) -> Self {
        Mat3 {
            m: [0, 1, 2].map(|i| [0, 1, 2].map(|j| T::constant(r.m[i][j]))),
        }
    }

    pub fn rotation_x(a: &T) -> Self {
        let (s, c) = (a.sin(), a.cos());
        let z = || T::constant(0.0);
        let o = || T::constant(1.0);
        Mat3 {
            m: [[o(), z(), z()], [z(), c.clone(), -s.clone()], [z(), s, c]],
        }
    }

    pub fn rotation_y(a: &T) -> Self {
        let (s, c) = (a.sin(), a.cos());
        let z = || T::constant(0.0);
        let o = || T::constant(1.0);
        Mat3 {
            m: [[c.clone(), z(), s.clone()], [z(), o(), z()], [-s, z(), c]],
        }
    }

    pub fn rotation_z(a: &T) -> Self {
        let (s, c) = (a.sin(), a.cos());
        let z = || T::constant(0.0);
        let o = || T::constant(1.0);
        Mat3 {
            m: [[c.clone(), -s.clone(), z()], [s, c, z()], [z(), z(), o()]],
        }
    }

    pub fn mul(&self, o: &Self) -> Self {
        Mat3 {
            m: [0, 1, 2].map(|i| {
                [0, 1, 2].map(|j| {
                    self.m[i][0].clone() * o.m[0][j].clone()
                        + self.m[i][1].clone() * o.m[1][j].clone()
                        + self.m[i][2].clone() * o.m[2][j].clone()
                })
            }),
        }
    }

    pub fn mul_vec(&self, v: &Vec3<T>) -> Vec3<T> {
        let row = |i: usize| {
            self.m[i][0].clone() * v.x.clone()
                + self.m[i][1].clone() * v.y.clone()
                + self.m[i][2].clone() * v.z.clone()
        };
        Vec3::new(row(0), row(1), row(2))
    }

    pub fn transpose(&self) -> Self {
        Mat3 {
            m: [0, 1, 2].map(|i| [0, 1, 2].map(|j| self.m[j][i].clone())),
        }
    }

    /// Column `j` as a vector.
    pub fn col(&self, j: usize) -> Vec3<T> {
        Vec3::new(
            self.m[0][j].clone(),
            self.m[1][j].clone(),
            self.m[2][j].clone(),
        )
    }

    pub fn det(&self) -> T {
        let m = &self.m;
        m[0][0].clone() * (m[1][1].clone() * m[2][2].clone() - m[1][2].clone() * m[2][1].clone())
            - m[0][1].clone()
                * (m[1][0].clone() * m[2][2].clone() - m[1][2].clone() * m[2][0].clone())
            + m[0][2].clone()
                * (m[1][0].clone() * m[2][1].clone() - m[1][1].clone() * m[2][0].clone())
    }

    pub fn values(&self) -> Mat3<f64> {
        Mat3 {
            m: [0, 1, 2].map(|i| [0, 1, 2].map(|j| self.m[i][j].val())),
        }
    }
}

impl Mat3<f64> {
    /// Largest deviation from orthonormality: entries of `R^T R - I` and
    /// `det - 1`.
    pub fn orthonormal_error(&self) -> f64 {
        let g = self.transpose().mul(self);
        let mut e: f64 = (self.det() - 1.0).abs();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                e = e.max((g.m[i][j] - target).abs());
            }
        }
        e
    }

    /// Frobenius norm of `self - o`, the chordal distance between rotations.
    pub fn chordal_distance(&self, o: &Mat3<f64>) -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let d = self.m[i][j] - o.m[i][j];
                s += d * d;
            }
        }
        s.sqrt()
    }
}

/// Planar pose. `theta` is not normalized; consumers that compare headings
/// wrap the difference.
#[derive(Clone, Debug)]
pub struct Pose2<T = f64> {
    pub x: T,
    pub y: T,
    pub theta: T,
}

impl<T: Scalar> Pose2<T> {
    pub fn new(x: T, y: T, theta: T) -> Self {
        Pose2 { x, y, theta }
    }

    pub fn identity() -> Self {
        Pose2::new(T::constant(0.0), T::constant(0.0), T::constant(0.0))
    }

    pub fn from_f64(p: &Pose2<f64>) -> Self {
        Pose2::new(T::constant(p.x), T::constant(p.y), T::constant(p.theta))
    }

    /// `self` followed by `b` in `self`'s frame.
    pub fn compose(&self, b: &Pose2<T>) -> Pose2<T> {
        let (s, c) = (self.theta.sin(), self.theta.cos());
        Pose2::new(
            self.x.clone() + c.clone() * b.x.clone() - s.clone() * b.y.clone(),
            self.y.clone() + s * b.x.clone() + c * b.y.clone(),
            self.theta.clone() + b.theta.clone(),
        )
    }

    pub fn values(&self) -> Pose2<f64> {
        Pose2::new(self.x.val(), self.y.val(), self.theta.val())
    }
}

impl Pose2<f64> {
    /// Position distance plus wrapped heading distance.
    pub fn error(&self, o: &Pose2<f64>) -> f64 {
        let dp = ((self.x - o.x).powi(2) + (self.y - o.y).powi(2)).sqrt();
        dp + (self.theta - o.theta).wrap_angle().abs()
    }

    /// Lift into 3D: rotation about z, position in the z=0 plane.
    pub fn to_pose3(&self) -> Pose3<f64> {
        Pose3::new(
            Mat3::rotation_z(&self.theta),
            Vec3::new(self.x, self.y, 0.0),
        )
    }
}

/// Spatial pose: orthonormal rotation plus position.
#[derive(Clone, Debug)]
pub struct Pose3<T = f64> {
    pub rotation: Mat3<T>,
    pub position: Vec3<T>,
}

impl<T: Scalar> Pose3<T> {
    pub fn new(rotation: Mat3<T>, position: Vec3<T>) -> Self {
        Pose3 { rotation, position }
    }

    pub fn identity() -> Self {
        Pose3::new(Mat3::identity(), Vec3::zero())
    }

    pub fn from_f64(p: &Pose3<f64>) -> Self {
        Pose3::new(Mat3::from_f64(&p.rotation), Vec3::from_f64(&p.position))
    }

    /// `self` followed by `b` in `self`'s frame.
    pub fn compose(&self, b: &Pose3<T>) -> Pose3<T> {
        Pose3::new(
            self.rotation.mul(&b.rotation),
            self.position.add(&self.rotation.mul_vec(&b.position)),
        )
    }

    pub fn inverse(&self) -> Pose3<T> {
        let rt = self.rotation.transpose();
        let p = rt.mul_vec(&self.position);
        Pose3::new(rt, Vec3::new(-p.x, -p.y, -p.z))
    }

    pub fn transform_point(&self, p: &Vec3<T>) -> Vec3<T> {
        self.position.add(&self.rotation.mul_vec(p))
    }

    pub fn values(&self) -> Pose3<f64> {
        Pose3::new(self.rotation.values(), self.position.values())
    }
}

impl Pose3<f64> {
    /// Validating constructor: rejects rotations that are not orthonormal
    /// with determinant +1 to within 1e-9.
    pub fn checked(rotation: Mat3<f64>, position: Vec3<f64>) -> crate::Result<Self> {
        let e = rotation.orthonormal_error();
        if e > 1e-9 {
            return Err(crate::Error::InvalidChain(format!(
                "rotation is not orthonormal (deviation {e:.3e})"
            )));
        }
        Ok(Pose3::new(rotation, position))
    }

    /// Position norm plus rotation chordal distance.
    pub fn error(&self, o: &Pose3<f64>) -> f64 {
        self.position.sub(&o.position).norm() + self.rotation.chordal_distance(&o.rotation)
    }
}

/// Euler angles, extrinsic X-then-Y-then-Z.
#[derive(Clone, Debug)]
pub struct EulerRpy<T = f64> {
    pub roll: T,
    pub pitch: T,
    pub yaw: T,
}

impl<T: Scalar> EulerRpy<T> {
    pub fn new(roll: T, pitch: T, yaw: T) -> Self {
        EulerRpy { roll, pitch, yaw }
    }
}

/// `Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn rotation_from_rpy<T: Scalar>(rpy: &EulerRpy<T>) -> Mat3<T> {
    Mat3::rotation_z(&rpy.yaw)
        .mul(&Mat3::rotation_y(&rpy.pitch))
        .mul(&Mat3::rotation_x(&rpy.roll))
}

/// Differentiable Euler extraction, valid away from gimbal lock.
///
/// `pitch = atan2(-R20, hypot(R00, R10))` lands in `[-pi/2, pi/2]`; at
/// `|pitch| = pi/2` the roll/yaw split is not defined and the derivatives
/// blow up, so residuals built on this should keep targets off the lock set.
pub fn rpy_from_rotation_smooth<T: Scalar>(r: &Mat3<T>) -> EulerRpy<T> {
    let m = &r.m;
    let cp = (m[0][0].clone() * m[0][0].clone() + m[1][0].clone() * m[1][0].clone()).sqrt();
    EulerRpy::new(
        m[2][1].atan2(&m[2][2]),
        (-m[2][0].clone()).atan2(&cp),
        m[1][0].atan2(&m[0][0]),
    )
}

/// Euler extraction with the gimbal-lock tie-break `roll := 0`.
///
/// Within 1e-9 of lock the yaw absorbs the coupled roll/yaw rotation;
/// elsewhere this matches [`rpy_from_rotation_smooth`].
pub fn rpy_from_rotation(r: &Mat3<f64>) -> EulerRpy<f64> {
    let m = &r.m;
    let cp = (m[0][0] * m[0][0] + m[1][0] * m[1][0]).sqrt();
    if cp < 1e-9 {
        let pitch = if m[2][0] < 0.0 {
            std::f64::consts::FRAC_PI_2
        } else {
            -std::f64::consts::FRAC_PI_2
        };
        return EulerRpy::new(0.0, pitch, (-m[0][1]).atan2(m[1][1]));
    }
    EulerRpy::new(
        m[2][1].atan2(m[2][2]),
        (-m[2][0]).atan2(cp),
        m[1][0].atan2(m[0][0]),
    )
}

#[derive(Serialize, Deserialize)]
struct Pose3Json {
    position: [f64; 3],
    rpy: [f64; 3],
}

impl Serialize for Pose3<f64> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rpy = rpy_from_rotation(&self.rotation);
        Pose3Json {
            position: [self.position.x, self.position.y, self.position.z],
            rpy: [rpy.roll, rpy.pitch, rpy.yaw],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose3<f64> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = Pose3Json::deserialize(d)?;
        let rpy = EulerRpy::new(j.rpy[0], j.rpy[1], j.rpy[2]);
        Ok(Pose3::new(
            rotation_from_rpy(&rpy),
            Vec3::new(j.position[0], j.position[1], j.position[2]),
        ))
    }
}

#[derive(Serialize, Deserialize)]
struct Pose2Json {
    x: f64,
    y: f64,
    theta: f64,
}

impl Serialize for Pose2<f64> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        Pose2Json {
            x: self.x,
            y: self.y,
            theta: self.theta,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose2<f64> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let j = Pose2Json::deserialize(d)?;
        Ok(Pose2::new(j.x, j.y, j.theta))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn random_rpy(rng: &mut ChaCha8Rng) -> EulerRpy<f64> {
        EulerRpy::new(
            rng.gen_range(-PI..PI),
            rng.gen_range(-FRAC_PI_2 + 1e-3..FRAC_PI_2 - 1e-3),
            rng.gen_range(-PI..PI),
        )
    }

    fn random_pose3(rng: &mut ChaCha8Rng) -> Pose3<f64> {
        Pose3::new(
            rotation_from_rpy(&random_rpy(rng)),
            Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ),
        )
    }

    #[test]
    fn pose2_compose_basics() {
        let a = Pose2::new(1.0, 0.0, FRAC_PI_2);
        let b = Pose2::new(1.0, 0.0, 0.0);
        let c = a.compose(&b);
        assert_abs_diff_eq!(c.x, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.y, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.theta, FRAC_PI_2);
    }

    #[test]
    fn pose3_compose_identity_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let p = random_pose3(&mut rng);
            let e = p.compose(&p.inverse());
            assert!(e.error(&Pose3::identity()) < 1e-12);
        }
    }

    #[test]
    fn compose_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let (a, b, c) = (
                random_pose3(&mut rng),
                random_pose3(&mut rng),
                random_pose3(&mut rng),
            );
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            assert!(left.error(&right) < 1e-12);
        }
    }

    #[test]
    fn determinant_stays_one_under_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut acc = Pose3::identity();
        for _ in 0..100 {
            acc = acc.compose(&random_pose3(&mut rng));
            assert!(acc.rotation.orthonormal_error() < 1e-9);
        }
    }

    #[test]
    fn rpy_axis_aligned_cases() {
        let r = rotation_from_rpy(&EulerRpy::new(0.3, 0.0, 0.0));
        let e = rpy_from_rotation(&r);
        assert_abs_diff_eq!(e.roll, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(e.pitch, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.yaw, 0.0, epsilon = 1e-12);

        let r = rotation_from_rpy(&EulerRpy::new(0.0, 0.4, 0.0));
        let e = rpy_from_rotation(&r);
        assert_abs_diff_eq!(e.pitch, 0.4, epsilon = 1e-12);

        let r = rotation_from_rpy(&EulerRpy::new(0.0, 0.0, -0.7));
        let e = rpy_from_rotation(&r);
        assert_abs_diff_eq!(e.yaw, -0.7, epsilon = 1e-12);
    }

    #[test]
    fn rpy_roundtrip_away_from_lock() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let rpy = EulerRpy::new(
                rng.gen_range(-PI..PI),
                rng.gen_range(-FRAC_PI_2 + 1e-6..FRAC_PI_2 - 1e-6),
                rng.gen_range(-PI..PI),
            );
            let r = rotation_from_rpy(&rpy);
            let back = rotation_from_rpy(&rpy_from_rotation(&r));
            assert!(r.chordal_distance(&back) < 1e-9);
        }
    }

    #[test]
    fn rpy_gimbal_lock_sets_roll_to_zero() {
        for pitch in [FRAC_PI_2, -FRAC_PI_2] {
            let r = rotation_from_rpy(&EulerRpy::new(0.8, pitch, -0.2));
            let e = rpy_from_rotation(&r);
            assert_eq!(e.roll, 0.0);
            assert_abs_diff_eq!(e.pitch, pitch, epsilon = 1e-12);
            // The reconstruction must still reproduce the rotation.
            let back = rotation_from_rpy(&e);
            assert!(r.chordal_distance(&back) < 1e-9);
        }
    }

    #[test]
    fn smooth_extraction_matches_locked_variant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let r = rotation_from_rpy(&random_rpy(&mut rng));
            let a = rpy_from_rotation(&r);
            let b = rpy_from_rotation_smooth(&r);
            assert_abs_diff_eq!(a.roll, b.roll, epsilon = 1e-12);
            assert_abs_diff_eq!(a.pitch, b.pitch, epsilon = 1e-12);
            assert_abs_diff_eq!(a.yaw, b.yaw, epsilon = 1e-12);
        }
    }

    #[test]
    fn pose3_json_roundtrip() {
        let p = Pose3::new(
            rotation_from_rpy(&EulerRpy::new(0.1, -0.2, 0.3)),
            Vec3::new(1.0, 2.0, 3.0),
        );
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("position") && s.contains("rpy"));
        let q: Pose3<f64> = serde_json::from_str(&s).unwrap();
        assert!(p.error(&q) < 1e-12);
    }

    #[test]
    fn checked_rejects_non_orthonormal() {
        let mut m = Mat3::<f64>::identity();
        m.m[0][0] = 1.5;
        assert!(Pose3::checked(m, Vec3::zero()).is_err());
    }
}
