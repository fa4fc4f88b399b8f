//! Rigid-body transforms on SE(3) and the tangent-space parameterization used
//! by the pose solver.
//!
//! Rotations are stored as 3x3 matrices. Twists are ordered `(angular, linear)`
//! everywhere a 6-vector is needed, including solver jacobians.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector6};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Below this angle the exp/log coefficients come from their series, which
/// are exact to rounding there and avoid cancellation.
const SMALL_ANGLE: f64 = 1e-2;
/// Orthonormality drift that triggers re-orthonormalization after composition.
const DRIFT_TOLERANCE: f64 = 1e-9;
/// `log` refuses rotations closer than this to a half turn.
const NEAR_PI_MARGIN: f64 = 1e-6;

/// Skew-symmetric matrix such that `hat(a) * b == a.cross(&b)`.
pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn vee(m: &Mat3) -> Vec3 {
    Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// A tangent vector of SE(3): rotation as axis-angle plus a linear part.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub angular: Vec3,
    pub linear: Vec3,
}

impl Twist {
    pub fn new(angular: Vec3, linear: Vec3) -> Self {
        Self { angular, linear }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            angular: Vec3::new(v[0], v[1], v[2]),
            linear: Vec3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.angular.x,
            self.angular.y,
            self.angular.z,
            self.linear.x,
            self.linear.y,
            self.linear.z,
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            angular: self.angular * s,
            linear: self.linear * s,
        }
    }

    /// Combined euclidean norm of both parts.
    pub fn norm(&self) -> f64 {
        (self.angular.norm_squared() + self.linear.norm_squared()).sqrt()
    }

    pub fn exp(&self) -> PoseSE3 {
        PoseSE3::exp(self)
    }
}

/// Rigid transform `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSE3 {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for PoseSE3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl PoseSE3 {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Mat3::identity(), t)
    }

    /// Rotation about the z axis by `yaw` radians.
    pub fn from_yaw(yaw: f64) -> Self {
        let (s, c) = yaw.sin_cos();
        Self::new(
            Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            Vec3::zeros(),
        )
    }

    pub fn from_matrix4(m: &Matrix4<f64>) -> Self {
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    pub fn to_matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// `R p + t`.
    #[inline]
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `self * other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &PoseSE3) -> PoseSE3 {
        let mut out = PoseSE3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        };
        if out.orthonormality_error() > DRIFT_TOLERANCE {
            out.rotation = orthonormalize(&out.rotation);
        }
        out
    }

    pub fn inverse(&self) -> PoseSE3 {
        let rt = self.rotation.transpose();
        PoseSE3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Largest absolute entry of `RᵀR − I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Mat3::identity()).amax()
    }

    /// Rotation angle in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        rotation_angle(&self.rotation)
    }

    pub fn exp(xi: &Twist) -> PoseSE3 {
        let w = xi.angular;
        let theta_sq = w.norm_squared();
        let theta = theta_sq.sqrt();
        let wx = hat(&w);
        let wx2 = wx * wx;
        let (a, b, c) = if theta < SMALL_ANGLE {
            (
                1.0 - theta_sq / 6.0 * (1.0 - theta_sq / 20.0 * (1.0 - theta_sq / 42.0)),
                0.5 - theta_sq / 24.0 * (1.0 - theta_sq / 30.0 * (1.0 - theta_sq / 56.0)),
                1.0 / 6.0 - theta_sq / 120.0 * (1.0 - theta_sq / 42.0 * (1.0 - theta_sq / 72.0)),
            )
        } else {
            let (s, co) = theta.sin_cos();
            (
                s / theta,
                (1.0 - co) / theta_sq,
                (theta - s) / (theta_sq * theta),
            )
        };
        let rotation = Mat3::identity() + wx * a + wx2 * b;
        let v = Mat3::identity() + wx * b + wx2 * c;
        PoseSE3 {
            rotation,
            translation: v * xi.linear,
        }
    }

    /// Inverse of [`PoseSE3::exp`] for rotation angles below `π − 1e-6`.
    pub fn log(&self) -> Result<Twist> {
        let r = &self.rotation;
        let axis2 = vee(&(r - r.transpose()));
        let sin_theta = 0.5 * axis2.norm();
        let cos_theta = 0.5 * (r.trace() - 1.0);
        let theta = sin_theta.atan2(cos_theta);
        if theta > std::f64::consts::PI - NEAR_PI_MARGIN {
            return Err(Error::RotationNearPi);
        }
        let theta_sq = theta * theta;
        let (w, d) = if theta < SMALL_ANGLE {
            (
                axis2 * (0.5 + theta_sq / 12.0 + 7.0 * theta_sq * theta_sq / 720.0),
                1.0 / 12.0 + theta_sq / 720.0 + theta_sq * theta_sq / 30240.0,
            )
        } else {
            let half_cot = 0.5 * theta / (0.5 * theta).tan();
            (
                axis2 * (theta / (2.0 * sin_theta)),
                (1.0 - half_cot) / theta_sq,
            )
        };
        let wx = hat(&w);
        let v_inv = Mat3::identity() - wx * 0.5 + wx * wx * d;
        Ok(Twist {
            angular: w,
            linear: v_inv * self.translation,
        })
    }
}

impl std::ops::Mul for PoseSE3 {
    type Output = PoseSE3;
    fn mul(self, rhs: PoseSE3) -> PoseSE3 {
        self.compose(&rhs)
    }
}

impl std::ops::Mul<Vec3> for &PoseSE3 {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.apply(&rhs)
    }
}

/// Angle of a rotation matrix. The cosine comes from the trace, clamped to
/// [-1, 1]; the sine from the skew part keeps small angles accurate, where
/// `acos` alone bottoms out near 1e-8 rad.
pub fn rotation_angle(r: &Mat3) -> f64 {
    let cos = (0.5 * (r.trace() - 1.0)).clamp(-1.0, 1.0);
    let sin = 0.5 * vee(&(r - r.transpose())).norm();
    sin.atan2(cos)
}

/// Gram–Schmidt on the columns; the third column is rebuilt as a cross product
/// so the result is a proper rotation.
pub fn orthonormalize(r: &Mat3) -> Mat3 {
    let c0 = r.column(0).normalize();
    let c1 = r.column(1) - c0 * c0.dot(&r.column(1));
    let c1 = c1.normalize();
    let c2 = c0.cross(&c1);
    Mat3::from_columns(&[c0, c1, c2])
}
