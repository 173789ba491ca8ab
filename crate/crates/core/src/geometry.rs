/*
Copyright 2026 The isru-teleop Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! Rigid-body primitives: poses, wrenches and quaternion helpers.
//!
//! Quaternions are stored scalar-last (`[x, y, z, w]`) and canonicalized so
//! that `w >= 0`; `q` and `-q` therefore have a single representation.

use nalgebra::{Matrix3, Quaternion, Unit, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

/// Tolerance on `|q| - 1` accepted when building a pose from raw numbers.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-9;

/// Standard gravity (m/s²).
pub const GRAVITY: f64 = 9.81;

/// Returns the canonical representative of `q` (non-negative scalar part),
/// renormalized.
pub fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let raw = q.into_inner();
    let raw = if raw.w < 0.0 { -raw } else { raw };
    UnitQuaternion::new_normalize(raw)
}

/// Geodesic angle between two rotations, in `[0, π]`.
///
/// `q` and `-q` describe the same rotation and yield zero.
pub fn orientation_error(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let dot = a.coords.dot(&b.coords).abs().min(1.0);
    2.0 * dot.acos()
}

/// Rotation vector (axis × angle) taking `from` onto `to`, expressed in the
/// world frame: `to = exp(v) * from`.
pub fn rotation_error_vector(from: &UnitQuaternion<f64>, to: &UnitQuaternion<f64>) -> Vector3<f64> {
    canonical(to * from.inverse()).scaled_axis()
}

/// A rigid transform: translation in metres plus a unit quaternion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: canonical(orientation),
        }
    }

    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    pub fn from_rotation(orientation: UnitQuaternion<f64>) -> Self {
        Self::new(Vector3::zeros(), orientation)
    }

    /// Builds a pose from a translation and roll/pitch/yaw angles (rad),
    /// applied as `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        Self::new(
            Vector3::from(xyz),
            UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
        )
    }

    /// Builds a pose from raw components, rejecting quaternions that are not
    /// unit-norm within [`UNIT_NORM_TOLERANCE`]. The stored quaternion is
    /// canonicalized but not renormalized, so already-canonical input is kept
    /// bit-for-bit.
    pub fn from_components(position: [f64; 3], xyzw: [f64; 4]) -> Option<Self> {
        if position.iter().chain(xyzw.iter()).any(|v| !v.is_finite()) {
            return None;
        }
        let q = Quaternion::new(xyzw[3], xyzw[0], xyzw[1], xyzw[2]);
        if (q.norm() - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return None;
        }
        let q = if q.w < 0.0 { -q } else { q };
        Some(Self {
            position: Vector3::from(position),
            orientation: Unit::new_unchecked(q),
        })
    }

    /// Quaternion components, scalar last.
    pub fn xyzw(&self) -> [f64; 4] {
        let c = self.orientation.coords;
        [c[0], c[1], c[2], c[3]]
    }

    pub fn position_array(&self) -> [f64; 3] {
        [self.position.x, self.position.y, self.position.z]
    }

    /// `self ∘ other`: `other` expressed in `self`'s frame, mapped to the
    /// parent frame.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.position + self.orientation * other.position,
            self.orientation * other.orientation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose::new(-(inv * self.position), inv)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * p
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.orientation * v
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        *self.orientation.to_rotation_matrix().matrix()
    }

    /// Translation distance and rotation angle between two poses.
    pub fn distance_to(&self, other: &Pose) -> (f64, f64) {
        (
            (self.position - other.position).norm(),
            orientation_error(&self.orientation, &other.orientation),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    position: [f64; 3],
    orientation: [f64; 4],
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PoseRepr {
            position: self.position_array(),
            orientation: self.xyzw(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(d)?;
        Pose::from_components(repr.position, repr.orientation)
            .ok_or_else(|| serde::de::Error::custom("orientation is not a unit quaternion"))
    }
}

/// Force (N) and torque (N·m), both in world-aligned coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl Wrench {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(force: Vector3<f64>, torque: Vector3<f64>) -> Self {
        Self { force, torque }
    }

    /// A force applied at `point`, expressed about `reference`.
    pub fn from_force_at(force: Vector3<f64>, point: &Vector3<f64>, reference: &Vector3<f64>) -> Self {
        Self {
            force,
            torque: (point - reference).cross(&force),
        }
    }

    pub fn as_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.force.x,
            self.force.y,
            self.force.z,
            self.torque.x,
            self.torque.y,
            self.torque.z,
        )
    }

    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            force: Vector3::new(v[0], v[1], v[2]),
            torque: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        let v = self.as_vector();
        [v[0], v[1], v[2], v[3], v[4], v[5]]
    }
}

impl std::ops::Add for Wrench {
    type Output = Wrench;
    fn add(self, rhs: Wrench) -> Wrench {
        Wrench::new(self.force + rhs.force, self.torque + rhs.torque)
    }
}

impl std::ops::AddAssign for Wrench {
    fn add_assign(&mut self, rhs: Wrench) {
        self.force += rhs.force;
        self.torque += rhs.torque;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn rot_x(a: f64) -> Matrix3<f64> {
        let (s, c) = a.sin_cos();
        Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
    }

    fn rot_y(a: f64) -> Matrix3<f64> {
        let (s, c) = a.sin_cos();
        Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
    }

    #[test]
    fn compose_with_identity() {
        let p = Pose::from_xyz_rpy([0.1, -0.2, 0.3], [0.3, -0.1, 1.2]);
        let r = Pose::identity().compose(&p);
        assert_relative_eq!(r.position, p.position, epsilon = 1e-12);
        assert!(orientation_error(&r.orientation, &p.orientation) < 1e-12);
    }

    #[test]
    fn compose_translations_add() {
        let r = Pose::from_translation(0.0, 0.0, 0.1).compose(&Pose::from_translation(0.0, 0.0, 0.2));
        assert_relative_eq!(r.position, Vector3::new(0.0, 0.0, 0.3), epsilon = 1e-12);
    }

    #[test]
    fn compose_rotations_match_matrix_product() {
        let a = Pose::from_rotation(UnitQuaternion::from_axis_angle(&Vector3::x_axis(), FRAC_PI_2));
        let b = Pose::from_rotation(UnitQuaternion::from_axis_angle(&Vector3::y_axis(), FRAC_PI_2));
        let expected = rot_x(FRAC_PI_2) * rot_y(FRAC_PI_2);
        let got = a.compose(&b).rotation_matrix();
        assert_relative_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn inverse_cancels() {
        let p = Pose::from_xyz_rpy([0.4, 0.2, -0.7], [2.0, 0.5, -2.5]);
        let r = p.compose(&p.inverse());
        assert!(r.position.norm() < 1e-9);
        assert!(orientation_error(&r.orientation, &UnitQuaternion::identity()) < 1e-9);
    }

    #[test]
    fn canonical_sign() {
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 3.5);
        let p = Pose::from_rotation(q);
        assert!(p.orientation.w >= 0.0);
        assert!(orientation_error(&p.orientation, &q) < 1e-12);
    }

    #[test]
    fn orientation_error_cases() {
        let q = UnitQuaternion::from_euler_angles(0.3, 0.2, 0.1);
        assert_eq!(orientation_error(&q, &q), 0.0);
        let neg = Unit::new_unchecked(-q.into_inner());
        assert!(orientation_error(&q, &neg) < 1e-7);
        let z30 = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 30f64.to_radians());
        assert_relative_eq!(
            orientation_error(&UnitQuaternion::identity(), &z30),
            0.5236,
            epsilon = 1e-4
        );
    }

    #[test]
    fn rejects_non_unit_components() {
        assert!(Pose::from_components([0.0; 3], [0.0, 0.0, 0.0, 1.1]).is_none());
        assert!(Pose::from_components([f64::NAN, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]).is_none());
        let p = Pose::from_components([0.0; 3], [0.0, 0.0, 0.0, -1.0]).unwrap();
        assert_eq!(p.xyzw(), [0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn pose_json_round_trip() {
        let p = Pose::from_xyz_rpy([0.1, 0.2, 0.3], [0.1, 0.2, 0.3]);
        let s = serde_json::to_string(&p).unwrap();
        let back: Pose = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
    }
}
