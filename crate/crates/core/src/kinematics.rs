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
//! Serial-arm kinematics: arm model, forward kinematics, geometric Jacobian
//! and damped least-squares inverse kinematics.

use nalgebra::{DMatrix, DVector, Matrix6, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collision::{CollisionPrimitive, Shape};
use crate::geometry::{rotation_error_vector, Pose};

pub const ARM_FORMAT_VERSION: u32 = 1;

/// Bundled 7-DOF arm with Panda-like link lengths and limits.
pub const DEFAULT_ARM_TOML: &str = include_str!("../assets/arm.toml");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("joint vector has {got} entries, arm has {expected} joints")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("IK did not converge after {iterations} iterations (position error {position_error:.3e} m, orientation error {orientation_error:.3e} rad)")]
    NoConvergence {
        iterations: usize,
        position_error: f64,
        orientation_error: f64,
    },
    #[error("IK solution requires joint {joint} outside its limits")]
    JointLimitViolation { joint: usize },
    #[error("invalid arm model: {0}")]
    InvalidModel(String),
}

/// Joint angles in radians.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig(pub Vec<f64>);

impl JointConfig {
    pub fn new(angles: Vec<f64>) -> Self {
        Self(angles)
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Largest per-joint difference.
    pub fn max_abs_diff(&self, other: &JointConfig) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Linear interpolation, `t` in `[0, 1]`.
    pub fn lerp(&self, other: &JointConfig, t: f64) -> JointConfig {
        JointConfig(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + (b - a) * t)
                .collect(),
        )
    }
}

impl std::ops::Index<usize> for JointConfig {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointLimit {
    pub lower: f64,
    pub upper: f64,
}

impl JointLimit {
    pub fn contains(&self, q: f64) -> bool {
        q >= self.lower && q <= self.upper
    }

    pub fn clamp(&self, q: f64) -> f64 {
        q.clamp(self.lower, self.upper)
    }

    pub fn span(&self) -> f64 {
        self.upper - self.lower
    }
}

/// A revolute joint: fixed transform from the parent link, then a rotation
/// about `axis` (unit, in the joint frame).
#[derive(Clone, Debug, PartialEq)]
pub struct JointFrame {
    pub name: String,
    pub origin: Pose,
    pub axis: Vector3<f64>,
}

#[derive(Clone, Debug)]
pub struct ArmModel {
    pub name: String,
    /// Arm base in the world (ER base) frame.
    pub base: Pose,
    pub joints: Vec<JointFrame>,
    pub limits: Vec<JointLimit>,
    pub ee_offset: Pose,
    /// Bodies attached to links `0..=dof`; link 0 is the base.
    pub collision_bodies: Vec<CollisionPrimitive>,
    pub home: JointConfig,
}

#[derive(Clone, Copy, Debug)]
pub struct IkOptions {
    pub damping: f64,
    pub max_iterations: usize,
    pub position_tolerance: f64,
    pub orientation_tolerance: f64,
    /// Largest per-joint update in a single iteration (rad).
    pub max_step: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            damping: 1e-3,
            max_iterations: 200,
            position_tolerance: 1e-7,
            orientation_tolerance: 1e-5,
            max_step: 0.3,
        }
    }
}

impl ArmModel {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn default_arm() -> Self {
        Self::from_toml(DEFAULT_ARM_TOML).expect("bundled arm model is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, KinematicsError> {
        let file: ArmFile =
            toml::from_str(text).map_err(|e| KinematicsError::InvalidModel(e.to_string()))?;
        file.into_model()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(&ArmFile::from_model(self)).expect("arm model serializes")
    }

    pub fn with_base(mut self, base: Pose) -> Self {
        self.base = base;
        self
    }

    pub fn check_dimension(&self, q: &JointConfig) -> Result<(), KinematicsError> {
        if q.len() != self.dof() {
            return Err(KinematicsError::DimensionMismatch {
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    pub fn within_limits(&self, q: &JointConfig) -> bool {
        q.len() == self.dof() && self.limits.iter().zip(&q.0).all(|(l, v)| l.contains(*v))
    }

    pub fn clamp_to_limits(&self, q: &mut JointConfig) {
        for (l, v) in self.limits.iter().zip(q.0.iter_mut()) {
            *v = l.clamp(*v);
        }
    }

    fn validate(&self) -> Result<(), KinematicsError> {
        let invalid = |m: String| Err(KinematicsError::InvalidModel(m));
        if self.dof() < 6 {
            return invalid(format!("arm needs at least 6 joints, got {}", self.dof()));
        }
        if self.limits.len() != self.dof() {
            return invalid("one limit pair per joint required".into());
        }
        for (i, l) in self.limits.iter().enumerate() {
            if !(l.lower < l.upper) {
                return invalid(format!("joint {i}: lower limit must be below upper limit"));
            }
        }
        for (i, j) in self.joints.iter().enumerate() {
            if (j.axis.norm() - 1.0).abs() > 1e-9 {
                return invalid(format!("joint {i}: axis must be unit length"));
            }
        }
        for (i, body) in self.collision_bodies.iter().enumerate() {
            match body.attachment {
                crate::collision::Attachment::Link(l) if l <= self.dof() => {}
                _ => return invalid(format!("collision body {i} references a missing link")),
            }
            if matches!(body.shape, Shape::Box { .. }) {
                return invalid(format!("collision body {i}: arm links use spheres or capsules"));
            }
            if !body.shape.is_valid() {
                return invalid(format!("collision body {i}: dimensions must be positive"));
            }
        }
        self.check_dimension(&self.home)?;
        if !self.within_limits(&self.home) {
            return invalid("home configuration violates joint limits".into());
        }
        Ok(())
    }

    /// World poses of links `0..=dof` (link 0 is the base).
    pub fn link_poses(&self, q: &JointConfig) -> Result<Vec<Pose>, KinematicsError> {
        self.check_dimension(q)?;
        let mut poses = Vec::with_capacity(self.dof() + 1);
        let mut current = self.base;
        poses.push(current);
        for (joint, angle) in self.joints.iter().zip(&q.0) {
            let rot = UnitQuaternion::from_scaled_axis(joint.axis * *angle);
            current = current.compose(&joint.origin).compose(&Pose::from_rotation(rot));
            poses.push(current);
        }
        Ok(poses)
    }

    /// Grasp-frame pose in the world frame.
    pub fn forward_kinematics(&self, q: &JointConfig) -> Result<Pose, KinematicsError> {
        let poses = self.link_poses(q)?;
        Ok(poses[self.dof()].compose(&self.ee_offset))
    }

    /// Geometric Jacobian of the grasp frame, rows `[v; ω]` in world axes.
    pub fn jacobian(&self, q: &JointConfig) -> Result<DMatrix<f64>, KinematicsError> {
        let poses = self.link_poses(q)?;
        let ee = poses[self.dof()].compose(&self.ee_offset);
        let mut jac = DMatrix::zeros(6, self.dof());
        for (i, joint) in self.joints.iter().enumerate() {
            // Joint i rotates link i+1; its axis is fixed in that link's frame.
            let frame = &poses[i + 1];
            let axis = frame.orientation * joint.axis;
            let linear = axis.cross(&(ee.position - frame.position));
            for r in 0..3 {
                jac[(r, i)] = linear[r];
                jac[(r + 3, i)] = axis[r];
            }
        }
        Ok(jac)
    }

    /// Damped least-squares IK with joint-limit clamping.
    pub fn solve_ik(&self, target: &Pose, seed: &JointConfig) -> Result<JointConfig, KinematicsError> {
        self.solve_ik_with(target, seed, &IkOptions::default())
    }

    pub fn solve_ik_with(
        &self,
        target: &Pose,
        seed: &JointConfig,
        opts: &IkOptions,
    ) -> Result<JointConfig, KinematicsError> {
        self.check_dimension(seed)?;
        let mut q = seed.clone();
        self.clamp_to_limits(&mut q);
        match self.dls_iterate(target, q, opts, true) {
            Ok(q) => Ok(q),
            Err(err @ KinematicsError::NoConvergence { .. }) => {
                // Distinguish an unreachable target from one reachable only
                // outside the limits.
                match self.dls_iterate(target, seed.clone(), opts, false) {
                    Ok(free) => {
                        let joint = self
                            .limits
                            .iter()
                            .zip(&free.0)
                            .position(|(l, v)| !l.contains(*v))
                            .unwrap_or(0);
                        if self.within_limits(&free) {
                            Err(err)
                        } else {
                            Err(KinematicsError::JointLimitViolation { joint })
                        }
                    }
                    Err(_) => Err(err),
                }
            }
            Err(e) => Err(e),
        }
    }

    fn pose_error(&self, target: &Pose, q: &JointConfig) -> Result<Vector6<f64>, KinematicsError> {
        let ee = self.forward_kinematics(q)?;
        let dp = target.position - ee.position;
        let dr = rotation_error_vector(&ee.orientation, &target.orientation);
        Ok(Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z))
    }

    fn dls_iterate(
        &self,
        target: &Pose,
        mut q: JointConfig,
        opts: &IkOptions,
        clamp: bool,
    ) -> Result<JointConfig, KinematicsError> {
        let lambda2 = opts.damping * opts.damping;
        let mut err = self.pose_error(target, &q)?;
        for _ in 0..opts.max_iterations {
            let pos_err = err.fixed_rows::<3>(0).norm();
            let rot_err = err.fixed_rows::<3>(3).norm();
            if pos_err <= opts.position_tolerance && rot_err <= opts.orientation_tolerance {
                return Ok(q);
            }
            let jac = self.jacobian(&q)?;
            let jjt: Matrix6<f64> = (&jac * jac.transpose()).fixed_view::<6, 6>(0, 0).into_owned()
                + Matrix6::identity() * lambda2;
            let Some(solved) = jjt.lu().solve(&err) else {
                break;
            };
            let mut dq: DVector<f64> = jac.transpose() * DVector::from_column_slice(solved.as_slice());
            let largest = dq.amax();
            if largest > opts.max_step {
                dq *= opts.max_step / largest;
            }
            for (v, d) in q.0.iter_mut().zip(dq.iter()) {
                *v += d;
            }
            if clamp {
                self.clamp_to_limits(&mut q);
            }
            err = self.pose_error(target, &q)?;
        }
        let pos_err = err.fixed_rows::<3>(0).norm();
        let rot_err = err.fixed_rows::<3>(3).norm();
        if pos_err <= opts.position_tolerance && rot_err <= opts.orientation_tolerance {
            return Ok(q);
        }
        Err(KinematicsError::NoConvergence {
            iterations: opts.max_iterations,
            position_error: pos_err,
            orientation_error: rot_err,
        })
    }

    /// World-frame collision bodies for configuration `q`, paired with the
    /// link each is attached to.
    pub fn posed_bodies(&self, q: &JointConfig) -> Result<Vec<(usize, CollisionPrimitive)>, KinematicsError> {
        let poses = self.link_poses(q)?;
        Ok(self.posed_bodies_from_links(&poses))
    }

    pub fn posed_bodies_from_links(&self, links: &[Pose]) -> Vec<(usize, CollisionPrimitive)> {
        self.collision_bodies
            .iter()
            .map(|b| {
                let link = match b.attachment {
                    crate::collision::Attachment::Link(l) => l,
                    crate::collision::Attachment::World => 0,
                };
                (link, b.placed_at(&links[link]))
            })
            .collect()
    }
}

// ---- config file ----

#[derive(Serialize, Deserialize)]
struct ArmFile {
    format_version: u32,
    name: String,
    /// Joint angles (rad).
    home_rad: Vec<f64>,
    #[serde(default)]
    base: Option<FramePose>,
    ee_offset: FramePose,
    joints: Vec<JointEntry>,
    #[serde(default)]
    collision: Vec<BodyEntry>,
}

/// Translation in metres and roll/pitch/yaw in radians.
#[derive(Serialize, Deserialize, Clone, Copy)]
pub struct FramePose {
    pub xyz_m: [f64; 3],
    pub rpy_rad: [f64; 3],
}

impl FramePose {
    pub fn to_pose(self) -> Pose {
        Pose::from_xyz_rpy(self.xyz_m, self.rpy_rad)
    }

    pub fn from_pose(p: &Pose) -> Self {
        let (r, pi, y) = p.orientation.euler_angles();
        Self {
            xyz_m: p.position_array(),
            rpy_rad: [r, pi, y],
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JointEntry {
    name: String,
    origin: FramePose,
    axis: [f64; 3],
    limits_rad: [f64; 2],
}

#[derive(Serialize, Deserialize)]
struct BodyEntry {
    link: usize,
    #[serde(flatten)]
    pub shape: crate::collision::ShapeEntry,
    pub origin: FramePose,
}

impl ArmFile {
    fn into_model(self) -> Result<ArmModel, KinematicsError> {
        if self.format_version != ARM_FORMAT_VERSION {
            return Err(KinematicsError::InvalidModel(format!(
                "unsupported format_version {} (expected {ARM_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let joints = self
            .joints
            .iter()
            .map(|j| JointFrame {
                name: j.name.clone(),
                origin: j.origin.to_pose(),
                axis: Vector3::from(j.axis),
            })
            .collect();
        let limits = self
            .joints
            .iter()
            .map(|j| JointLimit {
                lower: j.limits_rad[0],
                upper: j.limits_rad[1],
            })
            .collect();
        let collision_bodies = self
            .collision
            .iter()
            .map(|b| CollisionPrimitive {
                shape: b.shape.into(),
                local_pose: b.origin.to_pose(),
                attachment: crate::collision::Attachment::Link(b.link),
            })
            .collect();
        let model = ArmModel {
            name: self.name,
            base: self.base.map(FramePose::to_pose).unwrap_or_default(),
            joints,
            limits,
            ee_offset: self.ee_offset.to_pose(),
            collision_bodies,
            home: JointConfig(self.home_rad),
        };
        model.validate()?;
        Ok(model)
    }

    fn from_model(m: &ArmModel) -> Self {
        Self {
            format_version: ARM_FORMAT_VERSION,
            name: m.name.clone(),
            home_rad: m.home.0.clone(),
            base: Some(FramePose::from_pose(&m.base)),
            ee_offset: FramePose::from_pose(&m.ee_offset),
            joints: m
                .joints
                .iter()
                .zip(&m.limits)
                .map(|(j, l)| JointEntry {
                    name: j.name.clone(),
                    origin: FramePose::from_pose(&j.origin),
                    axis: [j.axis.x, j.axis.y, j.axis.z],
                    limits_rad: [l.lower, l.upper],
                })
                .collect(),
            collision: m
                .collision_bodies
                .iter()
                .map(|b| BodyEntry {
                    link: match b.attachment {
                        crate::collision::Attachment::Link(l) => l,
                        crate::collision::Attachment::World => 0,
                    },
                    shape: b.shape.into(),
                    origin: FramePose::from_pose(&b.local_pose),
                })
                .collect(),
        }
    }
}
