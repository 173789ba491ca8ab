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
//! Master-side haptic control: engagement, 1:1 camera-frame mapping,
//! force feedback with payload compensation and tremor filtering.

use isru_core::geometry::{canonical, orientation_error, Pose, Wrench, GRAVITY};
use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

mod filter;

pub use filter::TremorFilter;

pub const DEFAULT_ENGAGE_TOLERANCE: f64 = 0.15;
pub const DEFAULT_FORCE_SCALE: f64 = 0.1;
pub const DEFAULT_TREMOR_CUTOFF: f64 = 2.0;
/// Half extents of the device workspace box (m).
pub const DEVICE_HALF_EXTENTS: [f64; 3] = [0.08, 0.06, 0.035];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HcsError {
    #[error("already engaged")]
    AlreadyEngaged,
    #[error("not engaged")]
    NotEngaged,
    #[error("invalid mapping config: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StylusState {
    /// Device frame.
    pub pose: Pose,
    pub button: bool,
}

impl StylusState {
    pub fn at(pose: Pose) -> Self {
        Self { pose, button: false }
    }
}

/// Device axes (x right, y up, z toward the operator) for a camera looking
/// along `forward` with `up` toward the top of the image, in world.
pub fn camera_frame(forward: &Vector3<f64>, up: &Vector3<f64>) -> UnitQuaternion<f64> {
    let back = -forward.normalize();
    let right = up.cross(&back).normalize();
    let up = back.cross(&right);
    let m = nalgebra::Matrix3::from_columns(&[right, up, back]);
    canonical(UnitQuaternion::from_matrix(&m))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Camera {
    #[default]
    Rear,
    Front,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MappingConfig {
    pub position_scale: f64,
    pub force_scale: f64,
    pub active_camera: Camera,
    /// Camera frames in world; only their orientation enters the mapping.
    pub rear_camera: Pose,
    pub front_camera: Pose,
    /// Mass of a grasped sample (kg).
    pub payload_mass: f64,
    /// Hold the anchored end-effector orientation instead of mapping stylus rotation.
    pub orientation_lock: bool,
    /// rad.
    pub engage_tolerance: f64,
    /// Hz.
    pub tremor_cutoff: f64,
    pub workspace_half_extents: [f64; 3],
}

impl Default for MappingConfig {
    fn default() -> Self {
        Self {
            position_scale: 1.0,
            force_scale: DEFAULT_FORCE_SCALE,
            active_camera: Camera::Rear,
            rear_camera: Pose::from_rotation(camera_frame(&Vector3::x(), &Vector3::z())),
            front_camera: Pose::from_rotation(camera_frame(&-Vector3::x(), &Vector3::z())),
            payload_mass: 0.2,
            orientation_lock: false,
            engage_tolerance: DEFAULT_ENGAGE_TOLERANCE,
            tremor_cutoff: DEFAULT_TREMOR_CUTOFF,
            workspace_half_extents: DEVICE_HALF_EXTENTS,
        }
    }
}

impl MappingConfig {
    pub fn validate(&self) -> Result<(), HcsError> {
        let bad = |s: &str| Err(HcsError::InvalidConfig(s.into()));
        if self.position_scale != 1.0 {
            return bad("position_scale must be 1.0");
        }
        if !(self.force_scale > 0.0 && self.force_scale <= 1.0) {
            return bad("force_scale must lie in (0, 1]");
        }
        if !(self.payload_mass.is_finite() && self.payload_mass >= 0.0) {
            return bad("payload_mass must be non-negative");
        }
        if !(self.engage_tolerance.is_finite() && self.engage_tolerance > 0.0) {
            return bad("engage_tolerance must be positive");
        }
        if !(self.tremor_cutoff.is_finite() && self.tremor_cutoff > 0.0) {
            return bad("tremor_cutoff must be positive");
        }
        if self.workspace_half_extents.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return bad("workspace_half_extents must be positive");
        }
        Ok(())
    }

    pub fn camera_rotation(&self) -> UnitQuaternion<f64> {
        match self.active_camera {
            Camera::Rear => self.rear_camera.orientation,
            Camera::Front => self.front_camera.orientation,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum EngagementState {
    #[default]
    Disengaged,
    Engaged {
        anchor_stylus: Pose,
        anchor_ee: Pose,
    },
}

impl EngagementState {
    pub fn is_engaged(&self) -> bool {
        matches!(self, EngagementState::Engaged { .. })
    }

    /// Stylus orientation seen through the active camera, in world.
    pub fn stylus_in_world(cfg: &MappingConfig, stylus: &StylusState) -> UnitQuaternion<f64> {
        cfg.camera_rotation() * stylus.pose.orientation
    }

    /// Engages iff the stylus and end-effector orientations agree within `tol`.
    pub fn try_engage(
        &mut self,
        cfg: &MappingConfig,
        stylus: &StylusState,
        ee_pose: &Pose,
        tol: f64,
    ) -> Result<bool, HcsError> {
        if self.is_engaged() {
            return Err(HcsError::AlreadyEngaged);
        }
        let err = orientation_error(&Self::stylus_in_world(cfg, stylus), &ee_pose.orientation);
        if err > tol {
            return Ok(false);
        }
        *self = EngagementState::Engaged {
            anchor_stylus: stylus.pose,
            anchor_ee: *ee_pose,
        };
        Ok(true)
    }

    pub fn disengage(&mut self) -> Result<(), HcsError> {
        if !self.is_engaged() {
            return Err(HcsError::NotEngaged);
        }
        *self = EngagementState::Disengaged;
        Ok(())
    }

    /// End-effector reference for the stylus pose.
    pub fn map_position(&self, cfg: &MappingConfig, stylus: &StylusState) -> Result<Pose, HcsError> {
        let EngagementState::Engaged {
            anchor_stylus,
            anchor_ee,
        } = self
        else {
            return Err(HcsError::NotEngaged);
        };
        let r_cam = cfg.camera_rotation();
        let delta = stylus.pose.position - anchor_stylus.position;
        let position = anchor_ee.position + r_cam * (delta * cfg.position_scale);
        let orientation = if cfg.orientation_lock {
            anchor_ee.orientation
        } else {
            let d_rot = stylus.pose.orientation * anchor_stylus.orientation.inverse();
            canonical(r_cam * d_rot * r_cam.inverse() * anchor_ee.orientation)
        };
        Ok(Pose::new(position, orientation))
    }
}

/// Force to render at the device, in the device frame (N).
pub fn map_force(cfg: &MappingConfig, wrench: &Wrench, holding: bool) -> Vector3<f64> {
    let mut f = wrench.force;
    if holding {
        f -= Vector3::new(0.0, 0.0, -cfg.payload_mass * GRAVITY);
    }
    cfg.camera_rotation().inverse() * (f * cfg.force_scale)
}

/// Clamps a stylus pose into the device workspace box. Returns true if it was outside.
pub fn clamp_to_workspace(pose: &Pose, half: &[f64; 3]) -> (Pose, bool) {
    let mut p = *pose;
    let mut clamped = false;
    for i in 0..3 {
        let c = p.position[i].clamp(-half[i], half[i]);
        clamped |= c != p.position[i];
        p.position[i] = c;
    }
    (p, clamped)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HcsOutput {
    /// Only present while engaged.
    pub reference: Option<Pose>,
    pub workspace_clamped: bool,
}

/// Station-side haptic pipeline: clamp, filter, map.
#[derive(Clone, Debug)]
pub struct Hcs {
    pub config: MappingConfig,
    engagement: EngagementState,
    filter: TremorFilter,
    filtering: bool,
    last_filtered: Option<Pose>,
}

impl Hcs {
    pub fn new(config: MappingConfig, dt: f64) -> Result<Self, HcsError> {
        config.validate()?;
        let filter = TremorFilter::new(config.tremor_cutoff, dt)?;
        Ok(Self {
            config,
            engagement: EngagementState::Disengaged,
            filter,
            filtering: true,
            last_filtered: None,
        })
    }

    /// Bypasses the tremor filter (for comparisons).
    pub fn without_filter(mut self) -> Self {
        self.filtering = false;
        self
    }

    pub fn engagement(&self) -> &EngagementState {
        &self.engagement
    }

    pub fn is_engaged(&self) -> bool {
        self.engagement.is_engaged()
    }

    pub fn engage(&mut self, stylus: &StylusState, ee_pose: &Pose) -> Result<bool, HcsError> {
        let (pose, _) = clamp_to_workspace(&stylus.pose, &self.config.workspace_half_extents);
        let s = StylusState { pose, ..*stylus };
        let tol = self.config.engage_tolerance;
        let ok = self.engagement.try_engage(&self.config, &s, ee_pose, tol)?;
        if ok {
            self.filter.reset(&pose);
            self.last_filtered = Some(pose);
        }
        Ok(ok)
    }

    pub fn disengage(&mut self) -> Result<(), HcsError> {
        self.engagement.disengage()
    }

    pub fn tick(&mut self, stylus: &StylusState) -> HcsOutput {
        let (pose, workspace_clamped) = clamp_to_workspace(&stylus.pose, &self.config.workspace_half_extents);
        let filtered = if self.filtering {
            self.filter.filter(&pose)
        } else {
            pose
        };
        self.last_filtered = Some(filtered);
        let reference = self
            .engagement
            .map_position(&self.config, &StylusState { pose: filtered, ..*stylus })
            .ok();
        HcsOutput {
            reference,
            workspace_clamped,
        }
    }

    pub fn device_force(&self, wrench: &Wrench, holding: bool) -> Vector3<f64> {
        map_force(&self.config, wrench, holding)
    }
}
