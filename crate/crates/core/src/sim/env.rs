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
//! Physical scene: ground, sample, assembly slot and static obstacles.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::collision::{Attachment, CollisionPrimitive, Obstacle, ShapeEntry};
use crate::geometry::Pose;
use crate::kinematics::FramePose;

pub const ENV_FORMAT_VERSION: u32 = 1;

/// Bundled desk-scale scene: rover deck, antennas, slot block, camera box.
pub const DEFAULT_ENV_TOML: &str = include_str!("../../assets/env.toml");

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment: {0}")]
    Invalid(String),
}

/// The prismatic sample: a box standing on its square face.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSpec {
    pub half_extents: Vector3<f64>,
    /// Pose of the sample centre; local z is the long axis.
    pub pose: Pose,
    pub mass: f64,
}

impl SampleSpec {
    pub fn half_length(&self) -> f64 {
        self.half_extents.z
    }

    /// Half of the square cross-section.
    pub fn half_width(&self) -> f64 {
        self.half_extents.x.max(self.half_extents.y)
    }
}

/// Assembly slot. `pose` sits at the centre of the hole mouth with z up.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotSpec {
    pub pose: Pose,
    /// Hole width minus sample width (m).
    pub clearance: f64,
    pub depth: f64,
    /// Width of the 45° lead-in chamfer around the hole mouth (m).
    pub chamfer: f64,
    /// Half extents of the block the hole is cut into.
    pub block_half_extents: Vector3<f64>,
}

impl SlotSpec {
    pub fn block_primitive(&self) -> CollisionPrimitive {
        let center = self
            .pose
            .transform_point(&Vector3::new(0.0, 0.0, -self.block_half_extents.z));
        CollisionPrimitive::world_box(Pose::new(center, self.pose.orientation), self.block_half_extents)
    }
}

/// Fixed camera used as a teleoperation reference frame. The frame follows
/// the device convention: x to the image right, y up, z toward the viewer.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraSpec {
    pub name: String,
    pub pose: Pose,
}

impl CameraSpec {
    /// Camera at `position` looking along `forward` with `up` roughly up.
    pub fn looking(name: &str, position: Vector3<f64>, forward: Vector3<f64>, up: Vector3<f64>) -> Self {
        let back = -forward.normalize();
        let right = up.cross(&back).normalize();
        let true_up = back.cross(&right);
        let rot = nalgebra::Rotation3::from_basis_unchecked(&[right, true_up, back]);
        Self {
            name: name.to_string(),
            pose: Pose::new(position, UnitQuaternion::from_rotation_matrix(&rot)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvModel {
    pub ground_height: f64,
    pub sample: SampleSpec,
    pub slot: SlotSpec,
    pub wall_stiffness: f64,
    pub wall_damping: f64,
    /// Static obstacles for planning (the slot block is added separately).
    pub obstacles: Vec<Obstacle>,
    pub cameras: Vec<CameraSpec>,
}

impl EnvModel {
    pub fn default_env() -> Self {
        Self::from_toml(DEFAULT_ENV_TOML).expect("bundled environment is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self, EnvError> {
        let file: EnvFile = toml::from_str(text).map_err(|e| EnvError::Invalid(e.to_string()))?;
        file.into_model()
    }

    /// Half-width of the square hole.
    pub fn hole_half_width(&self) -> f64 {
        self.sample.half_width() + 0.5 * self.slot.clearance
    }

    pub fn camera(&self, name: &str) -> Option<&CameraSpec> {
        self.cameras.iter().find(|c| c.name == name)
    }

    /// Every static collision object, including the slot block and a ground
    /// slab.
    pub fn planning_obstacles(&self) -> Vec<Obstacle> {
        let mut out = self.obstacles.clone();
        out.push(Obstacle::new("slot_block", self.slot.block_primitive()));
        out.push(Obstacle::new(
            "ground",
            CollisionPrimitive::world_box(
                Pose::from_translation(0.0, 0.0, self.ground_height - 0.05),
                Vector3::new(3.0, 3.0, 0.05),
            ),
        ));
        out
    }

    pub fn planning_primitives(&self) -> Vec<CollisionPrimitive> {
        self.planning_obstacles().into_iter().map(|o| o.primitive).collect()
    }

    /// The resting sample as an obstacle.
    pub fn sample_obstacle(&self, pose: &Pose) -> Obstacle {
        Obstacle::new("sample", CollisionPrimitive::world_box(*pose, self.sample.half_extents))
    }

    fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::Invalid(m.to_string()));
        if self.slot.clearance <= 0.0 {
            return bad("slot clearance must be positive");
        }
        if self.slot.depth <= 0.0 || self.slot.chamfer < 0.0 {
            return bad("slot depth must be positive and chamfer non-negative");
        }
        if self.sample.half_extents.iter().any(|h| *h <= 0.0) || self.sample.mass < 0.0 {
            return bad("sample dimensions must be positive");
        }
        if self.wall_stiffness <= 0.0 || self.wall_damping < 0.0 {
            return bad("wall stiffness must be positive");
        }
        if self.obstacles.iter().any(|o| !o.primitive.shape.is_valid()) {
            return bad("obstacle dimensions must be positive");
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct EnvFile {
    format_version: u32,
    ground_height_m: f64,
    wall_stiffness_n_per_m: f64,
    wall_damping_ns_per_m: f64,
    sample: SampleEntry,
    slot: SlotEntry,
    #[serde(default)]
    obstacles: Vec<ObstacleEntry>,
    #[serde(default)]
    cameras: Vec<CameraEntry>,
}

#[derive(Serialize, Deserialize)]
struct SampleEntry {
    half_extents_m: [f64; 3],
    center: FramePose,
    mass_kg: f64,
}

#[derive(Serialize, Deserialize)]
struct SlotEntry {
    mouth: FramePose,
    clearance_m: f64,
    depth_m: f64,
    chamfer_m: f64,
    block_half_extents_m: [f64; 3],
}

#[derive(Serialize, Deserialize)]
struct ObstacleEntry {
    name: String,
    #[serde(flatten)]
    shape: ShapeEntry,
    origin: FramePose,
}

#[derive(Serialize, Deserialize)]
struct CameraEntry {
    name: String,
    position_m: [f64; 3],
    forward: [f64; 3],
    up: [f64; 3],
}

impl EnvFile {
    fn into_model(self) -> Result<EnvModel, EnvError> {
        if self.format_version != ENV_FORMAT_VERSION {
            return Err(EnvError::Invalid(format!(
                "unsupported format_version {} (expected {ENV_FORMAT_VERSION})",
                self.format_version
            )));
        }
        let model = EnvModel {
            ground_height: self.ground_height_m,
            wall_stiffness: self.wall_stiffness_n_per_m,
            wall_damping: self.wall_damping_ns_per_m,
            sample: SampleSpec {
                half_extents: Vector3::from(self.sample.half_extents_m),
                pose: self.sample.center.to_pose(),
                mass: self.sample.mass_kg,
            },
            slot: SlotSpec {
                pose: self.slot.mouth.to_pose(),
                clearance: self.slot.clearance_m,
                depth: self.slot.depth_m,
                chamfer: self.slot.chamfer_m,
                block_half_extents: Vector3::from(self.slot.block_half_extents_m),
            },
            obstacles: self
                .obstacles
                .iter()
                .map(|o| {
                    Obstacle::new(
                        &o.name,
                        CollisionPrimitive {
                            shape: o.shape.into(),
                            local_pose: o.origin.to_pose(),
                            attachment: Attachment::World,
                        },
                    )
                })
                .collect(),
            cameras: self
                .cameras
                .iter()
                .map(|c| {
                    CameraSpec::looking(
                        &c.name,
                        Vector3::from(c.position_m),
                        Vector3::from(c.forward),
                        Vector3::from(c.up),
                    )
                })
                .collect(),
        };
        model.validate()?;
        Ok(model)
    }
}
