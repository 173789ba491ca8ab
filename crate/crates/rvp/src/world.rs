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
use isru_core::collision::{CollisionPrimitive, Obstacle};
use isru_core::geometry::Pose;
use isru_core::kinematics::ArmModel;
use isru_core::sim::EnvModel;
use nalgebra::Vector3;
use sha2::{Digest, Sha256};

/// Static obstacle set used for planning and rehearsal. The content hash is
/// recomputed on every change.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldModel {
    obstacles: Vec<Obstacle>,
    hash: u64,
}

impl WorldModel {
    pub fn new(obstacles: Vec<Obstacle>) -> Self {
        let hash = content_hash(&obstacles);
        Self { obstacles, hash }
    }

    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    /// Scene obstacles plus the sample resting at `sample`, if any.
    pub fn from_env(env: &EnvModel, sample: Option<&Pose>) -> Self {
        let mut obstacles = env.planning_obstacles();
        if let Some(p) = sample {
            obstacles.push(env.sample_obstacle(p));
        }
        Self::new(obstacles)
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn primitives(&self) -> Vec<CollisionPrimitive> {
        self.obstacles.iter().map(|o| o.primitive).collect()
    }

    pub fn hash(&self) -> u64 {
        self.hash
    }

    pub fn with_obstacle(mut self, obstacle: Obstacle) -> Self {
        self.obstacles.push(obstacle);
        Self::new(self.obstacles)
    }

    pub fn without(self, name: &str) -> Self {
        Self::new(self.obstacles.into_iter().filter(|o| o.name != name).collect())
    }
}

fn content_hash(obstacles: &[Obstacle]) -> u64 {
    let bytes = serde_json::to_vec(obstacles).expect("obstacles serialize");
    let digest = Sha256::digest(&bytes);
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Arm model carrying a held box of `half_extents` at `attach` in the grasp
/// frame, added as a capsule on the last link that covers the box.
pub fn attach_payload(arm: &ArmModel, attach: &Pose, half_extents: &Vector3<f64>) -> ArmModel {
    let mut out = arm.clone();
    let radius = half_extents.x.hypot(half_extents.y);
    let local = arm.ee_offset.compose(attach);
    out.collision_bodies.push(CollisionPrimitive {
        shape: isru_core::collision::Shape::Capsule {
            radius,
            half_length: half_extents.z,
        },
        local_pose: local,
        attachment: isru_core::collision::Attachment::Link(arm.dof()),
    });
    out
}
