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
use isru_core::collision::Obstacle;
use isru_core::geometry::{Pose, Wrench};
use isru_core::kinematics::{ArmModel, JointConfig, KinematicsError};
use isru_core::sim::{GripperState, SimState};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::mission::MissionState;
use crate::trajectory::Trajectory;
use crate::world::WorldModel;

/// Everything a client needs to draw the robot and its surroundings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub time_s: f64,
    pub mission: MissionState,
    pub q: JointConfig,
    /// Base followed by every link frame (`dof + 1` poses).
    pub link_poses: Vec<Pose>,
    pub ee_pose: Pose,
    pub reference: Pose,
    pub sample_pose: Pose,
    pub gripper: GripperState,
    pub safety_tripped: bool,
    pub wrench: Wrench,
    pub obstacles: Vec<Obstacle>,
    pub world_hash: u64,
    /// Grasp-frame poses along the current plan, one per waypoint.
    pub planned_path: Vec<Pose>,
}

impl SceneSnapshot {
    /// Digest of the serialized snapshot.
    pub fn hash(&self) -> u64 {
        let bytes = serde_json::to_vec(self).expect("snapshot serializes");
        let digest = Sha256::digest(&bytes);
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }
}

/// Projects robot state into a scene description. Pure.
pub fn snapshot_scene(
    sim: &SimState,
    wrench: &Wrench,
    arm: &ArmModel,
    q: &JointConfig,
    world: &WorldModel,
    mission: MissionState,
    plan: Option<&Trajectory>,
) -> Result<SceneSnapshot, KinematicsError> {
    let link_poses = arm.link_poses(q)?;
    let planned_path = match plan {
        Some(t) => t
            .waypoints
            .iter()
            .map(|w| arm.forward_kinematics(&w.q))
            .collect::<Result<_, _>>()?,
        None => Vec::new(),
    };
    Ok(SceneSnapshot {
        time_s: sim.clock,
        mission,
        q: q.clone(),
        link_poses,
        ee_pose: sim.ee_pose,
        reference: sim.last_reference,
        sample_pose: sim.current_sample_pose(),
        gripper: sim.gripper,
        safety_tripped: sim.safety_tripped,
        wrench: *wrench,
        obstacles: world.obstacles().to_vec(),
        world_hash: world.hash(),
        planned_path,
    })
}
