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
use isru_core::geometry::{Pose, Wrench};
use isru_core::kinematics::JointConfig;
use isru_core::sim::GripperState;
use isru_rvp::{MissionState, Trajectory};
use nalgebra::UnitQuaternion;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperCommand {
    Open,
    Close,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Accepted,
    Completed,
    Aborted,
    Rejected,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngageAction {
    Request,
    Ack,
    Deny,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub ee_pose: Pose,
    /// Measured at the grasp frame: contact plus payload weight.
    pub wrench: Wrench,
    pub q: JointConfig,
    pub mission: MissionState,
    pub gripper: GripperState,
    pub safety_tripped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MessageKind {
    PoseRef {
        pose: Pose,
    },
    GripperCmd {
        command: GripperCommand,
    },
    TrajectoryUplink {
        trajectory: Trajectory,
    },
    ExecAck {
        trajectory_id: u64,
        status: ExecStatus,
    },
    Telemetry(Telemetry),
    Engage {
        action: EngageAction,
        #[serde(with = "quat_xyzw")]
        stylus_orientation: UnitQuaternion<f64>,
    },
}

impl MessageKind {
    /// Wire tag of the kind.
    pub fn code(&self) -> u8 {
        match self {
            MessageKind::PoseRef { .. } => 1,
            MessageKind::GripperCmd { .. } => 2,
            MessageKind::TrajectoryUplink { .. } => 3,
            MessageKind::ExecAck { .. } => 4,
            MessageKind::Telemetry(_) => 5,
            MessageKind::Engage { .. } => 6,
        }
    }

    /// State streams are superseded by newer samples and never resent.
    pub fn is_stream(&self) -> bool {
        matches!(self, MessageKind::PoseRef { .. } | MessageKind::Telemetry(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkMessage {
    pub seq: u64,
    /// Sender clock (s).
    pub timestamp: f64,
    #[serde(flatten)]
    pub kind: MessageKind,
}

/// The most recent pose reference in a batch; older ones are superseded.
pub fn newest_pose_ref(batch: &[LinkMessage]) -> Option<&Pose> {
    batch
        .iter()
        .filter_map(|m| match &m.kind {
            MessageKind::PoseRef { pose } => Some((m.seq, pose)),
            _ => None,
        })
        .max_by_key(|(seq, _)| *seq)
        .map(|(_, p)| p)
}

mod quat_xyzw {
    use nalgebra::{Quaternion, UnitQuaternion};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(q: &UnitQuaternion<f64>, s: S) -> Result<S::Ok, S::Error> {
        [q.i, q.j, q.k, q.w].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<UnitQuaternion<f64>, D::Error> {
        let [x, y, z, w] = <[f64; 4]>::deserialize(d)?;
        let q = Quaternion::new(w, x, y, z);
        if (q.norm() - 1.0).abs() > 1e-9 {
            return Err(serde::de::Error::custom("orientation is not a unit quaternion"));
        }
        Ok(UnitQuaternion::new_unchecked(q))
    }
}
