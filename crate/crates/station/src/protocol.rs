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
//! Client protocol: length-prefixed JSON frames over a byte stream.
//!
//! Each frame is a little-endian `u32` byte count followed by one JSON
//! object. Clients send [`ClientMessage`], the server sends
//! [`ServerMessage`]. The first client frame must be `hello`.

use std::io::{self, Read, Write};

use isru_core::geometry::Pose;
use isru_hcs::Camera;
use isru_link::{ExecStatus, GripperCommand, MessageKind};
use isru_rvp::{MissionState, RehearsalReport, SceneSnapshot};
use nalgebra::{UnitQuaternion, Vector3};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::session::{GoalName, LogEntry};

pub const PROTOCOL_VERSION: u32 = 1;
/// Largest accepted frame body (bytes).
pub const MAX_FRAME: usize = 16 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Controller,
    Viewer,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Buttons {
    /// Request engagement (ignored while engaged).
    #[serde(default)]
    pub engage: bool,
    /// Disengage.
    #[serde(default)]
    pub release: bool,
    /// Snap the stylus orientation onto the end effector's.
    #[serde(default)]
    pub align: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verb", deny_unknown_fields)]
pub enum ClientMessage {
    Hello {
        version: u32,
        role: Role,
    },
    EngageRequest,
    Disengage,
    PlanRequest {
        goal: GoalName,
    },
    RehearseRequest,
    ExecuteRequest,
    SetCamera {
        camera: Camera,
    },
    /// Stylus motion since the last input, in the device frame.
    StylusInput {
        #[serde(default = "Pose::identity")]
        delta: Pose,
        #[serde(default)]
        buttons: Buttons,
    },
    GripperCmd {
        command: GripperCommand,
    },
    DeclareInserted,
    Abort,
    /// A robot-link message; only operator-originated kinds are accepted.
    Link {
        message: MessageKind,
    },
}

impl ClientMessage {
    pub fn verb(&self) -> &'static str {
        match self {
            Self::Hello { .. } => "hello",
            Self::EngageRequest => "engage_request",
            Self::Disengage => "disengage",
            Self::PlanRequest { .. } => "plan_request",
            Self::RehearseRequest => "rehearse_request",
            Self::ExecuteRequest => "execute_request",
            Self::SetCamera { .. } => "set_camera",
            Self::StylusInput { .. } => "stylus_input",
            Self::GripperCmd { .. } => "gripper_cmd",
            Self::DeclareInserted => "declare_inserted",
            Self::Abort => "abort",
            Self::Link { .. } => "link",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecView {
    pub trajectory_id: u64,
    pub status: Option<ExecStatus>,
}

/// Station-side state that is not part of the scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationView {
    pub tick: u64,
    pub engaged: bool,
    pub awaiting_engagement: bool,
    /// Angle between the stylus (through the camera) and the end effector (rad).
    pub orientation_error: f64,
    pub camera: Camera,
    /// Device axes in world for the active camera.
    pub camera_rotation: UnitQuaternion<f64>,
    pub stylus: Pose,
    pub setpoint: Pose,
    /// Force rendered on the device, already scaled (N).
    pub felt_force: Vector3<f64>,
    pub workspace_clamped: bool,
    /// Age of the newest telemetry (s).
    pub telemetry_age: Option<f64>,
    pub plan_id: Option<u64>,
    pub rehearsal: Option<RehearsalReport>,
    pub execution: Option<ExecView>,
    pub plan_completed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub scene: SceneSnapshot,
    pub station: StationView,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum ServerMessage {
    Welcome {
        version: u32,
        session: u64,
        role: Role,
        tick_rate_hz: f64,
    },
    /// Connection refused; the server closes the stream after this.
    Rejected {
        reason: RejectReason,
        detail: String,
    },
    Reply {
        verb: String,
        ok: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
    Snapshot(Box<Snapshot>),
    Event(LogEntry),
    Mission {
        state: MissionState,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    EndpointBusy,
    VersionMismatch,
    BadHello,
}

pub fn write_frame<W: Write, T: Serialize>(w: &mut W, msg: &T) -> io::Result<()> {
    let body = serde_json::to_vec(msg).map_err(io::Error::other)?;
    if body.len() > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidInput, "frame too large"));
    }
    let mut buf = Vec::with_capacity(4 + body.len());
    buf.extend_from_slice(&(body.len() as u32).to_le_bytes());
    buf.extend_from_slice(&body);
    w.write_all(&buf)?;
    w.flush()
}

/// Reads one frame body. `Ok(None)` on a clean end of stream.
pub fn read_frame_bytes<R: Read>(r: &mut R) -> io::Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let n = u32::from_le_bytes(len) as usize;
    if n > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("frame of {n} bytes")));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body)?;
    Ok(Some(body))
}

pub fn read_frame<R: Read, T: DeserializeOwned>(r: &mut R) -> io::Result<Option<T>> {
    match read_frame_bytes(r)? {
        Some(body) => serde_json::from_slice(&body)
            .map(Some)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
        None => Ok(None),
    }
}
