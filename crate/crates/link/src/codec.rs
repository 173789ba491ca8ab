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
//! Binary frame codec.
//!
//! All integers and floats are little-endian.
//!
//! | field          | type    |
//! |----------------|---------|
//! | magic          | u32 `0x54534C4B` |
//! | version        | u8 (1)  |
//! | kind           | u8      |
//! | seq            | u64     |
//! | timestamp      | f64 (s) |
//! | payload length | u32     |
//! | payload        | bytes   |
//! | CRC32C         | u32 over every preceding byte |
//!
//! A pose is seven f64: position x, y, z then quaternion x, y, z, w.

use isru_core::geometry::{Pose, Wrench};
use isru_core::kinematics::JointConfig;
use isru_core::sim::GripperState;
use isru_rvp::{MissionPhase, MissionState, Trajectory, Waypoint};
use nalgebra::{Quaternion, UnitQuaternion};
use thiserror::Error;

use crate::message::*;

pub const MAGIC: u32 = 0x5453_4C4B;
pub const VERSION: u8 = 1;
/// Bytes before the payload.
pub const HEADER_LEN: usize = 4 + 1 + 1 + 8 + 8 + 4;
pub const TRAILER_LEN: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("unsupported frame version {0}")]
    VersionMismatch(u8),
    #[error("checksum mismatch")]
    ChecksumMismatch,
}

fn malformed<T>(why: impl Into<String>) -> Result<T, CodecError> {
    Err(CodecError::MalformedFrame(why.into()))
}

pub fn encode(msg: &LinkMessage) -> Vec<u8> {
    let mut payload = Writer::default();
    match &msg.kind {
        MessageKind::PoseRef { pose } => payload.pose(pose),
        MessageKind::GripperCmd { command } => payload.u8(match command {
            GripperCommand::Open => 0,
            GripperCommand::Close => 1,
        }),
        MessageKind::TrajectoryUplink { trajectory } => payload.trajectory(trajectory),
        MessageKind::ExecAck { trajectory_id, status } => {
            payload.u64(*trajectory_id);
            payload.u8(match status {
                ExecStatus::Accepted => 0,
                ExecStatus::Completed => 1,
                ExecStatus::Aborted => 2,
                ExecStatus::Rejected => 3,
            });
        }
        MessageKind::Telemetry(t) => {
            payload.pose(&t.ee_pose);
            for v in t.wrench.to_array() {
                payload.f64(v);
            }
            payload.joints(&t.q);
            payload.u8(mission_code(t.mission));
            payload.u8(match t.gripper {
                GripperState::Open => 0,
                GripperState::Closing => 1,
                GripperState::Holding => 2,
            });
            payload.u8(t.safety_tripped as u8);
        }
        MessageKind::Engage {
            action,
            stylus_orientation,
        } => {
            payload.u8(match action {
                EngageAction::Request => 0,
                EngageAction::Ack => 1,
                EngageAction::Deny => 2,
            });
            let q = stylus_orientation.quaternion();
            for v in [q.i, q.j, q.k, q.w] {
                payload.f64(v);
            }
        }
    }
    let payload = payload.0;
    let mut out = Writer(Vec::with_capacity(HEADER_LEN + payload.len() + TRAILER_LEN));
    out.u32(MAGIC);
    out.u8(VERSION);
    out.u8(msg.kind.code());
    out.u64(msg.seq);
    out.f64(msg.timestamp);
    out.u32(payload.len() as u32);
    out.0.extend_from_slice(&payload);
    let crc = crc32c::crc32c(&out.0);
    out.u32(crc);
    out.0
}

pub fn decode(frame: &[u8]) -> Result<LinkMessage, CodecError> {
    if frame.len() < HEADER_LEN + TRAILER_LEN {
        return malformed(format!("{} bytes is shorter than a frame header", frame.len()));
    }
    let mut r = Reader::new(&frame[..HEADER_LEN]);
    if r.u32()? != MAGIC {
        return malformed("bad magic");
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(CodecError::VersionMismatch(version));
    }
    let kind = r.u8()?;
    let seq = r.u64()?;
    let timestamp = r.f64()?;
    let len = r.u32()? as usize;
    if frame.len() != HEADER_LEN + len + TRAILER_LEN {
        return malformed(format!("payload length {len} does not match frame size {}", frame.len()));
    }
    let body_end = HEADER_LEN + len;
    let stored = u32::from_le_bytes(frame[body_end..].try_into().unwrap());
    if crc32c::crc32c(&frame[..body_end]) != stored {
        return Err(CodecError::ChecksumMismatch);
    }
    let mut p = Reader::new(&frame[HEADER_LEN..body_end]);
    let kind = match kind {
        1 => MessageKind::PoseRef { pose: p.pose()? },
        2 => MessageKind::GripperCmd {
            command: match p.u8()? {
                0 => GripperCommand::Open,
                1 => GripperCommand::Close,
                v => return malformed(format!("gripper command {v}")),
            },
        },
        3 => MessageKind::TrajectoryUplink {
            trajectory: p.trajectory()?,
        },
        4 => MessageKind::ExecAck {
            trajectory_id: p.u64()?,
            status: match p.u8()? {
                0 => ExecStatus::Accepted,
                1 => ExecStatus::Completed,
                2 => ExecStatus::Aborted,
                3 => ExecStatus::Rejected,
                v => return malformed(format!("exec status {v}")),
            },
        },
        5 => {
            let ee_pose = p.pose()?;
            let mut w = [0.0; 6];
            for v in &mut w {
                *v = p.f64()?;
            }
            let q = p.joints()?;
            let mission = mission_from_code(p.u8()?)?;
            let gripper = match p.u8()? {
                0 => GripperState::Open,
                1 => GripperState::Closing,
                2 => GripperState::Holding,
                v => return malformed(format!("gripper state {v}")),
            };
            let safety_tripped = match p.u8()? {
                0 => false,
                1 => true,
                v => return malformed(format!("safety flag {v}")),
            };
            MessageKind::Telemetry(Telemetry {
                ee_pose,
                wrench: Wrench::from_array(w),
                q,
                mission,
                gripper,
                safety_tripped,
            })
        }
        6 => {
            let action = match p.u8()? {
                0 => EngageAction::Request,
                1 => EngageAction::Ack,
                2 => EngageAction::Deny,
                v => return malformed(format!("engage action {v}")),
            };
            let [x, y, z, w] = [p.f64()?, p.f64()?, p.f64()?, p.f64()?];
            let q = Quaternion::new(w, x, y, z);
            if !(q.norm() - 1.0).abs().le(&1e-9) {
                return malformed("stylus orientation is not a unit quaternion");
            }
            MessageKind::Engage {
                action,
                stylus_orientation: UnitQuaternion::new_unchecked(q),
            }
        }
        k => return malformed(format!("unknown message kind {k}")),
    };
    if !p.is_empty() {
        return malformed("trailing payload bytes");
    }
    Ok(LinkMessage { seq, timestamp, kind })
}

fn mission_code(m: MissionState) -> u8 {
    match m {
        MissionState::Active(p) => p.index(),
        MissionState::Complete => 6,
        MissionState::Failed => 7,
    }
}

fn mission_from_code(c: u8) -> Result<MissionState, CodecError> {
    match c {
        6 => Ok(MissionState::Complete),
        7 => Ok(MissionState::Failed),
        _ => MissionPhase::from_index(c)
            .map(MissionState::Active)
            .ok_or_else(|| CodecError::MalformedFrame(format!("mission code {c}"))),
    }
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn pose(&mut self, p: &Pose) {
        for v in p.position_array().into_iter().chain(p.xyzw()) {
            self.f64(v);
        }
    }
    fn joints(&mut self, q: &JointConfig) {
        self.u16(q.len() as u16);
        for v in q.as_slice() {
            self.f64(*v);
        }
    }
    fn trajectory(&mut self, t: &Trajectory) {
        self.u64(t.id);
        self.u64(t.world_hash);
        self.u16(t.planner.len() as u16);
        self.0.extend_from_slice(t.planner.as_bytes());
        let n_joints = t.waypoints.first().map_or(0, |w| w.q.len());
        self.u16(n_joints as u16);
        self.u32(t.waypoints.len() as u32);
        for w in &t.waypoints {
            self.f64(w.time);
            for v in w.q.as_slice() {
                self.f64(*v);
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.buf.len() < n {
            return malformed("payload truncated");
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn pose(&mut self) -> Result<Pose, CodecError> {
        let mut v = [0.0; 7];
        for x in &mut v {
            *x = self.f64()?;
        }
        let pose = Pose::from_components([v[0], v[1], v[2]], [v[3], v[4], v[5], v[6]]);
        match pose {
            Some(p) if p.xyzw() == [v[3], v[4], v[5], v[6]] => Ok(p),
            Some(_) => malformed("pose quaternion is not canonical"),
            None => malformed("invalid pose"),
        }
    }

    fn joints(&mut self) -> Result<JointConfig, CodecError> {
        let n = self.u16()? as usize;
        let mut q = Vec::with_capacity(n);
        for _ in 0..n {
            q.push(self.f64()?);
        }
        Ok(JointConfig::new(q))
    }

    fn trajectory(&mut self) -> Result<Trajectory, CodecError> {
        let id = self.u64()?;
        let world_hash = self.u64()?;
        let name_len = self.u16()? as usize;
        let planner = String::from_utf8(self.take(name_len)?.to_vec())
            .or_else(|_| malformed("planner name is not UTF-8"))?;
        let n_joints = self.u16()? as usize;
        let n = self.u32()? as usize;
        if n.saturating_mul(8 * (n_joints + 1)) > self.buf.len() {
            return malformed("waypoint table truncated");
        }
        let mut waypoints = Vec::with_capacity(n);
        for _ in 0..n {
            let time = self.f64()?;
            let mut q = Vec::with_capacity(n_joints);
            for _ in 0..n_joints {
                q.push(self.f64()?);
            }
            waypoints.push(Waypoint {
                time,
                q: JointConfig::new(q),
            });
        }
        Ok(Trajectory {
            id,
            planner,
            world_hash,
            waypoints,
        })
    }
}

