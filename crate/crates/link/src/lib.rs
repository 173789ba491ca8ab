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
//! Bilateral link between the control station and the robot: message
//! types, the binary frame codec, a tick-quantized delay channel and
//! capture files for replay.

pub mod capture;
pub mod channel;
pub mod codec;
pub mod message;
pub mod reliable;

pub use capture::{CaptureReader, CaptureRecord, CaptureWriter, Direction};
pub use channel::{ChannelConfig, DelayChannel, LinkStats, Stamper};
pub use codec::{decode, encode, CodecError};
pub use message::{EngageAction, ExecStatus, GripperCommand, LinkMessage, MessageKind, Telemetry};
pub use message::newest_pose_ref;
pub use reliable::{AckKey, Deduplicator, ReliableSender};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("invalid channel config: {0}")]
    InvalidConfig(String),
    #[error("no acknowledgement for {0:?}")]
    Timeout(AckKey),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("capture: {0}")]
    Capture(String),
}
