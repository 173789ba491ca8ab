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
//! Acknowledged delivery for one-shot messages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::message::MessageKind;
use crate::LinkError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AckKey {
    Trajectory(u64),
    Engage,
}

impl AckKey {
    /// Key a message would be acknowledged under, if it needs one.
    pub fn for_request(kind: &MessageKind) -> Option<AckKey> {
        match kind {
            MessageKind::TrajectoryUplink { trajectory } => Some(AckKey::Trajectory(trajectory.id)),
            MessageKind::Engage {
                action: crate::message::EngageAction::Request,
                ..
            } => Some(AckKey::Engage),
            _ => None,
        }
    }

    /// Key a reply settles.
    pub fn for_reply(kind: &MessageKind) -> Option<AckKey> {
        match kind {
            MessageKind::ExecAck { trajectory_id, .. } => Some(AckKey::Trajectory(*trajectory_id)),
            MessageKind::Engage { action, .. } if *action != crate::message::EngageAction::Request => {
                Some(AckKey::Engage)
            }
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
struct Pending {
    kind: MessageKind,
    last_sent: u64,
    attempts: u32,
}

/// Resends unacknowledged requests after a fixed timeout.
#[derive(Clone, Debug)]
pub struct ReliableSender {
    timeout_ticks: u64,
    max_attempts: u32,
    pending: BTreeMap<AckKey, Pending>,
}

impl ReliableSender {
    pub fn new(timeout_ticks: u64, max_attempts: u32) -> Self {
        Self {
            timeout_ticks: timeout_ticks.max(1),
            max_attempts: max_attempts.max(1),
            pending: BTreeMap::new(),
        }
    }

    /// Timeout sized to a channel pair: one round trip plus jitter slack.
    pub fn for_channel(delay_ticks: u64, jitter_ticks: u64, max_attempts: u32) -> Self {
        Self::new(2 * delay_ticks + 2 * jitter_ticks + 20, max_attempts)
    }

    pub fn timeout_ticks(&self) -> u64 {
        self.timeout_ticks
    }

    /// Starts tracking `kind`; the caller sends it now.
    pub fn track(&mut self, key: AckKey, kind: MessageKind, now_tick: u64) {
        self.pending.insert(
            key,
            Pending {
                kind,
                last_sent: now_tick,
                attempts: 1,
            },
        );
    }

    /// Returns true if `key` was outstanding.
    pub fn acknowledge(&mut self, key: AckKey) -> bool {
        self.pending.remove(&key).is_some()
    }

    pub fn is_pending(&self, key: AckKey) -> bool {
        self.pending.contains_key(&key)
    }

    pub fn attempts(&self, key: AckKey) -> Option<u32> {
        self.pending.get(&key).map(|p| p.attempts)
    }

    /// Messages to resend now. A request that has used every attempt is
    /// dropped from tracking and reported as a timeout.
    pub fn due(&mut self, now_tick: u64) -> Result<Vec<MessageKind>, LinkError> {
        let mut out = Vec::new();
        let mut expired = None;
        for (key, p) in self.pending.iter_mut() {
            if now_tick < p.last_sent + self.timeout_ticks {
                continue;
            }
            if p.attempts >= self.max_attempts {
                expired = Some(*key);
                break;
            }
            p.attempts += 1;
            p.last_sent = now_tick;
            out.push(p.kind.clone());
        }
        if let Some(key) = expired {
            self.pending.remove(&key);
            return Err(LinkError::Timeout(key));
        }
        Ok(out)
    }
}

/// Remembers which trajectories a receiver has already accepted.
#[derive(Clone, Debug, Default)]
pub struct Deduplicator {
    seen: std::collections::BTreeSet<u64>,
}

impl Deduplicator {
    /// True the first time `id` is offered.
    pub fn first_time(&mut self, id: u64) -> bool {
        self.seen.insert(id)
    }
}
