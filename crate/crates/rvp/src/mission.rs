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
//! Six-phase mission sequencer with guarded transitions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionPhase {
    PreCollection,
    Collection,
    PostCollection,
    PreUtilization,
    Utilization,
    PostUtilization,
}

impl MissionPhase {
    pub const ALL: [MissionPhase; 6] = [
        MissionPhase::PreCollection,
        MissionPhase::Collection,
        MissionPhase::PostCollection,
        MissionPhase::PreUtilization,
        MissionPhase::Utilization,
        MissionPhase::PostUtilization,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Option<Self> {
        Self::ALL.get(i as usize).copied()
    }

    /// Phases in which uplinked trajectories may run.
    pub fn allows_autonomy(self) -> bool {
        matches!(self, MissionPhase::PreCollection | MissionPhase::PreUtilization)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionEvent {
    PlanDone,
    Engaged,
    GraspOk,
    RetractDone,
    Plan2Done,
    InsertOk,
    ReleaseOk,
    Abort,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state", content = "phase")]
pub enum MissionState {
    Active(MissionPhase),
    /// Sample released in its slot.
    Complete,
    /// Aborted; terminal.
    Failed,
}

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
#[error("event {event:?} is not allowed in state {state:?}")]
pub struct IllegalTransition {
    pub state: MissionState,
    pub event: MissionEvent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mission {
    state: MissionState,
    plan_done: bool,
    engaged: bool,
    history: Vec<MissionEvent>,
}

impl Default for Mission {
    fn default() -> Self {
        Self::new()
    }
}

impl Mission {
    pub fn new() -> Self {
        Self {
            state: MissionState::Active(MissionPhase::PreCollection),
            plan_done: false,
            engaged: false,
            history: Vec::new(),
        }
    }

    pub fn state(&self) -> MissionState {
        self.state
    }

    pub fn phase(&self) -> Option<MissionPhase> {
        match self.state {
            MissionState::Active(p) => Some(p),
            _ => None,
        }
    }

    /// Accepted events, in order.
    pub fn history(&self) -> &[MissionEvent] {
        &self.history
    }

    pub fn apply(&mut self, event: MissionEvent) -> Result<MissionState, IllegalTransition> {
        use MissionEvent as E;
        use MissionPhase as P;
        let illegal = Err(IllegalTransition {
            state: self.state,
            event,
        });
        let phase = match self.state {
            MissionState::Active(p) => p,
            MissionState::Failed if event == E::Abort => return Ok(self.state),
            _ => return illegal,
        };
        let next = match (phase, event) {
            (_, E::Abort) => MissionState::Failed,
            (P::PreCollection, E::PlanDone) | (P::PreUtilization, E::Plan2Done) => {
                self.plan_done = true;
                self.staged(phase)
            }
            (P::PreCollection | P::PreUtilization, E::Engaged) => {
                self.engaged = true;
                self.staged(phase)
            }
            // Re-engaging during teleoperation is allowed and changes nothing.
            (P::Collection | P::Utilization, E::Engaged) => self.state,
            (P::Collection, E::GraspOk) => MissionState::Active(P::PostCollection),
            (P::PostCollection, E::RetractDone) => MissionState::Active(P::PreUtilization),
            (P::Utilization, E::InsertOk) => MissionState::Active(P::PostUtilization),
            (P::PostUtilization, E::ReleaseOk) => MissionState::Complete,
            _ => return illegal,
        };
        if next != self.state {
            self.plan_done = false;
            self.engaged = false;
        }
        self.state = next;
        self.history.push(event);
        Ok(next)
    }

    fn staged(&self, phase: MissionPhase) -> MissionState {
        if self.plan_done && self.engaged {
            let next = match phase {
                MissionPhase::PreCollection => MissionPhase::Collection,
                _ => MissionPhase::Utilization,
            };
            MissionState::Active(next)
        } else {
            self.state
        }
    }

    /// Whether the operator may be teleoperating in the current phase.
    pub fn is_teleop_phase(&self) -> bool {
        matches!(
            self.phase(),
            Some(MissionPhase::Collection | MissionPhase::Utilization)
        )
    }
}
