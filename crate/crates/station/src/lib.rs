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
//! Operator station: scenario configuration, the simulated robot node,
//! teleoperation sessions, scripted trials and the socket service.

pub mod config;
pub mod protocol;
pub mod robot;
pub mod server;
pub mod session;
pub mod trial;

pub use config::{standard_scenarios, Limits, ScenarioConfig, ScenarioFile, SessionMode};
pub use robot::RobotNode;
pub use protocol::{ClientMessage, Role, ServerMessage, Snapshot, StationView, PROTOCOL_VERSION};
pub use server::{apply_verb, serve, Client, ServeOptions, Server, StopHandle};
pub use session::{ExecPurpose, ExecTracker, GoalName, LogEntry, Session, SessionEvent};
pub use trial::{drive, plan_rehearse_execute, run_trial, trial_seed, TrialRecord};

#[derive(Debug, thiserror::Error)]
pub enum StationError {
    #[error("bad config at `{path}`: {reason}")]
    BadConfig { path: String, reason: String },
    #[error("not allowed: {0}")]
    NotAllowed(String),
    #[error("planning failed: {0}")]
    Plan(#[from] isru_rvp::PlanError),
    #[error(transparent)]
    Hcs(#[from] isru_hcs::HcsError),
    #[error(transparent)]
    Link(#[from] isru_link::LinkError),
    #[error("endpoint busy: {0}")]
    EndpointBusy(String),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
