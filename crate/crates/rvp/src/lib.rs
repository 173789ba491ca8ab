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
//! Robot visualization and planning back end.
//!
//! Collision-aware point-to-point planning in joint space, kinematic
//! rehearsal of planned trajectories, the mission phase machine and scene
//! snapshots for clients.

pub mod mission;
pub mod planner;
pub mod rehearse;
pub mod scene;
pub mod trajectory;
pub mod world;

pub use mission::{IllegalTransition, Mission, MissionEvent, MissionPhase, MissionState};
pub use planner::{plan_p2p, PlanError, PlannerConfig};
pub use rehearse::{rehearse, LimitViolation, MotionBound, RehearsalReport, Violation};
pub use scene::{snapshot_scene, SceneSnapshot};
pub use trajectory::{Trajectory, TrajectoryError, Waypoint};
pub use world::{attach_payload, WorldModel};
