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
//! Robot side of the link: impedance simulation, trajectory execution,
//! engagement interlock and telemetry.

use std::collections::BTreeMap;

use isru_core::geometry::{Pose, Wrench};
use isru_core::kinematics::{ArmModel, IkOptions, JointConfig};
use isru_core::sim::{GripperState, Simulator};
use isru_link::channel::Stamper;
use isru_link::{newest_pose_ref, Deduplicator, EngageAction, ExecStatus, GripperCommand, LinkMessage, MessageKind, Telemetry};
use isru_rvp::{MissionPhase, MissionState, Trajectory};

/// Final-waypoint tolerance for a completed execution (m).
pub const EXEC_POSITION_TOLERANCE: f64 = 0.005;
/// Orientation tolerance for a completed execution (rad).
pub const EXEC_ORIENTATION_TOLERANCE: f64 = 0.02;
/// Time allowed after the last waypoint to settle (s).
pub const EXEC_SETTLE_TIMEOUT: f64 = 3.0;
/// Largest distance between the current pose and a trajectory start (m).
pub const EXEC_START_TOLERANCE: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
enum Mode {
    Idle,
    Executing { trajectory: Trajectory, started: u64 },
}

#[derive(Clone, Debug)]
pub struct RobotNode {
    pub sim: Simulator,
    arm: ArmModel,
    q: JointConfig,
    ik: IkOptions,
    stamper: Stamper,
    tick_rate: f64,
    mode: Mode,
    dedup: Deduplicator,
    statuses: BTreeMap<u64, ExecStatus>,
    measured: Wrench,
    mission: MissionState,
}

impl RobotNode {
    pub fn new(sim: Simulator, arm: ArmModel, q: JointConfig, tick_rate: f64) -> Self {
        Self {
            sim,
            arm,
            q,
            ik: IkOptions {
                max_iterations: 20,
                position_tolerance: 1e-6,
                orientation_tolerance: 1e-5,
                ..IkOptions::default()
            },
            stamper: Stamper::new(tick_rate),
            tick_rate,
            mode: Mode::Idle,
            dedup: Deduplicator::default(),
            statuses: BTreeMap::new(),
            measured: Wrench::zero(),
            mission: MissionState::Active(MissionPhase::PreCollection),
        }
    }

    pub fn q(&self) -> &JointConfig {
        &self.q
    }

    pub fn is_executing(&self) -> bool {
        matches!(self.mode, Mode::Executing { .. })
    }

    pub fn measured(&self) -> Wrench {
        self.measured
    }

    /// Mission state echoed in telemetry.
    pub fn set_mission(&mut self, mission: MissionState) {
        self.mission = mission;
    }

    fn fk(&self, q: &JointConfig) -> Pose {
        self.arm.forward_kinematics(q).expect("trajectory dimension checked on receipt")
    }

    fn accept(&mut self, trajectory: Trajectory, now: u64) -> ExecStatus {
        if self.sim.state.safety_tripped || self.is_executing() {
            return ExecStatus::Rejected;
        }
        if trajectory.validate(&self.arm).is_err() {
            return ExecStatus::Rejected;
        }
        let start = self.fk(trajectory.start());
        if (start.position - self.sim.state.ee_pose.position).norm() > EXEC_START_TOLERANCE {
            return ExecStatus::Rejected;
        }
        self.mode = Mode::Executing { trajectory, started: now };
        ExecStatus::Accepted
    }

    /// Handles this tick's deliveries, advances the simulation one step and
    /// returns the replies and telemetry to send.
    pub fn tick(&mut self, now: u64, inbox: Vec<LinkMessage>) -> Vec<LinkMessage> {
        let mut out = Vec::new();
        let mut reference = None;
        if !self.is_executing() {
            reference = newest_pose_ref(&inbox).copied();
        }
        for msg in inbox {
            match msg.kind {
                MessageKind::GripperCmd { command } => match command {
                    GripperCommand::Close => self.sim.close_gripper(),
                    GripperCommand::Open => {
                        let _ = self.sim.open_gripper();
                    }
                },
                MessageKind::TrajectoryUplink { trajectory } => {
                    let id = trajectory.id;
                    let status = if self.dedup.first_time(id) {
                        let s = self.accept(trajectory, now);
                        self.statuses.insert(id, s);
                        s
                    } else {
                        // duplicate after a lost ack: repeat the latest status
                        self.statuses[&id]
                    };
                    out.push(MessageKind::ExecAck { trajectory_id: id, status });
                }
                MessageKind::Engage {
                    action: EngageAction::Request,
                    stylus_orientation,
                } => {
                    let ok = !self.is_executing() && !self.sim.state.safety_tripped;
                    out.push(MessageKind::Engage {
                        action: if ok { EngageAction::Ack } else { EngageAction::Deny },
                        stylus_orientation,
                    });
                }
                _ => {}
            }
        }

        if let Mode::Executing { trajectory, started } = &self.mode {
            let t = (now - started) as f64 / self.tick_rate;
            let goal = self.fk(trajectory.goal());
            let id = trajectory.id;
            let target = self.fk(&trajectory.sample(t));
            let duration = trajectory.duration();
            let step = self.sim.step(Some(target));
            self.measured = step.measured;
            let (dp, da) = self.sim.state.ee_pose.distance_to(&goal);
            let finished = if self.sim.state.safety_tripped {
                Some(ExecStatus::Aborted)
            } else if t >= duration && dp <= EXEC_POSITION_TOLERANCE && da <= EXEC_ORIENTATION_TOLERANCE {
                Some(ExecStatus::Completed)
            } else if t > duration + EXEC_SETTLE_TIMEOUT {
                Some(ExecStatus::Aborted)
            } else {
                None
            };
            if let Some(status) = finished {
                self.statuses.insert(id, status);
                self.mode = Mode::Idle;
                out.push(MessageKind::ExecAck { trajectory_id: id, status });
            }
        } else {
            let step = self.sim.step(reference);
            self.measured = step.measured;
        }

        if let Ok(q) = self.arm.solve_ik_with(&self.sim.state.ee_pose, &self.q, &self.ik) {
            self.q = q;
        }
        out.push(MessageKind::Telemetry(self.telemetry()));
        out.into_iter().map(|k| self.stamper.stamp(k, now)).collect()
    }

    pub fn telemetry(&self) -> Telemetry {
        Telemetry {
            ee_pose: self.sim.state.ee_pose,
            wrench: self.measured,
            q: self.q.clone(),
            mission: self.mission,
            gripper: self.sim.state.gripper,
            safety_tripped: self.sim.state.safety_tripped,
        }
    }

    pub fn holding(&self) -> bool {
        self.sim.state.gripper == GripperState::Holding
    }
}
