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
//! A session wires one simulated robot, a channel pair, the haptic
//! pipeline, the planner and the mission machine onto a shared tick clock.

use std::f64::consts::PI;

use isru_core::geometry::{orientation_error, Pose};
use isru_core::kinematics::{ArmModel, JointConfig};
use isru_core::sim::{EnvModel, GripperState, SimConfig, Simulator};
use isru_hcs::{Camera, Hcs, HcsError, StylusState};
use isru_link::channel::Stamper;
use isru_link::{
    AckKey, CaptureRecord, ChannelConfig, DelayChannel, Direction, EngageAction, ExecStatus, GripperCommand, LinkError,
    LinkMessage, MessageKind, ReliableSender, Telemetry,
};
use isru_operator::{Observation, TaskContext};
use isru_rvp::trajectory::{time_parameterize, DENSIFY_STEP};
use isru_rvp::{
    attach_payload, plan_p2p, rehearse, snapshot_scene, Mission, MissionEvent, MissionPhase, MissionState, PlannerConfig,
    RehearsalReport, Trajectory, WorldModel,
};
use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::protocol::{ExecView, Snapshot, StationView};
use crate::robot::RobotNode;
use crate::StationError;

/// Grasp frame above the sample centre at the end of the fetch plan (m).
pub const FETCH_APPROACH_HEIGHT: f64 = 0.08;
/// Peg tip above the slot mouth at the end of the insertion plan (m).
pub const INSERT_APPROACH_HEIGHT: f64 = 0.04;
/// Automatic lift after a grasp (m).
pub const RETRACT_LIFT: f64 = 0.15;
/// Sends of an acknowledged request before giving up.
pub const MAX_LINK_ATTEMPTS: u32 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalName {
    Fetch,
    Insert,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecPurpose {
    Plan,
    Retract,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SessionEvent {
    Mission { event: MissionEvent, state: MissionState },
    EngageRequested,
    Engaged,
    EngageRejected { reason: String },
    Disengaged,
    Planned { trajectory_id: u64, waypoints: usize, duration_s: f64 },
    PlanFailed { reason: String },
    Rehearsed { collision_free: bool, min_clearance: f64, stale_world: bool },
    Uplinked { trajectory_id: u64, purpose: ExecPurpose },
    Exec { trajectory_id: u64, status: ExecStatus },
    Gripper { command: GripperCommand },
    SafetyTrip,
    LinkTimeout { key: AckKey },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub tick: u64,
    #[serde(flatten)]
    pub event: SessionEvent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExecTracker {
    pub trajectory_id: u64,
    pub purpose: ExecPurpose,
    pub sent_tick: u64,
    pub statuses: Vec<(u64, ExecStatus)>,
}

impl ExecTracker {
    pub fn finished(&self) -> Option<ExecStatus> {
        self.statuses
            .iter()
            .map(|(_, s)| *s)
            .find(|s| !matches!(s, ExecStatus::Accepted))
    }
}

pub struct Session {
    pub id: u64,
    pub config: ScenarioConfig,
    seed: u64,
    arm: ArmModel,
    env: EnvModel,
    tick: u64,
    robot: RobotNode,
    up: DelayChannel,
    down: DelayChannel,
    stamper: Stamper,
    reliable: ReliableSender,
    hcs: Hcs,
    stylus: StylusState,
    workspace_clamped: bool,
    mission: Mission,
    telemetry: Option<Telemetry>,
    telemetry_seq: Option<u64>,
    telemetry_sent: f64,
    observation: Option<Observation>,
    plan: Option<Trajectory>,
    rehearsal: Option<RehearsalReport>,
    exec: Option<ExecTracker>,
    plan_completed: bool,
    setpoint: Pose,
    engage_pending: bool,
    release_sent: bool,
    next_trajectory_id: u64,
    log: Vec<LogEntry>,
    capture: Option<Vec<CaptureRecord>>,
    tripped: bool,
    fetch_success: bool,
    grasp_offset: Option<Pose>,
}

fn down_orientation(yaw: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw) * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI)
}

impl Session {
    /// Builds a session in PreCollection with the arm at home.
    pub fn new(config: &ScenarioConfig, seed: u64) -> Result<Self, StationError> {
        config.validate()?;
        let arm = config.load_arm()?;
        let env = config.load_env()?;
        let dt = 1.0 / config.tick_rate_hz;
        let home = arm.home.clone();
        let ee = arm.forward_kinematics(&home).map_err(|e| StationError::BadConfig {
            path: "arm_path".into(),
            reason: e.to_string(),
        })?;
        let sim_cfg = SimConfig {
            dt,
            ..SimConfig::default()
        };
        let sim = Simulator::new(sim_cfg, env.clone(), ee).map_err(|e| StationError::BadConfig {
            path: "sim".into(),
            reason: e.to_string(),
        })?;
        let channel = |salt: u64| ChannelConfig {
            delay_each_way: config.delay_s,
            jitter: config.jitter_s,
            loss_probability: config.loss_probability,
            tick_rate: config.tick_rate_hz,
            seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(salt),
        };
        let up = DelayChannel::new(channel(1)).map_err(link_config)?;
        let down = DelayChannel::new(channel(2)).map_err(link_config)?;
        let reliable = ReliableSender::for_channel(up.delay_ticks(), up.config().jitter_ticks(), MAX_LINK_ATTEMPTS);
        let mut mapping = config.mapping.clone();
        for (name, slot) in [("rear", &mut mapping.rear_camera), ("front", &mut mapping.front_camera)] {
            if let Some(cam) = env.camera(name) {
                *slot = cam.pose;
            }
        }
        let hcs = Hcs::new(mapping, dt).map_err(|e| StationError::BadConfig {
            path: "mapping".into(),
            reason: e.to_string(),
        })?;
        Ok(Self {
            id: seed,
            config: config.clone(),
            seed,
            robot: RobotNode::new(sim, arm.clone(), home, config.tick_rate_hz),
            arm,
            env,
            tick: 0,
            up,
            down,
            stamper: Stamper::new(config.tick_rate_hz),
            reliable,
            hcs,
            stylus: StylusState::at(Pose::identity()),
            workspace_clamped: false,
            mission: Mission::new(),
            telemetry: None,
            telemetry_seq: None,
            telemetry_sent: 0.0,
            observation: None,
            plan: None,
            rehearsal: None,
            exec: None,
            plan_completed: false,
            setpoint: ee,
            engage_pending: false,
            release_sent: false,
            next_trajectory_id: 1,
            log: Vec::new(),
            capture: None,
            tripped: false,
            fetch_success: false,
            grasp_offset: None,
        })
    }

    /// Keeps every frame sent on either channel.
    pub fn enable_capture(&mut self) {
        self.capture = Some(Vec::new());
    }

    pub fn take_capture(&mut self) -> Vec<CaptureRecord> {
        self.capture.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.config.tick_rate_hz
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt()
    }

    pub fn mission(&self) -> MissionState {
        self.mission.state()
    }

    pub fn mission_history(&self) -> &[MissionEvent] {
        self.mission.history()
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn arm(&self) -> &ArmModel {
        &self.arm
    }

    pub fn env(&self) -> &EnvModel {
        &self.env
    }

    pub fn robot(&self) -> &RobotNode {
        &self.robot
    }

    pub fn uplink(&self) -> &DelayChannel {
        &self.up
    }

    pub fn downlink(&self) -> &DelayChannel {
        &self.down
    }

    pub fn hcs(&self) -> &Hcs {
        &self.hcs
    }

    pub fn stylus(&self) -> &StylusState {
        &self.stylus
    }

    pub fn workspace_clamped(&self) -> bool {
        self.workspace_clamped
    }

    pub fn latest_telemetry(&self) -> Option<&Telemetry> {
        self.telemetry.as_ref()
    }

    pub fn plan(&self) -> Option<&Trajectory> {
        self.plan.as_ref()
    }

    pub fn rehearsal(&self) -> Option<&RehearsalReport> {
        self.rehearsal.as_ref()
    }

    pub fn execution(&self) -> Option<&ExecTracker> {
        self.exec.as_ref()
    }

    pub fn setpoint(&self) -> &Pose {
        &self.setpoint
    }

    pub fn fetch_success(&self) -> bool {
        self.fetch_success
    }

    pub fn safety_tripped(&self) -> bool {
        self.tripped
    }

    pub fn is_engaged(&self) -> bool {
        self.hcs.is_engaged()
    }

    pub fn is_finished(&self) -> bool {
        !matches!(self.mission.state(), MissionState::Active(_))
    }

    fn phase(&self) -> Option<MissionPhase> {
        self.mission.phase()
    }

    fn executing(&self) -> bool {
        self.exec.as_ref().is_some_and(|e| e.finished().is_none())
    }

    /// The plan for this phase has run to completion.
    pub fn plan_completed(&self) -> bool {
        self.plan_completed
    }

    /// The station is ready for the operator to engage.
    pub fn awaiting_engagement(&self) -> bool {
        if self.hcs.is_engaged() || self.engage_pending || self.executing() {
            return false;
        }
        match self.phase() {
            Some(MissionPhase::PreCollection | MissionPhase::PreUtilization) => self.plan_completed,
            Some(MissionPhase::Collection | MissionPhase::Utilization) => true,
            _ => false,
        }
    }

    /// Visible target of the current teleoperation phase.
    pub fn target(&self) -> Option<Pose> {
        match self.phase()? {
            MissionPhase::PreCollection | MissionPhase::Collection => Some(self.env.sample.pose),
            MissionPhase::PreUtilization | MissionPhase::Utilization => Some(self.env.slot.pose),
            _ => None,
        }
    }

    /// Observation built from telemetry received this tick.
    pub fn take_observation(&mut self) -> Option<Observation> {
        self.observation.take()
    }

    pub fn operator_context(&self) -> TaskContext {
        let anchor = match self.hcs.engagement() {
            isru_hcs::EngagementState::Engaged {
                anchor_stylus,
                anchor_ee,
            } => Some((*anchor_stylus, *anchor_ee)),
            isru_hcs::EngagementState::Disengaged => None,
        };
        TaskContext {
            dt: self.dt(),
            mission: self.mission.state(),
            target: self.target(),
            anchor,
            camera: self.hcs.config.camera_rotation(),
            engaged: self.hcs.is_engaged(),
            awaiting_engagement: self.awaiting_engagement(),
            capture_radius: self.robot.sim.config.gripper.capture_radius,
            tip_offset: self.tip_offset(),
            closing_time: self.robot.sim.config.gripper.closing_time,
        }
    }

    /// Sample bottom relative to the grasp frame origin, in world axes.
    pub fn tip_offset(&self) -> Vector3<f64> {
        let bottom = Vector3::new(0.0, 0.0, -self.env.sample.half_length());
        match (&self.grasp_offset, &self.telemetry) {
            (Some(attach), Some(t)) => t.ee_pose.orientation * attach.transform_point(&bottom),
            _ => bottom,
        }
    }

    fn record(&mut self, direction: Direction, msg: &LinkMessage) {
        let tick = self.tick;
        if let Some(c) = self.capture.as_mut() {
            c.push(CaptureRecord {
                tick,
                direction,
                message: msg.clone(),
            });
        }
    }

    fn send(&mut self, kind: MessageKind) {
        let msg = self.stamper.stamp(kind, self.tick);
        self.record(Direction::Uplink, &msg);
        self.up.push(msg, self.tick);
    }

    fn note(&mut self, event: SessionEvent) {
        self.log.push(LogEntry { tick: self.tick, event });
    }

    fn apply(&mut self, event: MissionEvent) -> bool {
        let before = self.mission.state();
        match self.mission.apply(event) {
            Ok(state) => {
                if state != before {
                    self.plan_completed = false;
                    self.robot.set_mission(state);
                }
                self.note(SessionEvent::Mission { event, state });
                true
            }
            Err(_) => false,
        }
    }

    /// Station half of a tick: receive from the robot and update the mission.
    pub fn begin_tick(&mut self) {
        let arrived = self.down.poll(self.tick);
        let mut fresh = false;
        for msg in arrived {
            match &msg.kind {
                MessageKind::Telemetry(t) => {
                    if self.telemetry_seq.is_none_or(|s| msg.seq > s) {
                        self.telemetry = Some(t.clone());
                        self.telemetry_seq = Some(msg.seq);
                        self.telemetry_sent = msg.timestamp;
                        fresh = true;
                    }
                }
                MessageKind::ExecAck { trajectory_id, status } => {
                    self.reliable.acknowledge(AckKey::Trajectory(*trajectory_id));
                    self.on_exec_status(*trajectory_id, *status);
                }
                MessageKind::Engage { action, .. } => {
                    self.reliable.acknowledge(AckKey::Engage);
                    self.on_engage_reply(*action);
                }
                _ => {}
            }
        }
        if fresh {
            self.on_telemetry();
        }
    }

    fn on_telemetry(&mut self) {
        let t = self.telemetry.clone().expect("fresh telemetry");
        if t.safety_tripped && !self.tripped {
            self.tripped = true;
            self.note(SessionEvent::SafetyTrip);
            if self.hcs.is_engaged() {
                let _ = self.disengage();
            }
            self.apply(MissionEvent::Abort);
        }
        match self.phase() {
            Some(MissionPhase::Collection) if t.gripper == GripperState::Holding => {
                if self.apply(MissionEvent::GraspOk) {
                    let rel = t.ee_pose.inverse().compose(&self.env.sample.pose);
                    self.grasp_offset = Some(Pose::new(Vector3::new(0.0, 0.0, rel.position.z), rel.orientation));
                    self.start_retract();
                }
            }
            Some(MissionPhase::PostUtilization) if self.release_sent && t.gripper == GripperState::Open => {
                self.apply(MissionEvent::ReleaseOk);
            }
            _ => {}
        }
        let felt = self.felt_force();
        self.observation = Some(Observation {
            time: self.time(),
            age: self.time() - self.telemetry_sent,
            ee_pose: t.ee_pose,
            wrench: t.wrench,
            felt_force: felt,
            mission: self.mission.state(),
            gripper: t.gripper,
            safety_tripped: t.safety_tripped,
        });
    }

    fn on_exec_status(&mut self, id: u64, status: ExecStatus) {
        let tick = self.tick;
        let Some(exec) = self.exec.as_mut().filter(|e| e.trajectory_id == id) else {
            return;
        };
        if exec.statuses.iter().any(|(_, s)| *s == status) {
            return;
        }
        if exec.finished().is_some() {
            return;
        }
        exec.statuses.push((tick, status));
        let purpose = exec.purpose;
        self.note(SessionEvent::Exec { trajectory_id: id, status });
        match status {
            ExecStatus::Accepted => {}
            ExecStatus::Completed => {
                if let Some(plan) = &self.plan {
                    if plan.id == id {
                        if let Ok(goal) = self.arm.forward_kinematics(plan.goal()) {
                            self.setpoint = goal;
                        }
                    }
                }
                match (purpose, self.phase()) {
                    (ExecPurpose::Plan, Some(MissionPhase::PreCollection)) => {
                        self.plan_completed = true;
                        self.apply(MissionEvent::PlanDone);
                    }
                    (ExecPurpose::Plan, Some(MissionPhase::PreUtilization)) => {
                        self.plan_completed = true;
                        self.apply(MissionEvent::Plan2Done);
                    }
                    (ExecPurpose::Retract, Some(MissionPhase::PostCollection)) => {
                        if self.robot_reports_holding() {
                            self.fetch_success = true;
                            self.apply(MissionEvent::RetractDone);
                        } else {
                            self.apply(MissionEvent::Abort);
                        }
                    }
                    _ => {}
                }
            }
            ExecStatus::Aborted => {
                self.apply(MissionEvent::Abort);
            }
            ExecStatus::Rejected => {
                if purpose == ExecPurpose::Retract {
                    self.apply(MissionEvent::Abort);
                }
            }
        }
    }

    fn robot_reports_holding(&self) -> bool {
        self.telemetry.as_ref().is_some_and(|t| t.gripper == GripperState::Holding)
    }

    fn on_engage_reply(&mut self, action: EngageAction) {
        if !self.engage_pending {
            return;
        }
        self.engage_pending = false;
        match action {
            EngageAction::Ack => match self.hcs.engage(&self.stylus, &self.setpoint) {
                Ok(true) => {
                    self.note(SessionEvent::Engaged);
                    if !self.apply(MissionEvent::Engaged) {
                        let _ = self.hcs.disengage();
                        self.note(SessionEvent::EngageRejected {
                            reason: "engagement not allowed in this phase".into(),
                        });
                    }
                }
                Ok(false) => self.note(SessionEvent::EngageRejected {
                    reason: "stylus and end-effector orientations differ".into(),
                }),
                Err(e) => self.note(SessionEvent::EngageRejected { reason: e.to_string() }),
            },
            _ => self.note(SessionEvent::EngageRejected {
                reason: "robot denied engagement".into(),
            }),
        }
    }

    /// Robot half of a tick: stream the reference, resend pending requests,
    /// deliver to the robot and advance the simulation.
    pub fn end_tick(&mut self) {
        match self.reliable.due(self.tick) {
            Ok(resend) => {
                for kind in resend {
                    self.send(kind);
                }
            }
            Err(LinkError::Timeout(key)) => {
                self.note(SessionEvent::LinkTimeout { key });
                match key {
                    AckKey::Engage => self.engage_pending = false,
                    AckKey::Trajectory(_) => {
                        self.exec = None;
                        self.apply(MissionEvent::Abort);
                    }
                }
            }
            Err(_) => {}
        }
        let teleop = self.mission.is_teleop_phase();
        let out = self.hcs.tick(&self.stylus);
        self.workspace_clamped = out.workspace_clamped;
        if let Some(reference) = out.reference.filter(|_| teleop) {
            self.setpoint = reference;
            self.send(MessageKind::PoseRef { pose: reference });
        }

        let inbox = self.up.poll(self.tick);
        let replies = self.robot.tick(self.tick, inbox);
        for msg in replies {
            self.record(Direction::Downlink, &msg);
            self.down.push(msg, self.tick);
        }
        self.tick += 1;
    }

    pub fn step(&mut self) {
        self.begin_tick();
        self.end_tick();
    }

    // ---- controller verbs ----

    pub fn set_stylus(&mut self, stylus: StylusState) {
        self.stylus = stylus;
    }

    /// Moves the stylus by `delta`: translation added, rotation applied in the device frame.
    pub fn nudge_stylus(&mut self, delta: &Pose) {
        let p = &mut self.stylus.pose;
        p.position += delta.position;
        p.orientation = isru_core::geometry::canonical(delta.orientation * p.orientation);
    }

    /// Sets the stylus orientation to match the end effector through the active camera.
    pub fn align_stylus(&mut self) {
        let ee = self.telemetry.as_ref().map_or(self.setpoint, |t| t.ee_pose);
        self.stylus.pose.orientation = self.hcs.config.camera_rotation().inverse() * ee.orientation;
    }

    pub fn set_camera(&mut self, camera: Camera) -> Result<(), StationError> {
        if self.hcs.is_engaged() {
            return Err(StationError::NotAllowed("disengage before switching cameras".into()));
        }
        self.hcs.config.active_camera = camera;
        Ok(())
    }

    pub fn request_engage(&mut self) -> Result<(), StationError> {
        if self.hcs.is_engaged() {
            return Err(StationError::Hcs(HcsError::AlreadyEngaged));
        }
        if self.is_finished() {
            return Err(StationError::NotAllowed("mission is over".into()));
        }
        if self.executing() {
            return Err(StationError::NotAllowed("a trajectory is executing".into()));
        }
        if self.engage_pending {
            return Ok(());
        }
        let kind = MessageKind::Engage {
            action: EngageAction::Request,
            stylus_orientation: self.stylus.pose.orientation,
        };
        self.reliable.track(AckKey::Engage, kind.clone(), self.tick);
        self.send(kind);
        self.engage_pending = true;
        self.note(SessionEvent::EngageRequested);
        Ok(())
    }

    pub fn disengage(&mut self) -> Result<(), StationError> {
        self.hcs.disengage()?;
        self.note(SessionEvent::Disengaged);
        Ok(())
    }

    /// Collision world as currently known: the sample is an obstacle until grasped.
    pub fn world(&self) -> WorldModel {
        let on_ground = matches!(self.phase(), Some(MissionPhase::PreCollection | MissionPhase::Collection));
        let sample = self.env.sample.pose;
        WorldModel::from_env(&self.env, on_ground.then_some(&sample))
    }

    /// Arm model with the held sample attached when applicable.
    pub fn planning_arm(&self) -> ArmModel {
        let holding = matches!(
            self.mission.state(),
            MissionState::Active(
                MissionPhase::PostCollection
                    | MissionPhase::PreUtilization
                    | MissionPhase::Utilization
                    | MissionPhase::PostUtilization
            )
        );
        if holding {
            let attach = self.grasp_offset.unwrap_or_else(Pose::identity);
            attach_payload(&self.arm, &attach, &self.env.sample.half_extents)
        } else {
            self.arm.clone()
        }
    }

    pub fn current_q(&self) -> JointConfig {
        self.telemetry
            .as_ref()
            .map_or_else(|| self.robot.q().clone(), |t| t.q.clone())
    }

    pub fn goal_pose(&self, goal: GoalName) -> Pose {
        match goal {
            GoalName::Fetch => {
                let s = self.env.sample.pose;
                let (_, _, yaw) = s.orientation.euler_angles();
                Pose::new(s.position + Vector3::new(0.0, 0.0, FETCH_APPROACH_HEIGHT), down_orientation(yaw))
            }
            GoalName::Insert => {
                let m = self.env.slot.pose;
                let (_, _, yaw) = m.orientation.euler_angles();
                let lift = INSERT_APPROACH_HEIGHT + self.env.sample.half_length();
                Pose::new(m.position + m.transform_vector(&Vector3::new(0.0, 0.0, lift)), down_orientation(yaw))
            }
        }
    }

    fn take_trajectory_id(&mut self) -> u64 {
        let id = self.seed.wrapping_mul(1000).wrapping_add(self.next_trajectory_id);
        self.next_trajectory_id += 1;
        id
    }

    pub fn request_plan(&mut self, goal: GoalName) -> Result<&Trajectory, StationError> {
        let allowed = matches!(
            (goal, self.phase()),
            (GoalName::Fetch, Some(MissionPhase::PreCollection)) | (GoalName::Insert, Some(MissionPhase::PreUtilization))
        );
        if !allowed {
            return Err(StationError::NotAllowed(format!(
                "goal {goal:?} cannot be planned in state {:?}",
                self.mission.state()
            )));
        }
        if self.executing() {
            return Err(StationError::NotAllowed("a trajectory is executing".into()));
        }
        let id = self.take_trajectory_id();
        let cfg = PlannerConfig {
            seed: self.seed ^ id.rotate_left(17),
            trajectory_id: id,
            ..PlannerConfig::default()
        };
        let arm = self.planning_arm();
        let world = self.world();
        let goal_pose = self.goal_pose(goal);
        match plan_p2p(&arm, &world, &self.current_q(), &goal_pose, &cfg) {
            Ok(traj) => {
                self.note(SessionEvent::Planned {
                    trajectory_id: traj.id,
                    waypoints: traj.waypoints.len(),
                    duration_s: traj.duration(),
                });
                self.plan = Some(traj);
                self.rehearsal = None;
                Ok(self.plan.as_ref().expect("just stored"))
            }
            Err(e) => {
                self.note(SessionEvent::PlanFailed { reason: e.to_string() });
                Err(StationError::Plan(e))
            }
        }
    }

    pub fn request_rehearse(&mut self) -> Result<&RehearsalReport, StationError> {
        let plan = self
            .plan
            .as_ref()
            .ok_or_else(|| StationError::NotAllowed("nothing planned".into()))?;
        let report = rehearse(plan, &self.planning_arm(), &self.world());
        self.note(SessionEvent::Rehearsed {
            collision_free: report.collision_free,
            min_clearance: report.min_clearance,
            stale_world: report.stale_world,
        });
        self.rehearsal = Some(report);
        Ok(self.rehearsal.as_ref().expect("just stored"))
    }

    fn rehearsal_passed(&self) -> bool {
        self.rehearsal
            .as_ref()
            .is_some_and(|r| r.collision_free && !r.stale_world && r.limit_violations.is_empty())
    }

    /// Uplinks the rehearsed plan.
    pub fn request_execute(&mut self) -> Result<u64, StationError> {
        if !self.phase().is_some_and(|p| p.allows_autonomy()) {
            return Err(StationError::NotAllowed(format!(
                "autonomous motion is not allowed in state {:?}",
                self.mission.state()
            )));
        }
        if self.executing() {
            return Err(StationError::NotAllowed("a trajectory is executing".into()));
        }
        if !self.rehearsal_passed() {
            return Err(StationError::NotAllowed("the plan has not passed rehearsal".into()));
        }
        let traj = self.plan.clone().expect("rehearsed plan exists");
        Ok(self.send_trajectory(traj, ExecPurpose::Plan))
    }

    fn send_trajectory(&mut self, trajectory: Trajectory, purpose: ExecPurpose) -> u64 {
        if self.hcs.is_engaged() {
            let _ = self.disengage();
        }
        let id = trajectory.id;
        let kind = MessageKind::TrajectoryUplink { trajectory };
        self.reliable.track(AckKey::Trajectory(id), kind.clone(), self.tick);
        self.send(kind);
        self.exec = Some(ExecTracker {
            trajectory_id: id,
            purpose,
            sent_tick: self.tick,
            statuses: Vec::new(),
        });
        self.note(SessionEvent::Uplinked { trajectory_id: id, purpose });
        id
    }

    fn start_retract(&mut self) {
        if self.hcs.is_engaged() {
            let _ = self.disengage();
        }
        let q0 = self.current_q();
        let arm = self.arm.clone();
        let world = self.world();
        let Some(t) = self.telemetry.as_ref() else {
            self.apply(MissionEvent::Abort);
            return;
        };
        let lifted = Pose::new(t.ee_pose.position + Vector3::new(0.0, 0.0, RETRACT_LIFT), t.ee_pose.orientation);
        let id = self.take_trajectory_id();
        let straight = arm.solve_ik(&lifted, &q0).ok().map(|q1| {
            let cfg = PlannerConfig::default();
            Trajectory {
                id,
                planner: "retract".into(),
                world_hash: world.hash(),
                waypoints: time_parameterize(&[q0.clone(), q1], cfg.max_velocity, cfg.max_acceleration, DENSIFY_STEP),
            }
        });
        let traj = match straight.filter(|tr| rehearse(tr, &arm, &world).collision_free) {
            Some(tr) => Some(tr),
            None => {
                let cfg = PlannerConfig {
                    seed: self.seed ^ id,
                    trajectory_id: id,
                    ..PlannerConfig::default()
                };
                plan_p2p(&arm, &world, &q0, &lifted, &cfg).ok()
            }
        };
        match traj {
            Some(tr) => {
                self.note(SessionEvent::Planned {
                    trajectory_id: tr.id,
                    waypoints: tr.waypoints.len(),
                    duration_s: tr.duration(),
                });
                self.plan = Some(tr.clone());
                self.send_trajectory(tr, ExecPurpose::Retract);
            }
            None => {
                self.note(SessionEvent::PlanFailed {
                    reason: "no collision-free retract".into(),
                });
                self.apply(MissionEvent::Abort);
            }
        }
    }

    pub fn gripper(&mut self, command: GripperCommand) -> Result<(), StationError> {
        if !self.mission.is_teleop_phase() {
            return Err(StationError::NotAllowed("gripper commands need a teleoperation phase".into()));
        }
        self.send(MessageKind::GripperCmd { command });
        self.note(SessionEvent::Gripper { command });
        Ok(())
    }

    /// Ends the insertion: the gripper is opened and the mission completes
    /// once the robot reports it open.
    pub fn declare_inserted(&mut self) -> Result<(), StationError> {
        if self.phase() != Some(MissionPhase::Utilization) {
            return Err(StationError::NotAllowed("not inserting".into()));
        }
        self.apply(MissionEvent::InsertOk);
        if self.hcs.is_engaged() {
            let _ = self.disengage();
        }
        self.send(MessageKind::GripperCmd {
            command: GripperCommand::Open,
        });
        self.note(SessionEvent::Gripper {
            command: GripperCommand::Open,
        });
        self.release_sent = true;
        Ok(())
    }

    /// Abandons the mission.
    pub fn abort(&mut self) {
        if self.hcs.is_engaged() {
            let _ = self.disengage();
        }
        self.apply(MissionEvent::Abort);
    }

    /// Scene as known at the station: robot state from the newest
    /// telemetry, a held sample placed by the grasp estimate.
    pub fn snapshot(&self) -> Snapshot {
        let mut state = self.robot.sim.state.clone();
        let mut q = self.robot.q().clone();
        let mut wrench = self.robot.measured();
        if let Some(t) = &self.telemetry {
            state.clock = self.telemetry_sent;
            state.ee_pose = t.ee_pose;
            state.gripper = t.gripper;
            state.safety_tripped = t.safety_tripped;
            q = t.q.clone();
            wrench = t.wrench;
            if t.gripper == GripperState::Holding {
                if let Some(attach) = self.grasp_offset {
                    state.grasped_sample = Some(attach);
                }
            }
        }
        let scene = snapshot_scene(
            &state,
            &wrench,
            &self.arm,
            &q,
            &self.world(),
            self.mission.state(),
            self.plan.as_ref(),
        )
        .expect("telemetry joints match the arm");
        let cam = self.hcs.config.camera_rotation();
        let station = StationView {
            tick: self.tick,
            engaged: self.hcs.is_engaged(),
            awaiting_engagement: self.awaiting_engagement(),
            orientation_error: orientation_error(&(cam * self.stylus.pose.orientation), &state.ee_pose.orientation),
            camera: self.hcs.config.active_camera,
            camera_rotation: cam,
            stylus: self.stylus.pose,
            setpoint: self.setpoint,
            felt_force: self.felt_force(),
            workspace_clamped: self.workspace_clamped,
            telemetry_age: self.telemetry.as_ref().map(|_| self.time() - self.telemetry_sent),
            plan_id: self.plan.as_ref().map(|p| p.id),
            rehearsal: self.rehearsal.clone(),
            execution: self.exec.as_ref().map(|e| ExecView {
                trajectory_id: e.trajectory_id,
                status: e.statuses.last().map(|(_, s)| *s),
            }),
            plan_completed: self.plan_completed,
        };
        Snapshot { scene, station }
    }

    /// Force currently rendered on the device.
    pub fn felt_force(&self) -> Vector3<f64> {
        match &self.telemetry {
            Some(t) if self.config.force_feedback => {
                self.hcs.device_force(&t.wrench, t.gripper == GripperState::Holding)
            }
            _ => Vector3::zeros(),
        }
    }

    /// Ground truth: the sample sits in the slot with the fingers open.
    pub fn assembled(&self) -> bool {
        isru_core::sim::is_assembled(&self.env, &self.robot.sim.state)
    }
}

fn link_config(e: LinkError) -> StationError {
    StationError::BadConfig {
        path: "channel".into(),
        reason: e.to_string(),
    }
}
