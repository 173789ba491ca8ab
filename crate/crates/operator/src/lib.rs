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
//! Scripted virtual operator: visually servoed fetch, force-conditioned
//! insertion, tremor and reaction delay.

use std::collections::VecDeque;

use isru_core::geometry::{Pose, Wrench};
use isru_core::sim::GripperState;
use isru_rvp::{MissionPhase, MissionState};
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

mod policy;

pub use policy::{AssemblyPolicy, AssemblyStage, FetchPolicy, FetchStage, PolicyOutput};

/// Upper bound on precision motion speed (m/s).
pub const MAX_SERVO_SPEED: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("invalid operator parameter {field}: {reason}")]
    InvalidParam { field: &'static str, reason: &'static str },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorParams {
    pub uses_force_feedback: bool,
    /// s.
    pub reaction_delay: f64,
    /// m.
    pub tremor_amplitude: f64,
    /// Hz.
    pub tremor_frequency: f64,
    /// m/s.
    pub servo_speed: f64,
    /// m/s per felt N.
    pub compliance_gain: f64,
    /// Standard deviation of target position estimates (m).
    pub perception_noise: f64,
    /// Relative spread of the speed chosen for each attempt.
    pub speed_spread: f64,
    /// Felt upward force that makes the operator back off a blocked insertion (N at the device).
    pub stop_force: f64,
    /// Insertion depth of the peg tip below the slot mouth the operator aims for (m).
    pub insert_depth: f64,
    pub seed: u64,
}

impl Default for OperatorParams {
    fn default() -> Self {
        Self {
            uses_force_feedback: true,
            reaction_delay: 0.25,
            tremor_amplitude: 0.0015,
            tremor_frequency: 9.0,
            servo_speed: 0.02,
            compliance_gain: 0.003,
            perception_noise: 0.004,
            speed_spread: 0.3,
            stop_force: 0.8,
            insert_depth: 0.045,
            seed: 0,
        }
    }
}

impl OperatorParams {
    pub fn validate(&self) -> Result<(), OperatorError> {
        let bad = |field, reason| Err(OperatorError::InvalidParam { field, reason });
        let fields = [
            ("reaction_delay", self.reaction_delay),
            ("tremor_amplitude", self.tremor_amplitude),
            ("tremor_frequency", self.tremor_frequency),
            ("servo_speed", self.servo_speed),
            ("compliance_gain", self.compliance_gain),
            ("perception_noise", self.perception_noise),
            ("speed_spread", self.speed_spread),
            ("stop_force", self.stop_force),
            ("insert_depth", self.insert_depth),
        ];
        for (field, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return bad(field, "must be a non-negative number");
            }
        }
        if self.servo_speed > MAX_SERVO_SPEED {
            return bad("servo_speed", "must not exceed 0.05 m/s");
        }
        if self.speed_spread >= 1.0 {
            return bad("speed_spread", "must be below 1");
        }
        Ok(())
    }
}

/// What the operator sees at the station: delayed telemetry plus the
/// camera view of the current target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Station clock at reception (s).
    pub time: f64,
    /// Reception time minus the robot's send time (s).
    pub age: f64,
    pub ee_pose: Pose,
    pub wrench: Wrench,
    /// Force rendered at the device, device frame (N). Zero without feedback.
    pub felt_force: Vector3<f64>,
    pub mission: MissionState,
    pub gripper: GripperState,
    pub safety_tripped: bool,
}

/// Station-side facts the operator knows without delay.
#[derive(Clone, Debug, PartialEq)]
pub struct TaskContext {
    pub dt: f64,
    pub mission: MissionState,
    /// True pose of the sample (fetch) or slot mouth (insertion), before perception noise.
    pub target: Option<Pose>,
    /// Stylus and end-effector poses captured at engagement.
    pub anchor: Option<(Pose, Pose)>,
    /// Device axes in world for the active camera.
    pub camera: UnitQuaternion<f64>,
    pub engaged: bool,
    /// The station is waiting for the operator to engage.
    pub awaiting_engagement: bool,
    pub capture_radius: f64,
    /// Vector from the grasp frame to the held peg tip, world (m).
    pub tip_offset: Vector3<f64>,
    /// Gripper closing time (s).
    pub closing_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "action")]
pub enum OperatorAction {
    /// Absolute stylus pose in the device frame.
    Stylus { pose: Pose },
    RequestEngage { stylus: Pose },
    CloseGripper,
    /// The operator judges the peg inserted and lets go.
    DeclareInserted,
}

#[derive(Clone, Debug)]
enum Task {
    Idle,
    Fetch(FetchPolicy),
    Assemble(AssemblyPolicy),
}

#[derive(Clone, Debug)]
pub struct Operator {
    params: OperatorParams,
    rng: ChaCha8Rng,
    seen: VecDeque<Observation>,
    perceived: Option<Observation>,
    tremor_phase: [f64; 3],
    time: f64,
    stylus: Pose,
    anchor: Option<(Pose, Pose)>,
    /// Operator's own idea of the commanded grasp-frame position (world).
    command: Vector3<f64>,
    task: Task,
    last_engage_request: Option<f64>,
    first_felt: Option<f64>,
    first_correction: Option<f64>,
}

impl Operator {
    pub fn new(params: OperatorParams) -> Result<Self, OperatorError> {
        params.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let tau = std::f64::consts::TAU;
        let tremor_phase = [rng.random::<f64>() * tau, rng.random::<f64>() * tau, rng.random::<f64>() * tau];
        Ok(Self {
            params,
            rng,
            seen: VecDeque::new(),
            perceived: None,
            tremor_phase,
            time: 0.0,
            stylus: Pose::identity(),
            anchor: None,
            command: Vector3::zeros(),
            task: Task::Idle,
            last_engage_request: None,
            first_felt: None,
            first_correction: None,
        })
    }

    pub fn params(&self) -> &OperatorParams {
        &self.params
    }

    /// Latest observation old enough to have been reacted to.
    pub fn perceived(&self) -> Option<&Observation> {
        self.perceived.as_ref()
    }

    /// Times of the first nonzero felt force and of the first force-driven
    /// correction, in station time.
    pub fn force_reaction(&self) -> (Option<f64>, Option<f64>) {
        (self.first_felt, self.first_correction)
    }

    pub fn fetch_stage(&self) -> Option<FetchStage> {
        match &self.task {
            Task::Fetch(f) => Some(f.stage()),
            _ => None,
        }
    }

    pub fn assembly_stage(&self) -> Option<AssemblyStage> {
        match &self.task {
            Task::Assemble(a) => Some(a.stage()),
            _ => None,
        }
    }

    fn noise(&mut self, dims: usize) -> Vector3<f64> {
        let sigma = self.params.perception_noise;
        if sigma == 0.0 {
            return Vector3::zeros();
        }
        let n = Normal::new(0.0, sigma).expect("finite sigma");
        let mut v = Vector3::zeros();
        for i in 0..dims {
            v[i] = n.sample(&mut self.rng);
        }
        v
    }

    fn speed_factor(&mut self) -> f64 {
        let s = self.params.speed_spread;
        if s == 0.0 {
            1.0
        } else {
            self.rng.random_range(1.0 - s..=1.0)
        }
    }

    fn tremor(&self) -> Vector3<f64> {
        let a = self.params.tremor_amplitude;
        let w = std::f64::consts::TAU * self.params.tremor_frequency;
        Vector3::from_fn(|i, _| a * (w * self.time + self.tremor_phase[i]).sin())
    }

    /// One station tick. `obs` is the telemetry received this tick, if any.
    pub fn tick(&mut self, now: f64, obs: Option<Observation>, ctx: &TaskContext) -> Vec<OperatorAction> {
        self.time = now;
        if let Some(o) = obs {
            if self.first_felt.is_none() && o.felt_force.norm() > 0.0 {
                self.first_felt = Some(o.time);
            }
            self.seen.push_back(o);
        }
        let mut fresh = false;
        while let Some(front) = self.seen.front() {
            if front.time <= now - self.params.reaction_delay + 1e-9 {
                self.perceived = self.seen.pop_front();
                fresh = true;
            } else {
                break;
            }
        }
        let Some(p) = self.perceived.clone() else {
            return Vec::new();
        };
        let phase = match ctx.mission {
            MissionState::Active(ph) => ph,
            _ => return Vec::new(),
        };

        let anchor = ctx.anchor.filter(|_| ctx.engaged);
        let Some((anchor_stylus, anchor_ee)) = anchor else {
            self.anchor = None;
            if !matches!(self.task, Task::Idle) && !ctx.awaiting_engagement {
                self.task = Task::Idle;
            }
            if !ctx.awaiting_engagement {
                return Vec::new();
            }
            if self.last_engage_request.is_some_and(|t| now - t < 3.0) {
                return Vec::new();
            }
            self.last_engage_request = Some(now);
            // high in the device workspace (device y is up)
            let position = Vector3::new(0.0, 0.045, 0.0);
            let orientation = ctx.camera.inverse() * p.ee_pose.orientation;
            self.stylus = Pose::new(position, orientation);
            return vec![OperatorAction::RequestEngage { stylus: self.stylus }];
        };

        if self.anchor.is_none() {
            self.anchor = Some((anchor_stylus, anchor_ee));
            self.command = anchor_ee.position;
            self.last_engage_request = None;
            self.task = match (phase, ctx.target) {
                (MissionPhase::Collection, Some(target)) => {
                    let bias = self.noise(3);
                    let speed = self.speed_factor() * self.params.servo_speed;
                    Task::Fetch(FetchPolicy::new(target.position + bias, speed))
                }
                (MissionPhase::Utilization, Some(target)) => {
                    let bias = self.noise(2);
                    let speed = self.speed_factor() * self.params.servo_speed;
                    Task::Assemble(AssemblyPolicy::new(target.position + bias, speed, self.params.insert_depth))
                }
                _ => Task::Idle,
            };
        }

        let out = match &mut self.task {
            Task::Idle => PolicyOutput::default(),
            Task::Fetch(f) => f.step(&self.params, &p, fresh, &self.command, ctx),
            Task::Assemble(a) => a.step(&self.params, &p, fresh, &self.command, ctx),
        };
        if out.corrected && self.first_correction.is_none() {
            self.first_correction = Some(now);
        }
        if out.redraw {
            let speed = self.speed_factor() * self.params.servo_speed;
            let dims = if matches!(self.task, Task::Fetch(_)) { 3 } else { 2 };
            let bias = self.noise(dims);
            let target = ctx.target.map(|t| t.position);
            match &mut self.task {
                Task::Fetch(f) => {
                    let aim = target.unwrap_or(f.aim()) + bias;
                    f.retry(aim, speed);
                }
                Task::Assemble(a) => {
                    let mouth = target.unwrap_or(a.mouth()) + bias;
                    a.retry(mouth, speed);
                }
                Task::Idle => {}
            }
        }
        self.command += out.increment;

        let device = ctx.camera.inverse() * (self.command - anchor_ee.position);
        let position = anchor_stylus.position + device + self.tremor();
        self.stylus = Pose::new(position, anchor_stylus.orientation);

        let mut actions = vec![OperatorAction::Stylus { pose: self.stylus }];
        if out.close {
            actions.push(OperatorAction::CloseGripper);
        }
        if out.inserted {
            actions.push(OperatorAction::DeclareInserted);
        }
        actions
    }
}
