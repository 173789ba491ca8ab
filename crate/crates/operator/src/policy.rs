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
use isru_core::sim::GripperState;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{Observation, OperatorParams, TaskContext};

/// Observations below the close threshold needed before closing.
const SETTLE_COUNT: u32 = 3;
/// Height gained before a new grasp attempt (m).
const FETCH_RETREAT: f64 = 0.02;
/// Height of the peg tip above the estimated mouth before a new insertion attempt (m).
const INSERT_RETREAT: f64 = 0.015;
/// Tip depth above which a blocked descent counts as not yet inside the hole (m).
const ENTRY_DEPTH: f64 = 0.005;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PolicyOutput {
    /// Change of the commanded grasp-frame position this tick (world, m).
    pub increment: Vector3<f64>,
    pub close: bool,
    pub inserted: bool,
    /// A new target estimate is needed.
    pub redraw: bool,
    /// The increment includes a reaction to felt force.
    pub corrected: bool,
}

fn toward(from: &Vector3<f64>, to: &Vector3<f64>, max_step: f64) -> Vector3<f64> {
    let d = to - from;
    let n = d.norm();
    if n <= max_step {
        d
    } else {
        d * (max_step / n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FetchStage {
    Approach,
    Settle,
    Grasping,
    Retreat,
    Holding,
}

/// Servo the grasp frame onto the estimated sample centre, then close.
#[derive(Clone, Debug)]
pub struct FetchPolicy {
    aim: Vector3<f64>,
    speed: f64,
    stage: FetchStage,
    settled: u32,
    saw_closing: bool,
    waited: f64,
    retreat_to: Vector3<f64>,
    pub attempts: u32,
}

impl FetchPolicy {
    pub fn new(aim: Vector3<f64>, speed: f64) -> Self {
        Self {
            aim,
            speed,
            stage: FetchStage::Approach,
            settled: 0,
            saw_closing: false,
            waited: 0.0,
            retreat_to: aim,
            attempts: 1,
        }
    }

    pub fn stage(&self) -> FetchStage {
        self.stage
    }

    pub fn aim(&self) -> Vector3<f64> {
        self.aim
    }

    pub fn retry(&mut self, aim: Vector3<f64>, speed: f64) {
        self.aim = aim;
        self.speed = speed;
        self.stage = FetchStage::Approach;
        self.attempts += 1;
    }

    pub fn step(
        &mut self,
        _params: &OperatorParams,
        obs: &Observation,
        fresh: bool,
        command: &Vector3<f64>,
        ctx: &TaskContext,
    ) -> PolicyOutput {
        let mut out = PolicyOutput::default();
        let max_step = self.speed * ctx.dt;
        match self.stage {
            FetchStage::Approach => {
                out.increment = toward(command, &self.aim, max_step);
                if (command + out.increment - self.aim).norm() < 1e-9 {
                    self.stage = FetchStage::Settle;
                    self.settled = 0;
                }
            }
            FetchStage::Settle => {
                if fresh {
                    let err = (obs.ee_pose.position - self.aim).norm();
                    self.settled = if err < 0.8 * ctx.capture_radius { self.settled + 1 } else { 0 };
                    if self.settled >= SETTLE_COUNT {
                        out.close = true;
                        self.stage = FetchStage::Grasping;
                        self.saw_closing = false;
                        self.waited = 0.0;
                    }
                }
            }
            FetchStage::Grasping => {
                self.waited += ctx.dt;
                match obs.gripper {
                    GripperState::Holding => self.stage = FetchStage::Holding,
                    GripperState::Closing => self.saw_closing = true,
                    GripperState::Open if self.saw_closing => {
                        self.stage = FetchStage::Retreat;
                        self.retreat_to = command + Vector3::new(0.0, 0.0, FETCH_RETREAT);
                    }
                    // the close command may not have reached the robot yet
                    GripperState::Open if self.waited > 2.0 * obs.age + 5.0 * ctx.closing_time + 1.0 => {
                        out.close = true;
                        self.waited = 0.0;
                    }
                    GripperState::Open => {}
                }
            }
            FetchStage::Retreat => {
                out.increment = toward(command, &self.retreat_to, max_step);
                if (command + out.increment - self.retreat_to).norm() < 1e-9 {
                    out.redraw = true;
                }
            }
            FetchStage::Holding => {}
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssemblyStage {
    Align,
    Descend,
    Backoff,
    Released,
}

/// Align the peg over the estimated mouth, descend, comply with felt
/// lateral force, back off when blocked.
#[derive(Clone, Debug)]
pub struct AssemblyPolicy {
    mouth: Vector3<f64>,
    speed: f64,
    depth: f64,
    stage: AssemblyStage,
    backoff_to: Vector3<f64>,
    pub attempts: u32,
}

impl AssemblyPolicy {
    pub fn new(mouth: Vector3<f64>, speed: f64, depth: f64) -> Self {
        Self {
            mouth,
            speed,
            depth,
            stage: AssemblyStage::Align,
            backoff_to: mouth,
            attempts: 1,
        }
    }

    pub fn stage(&self) -> AssemblyStage {
        self.stage
    }

    pub fn mouth(&self) -> Vector3<f64> {
        self.mouth
    }

    pub fn retry(&mut self, mouth: Vector3<f64>, speed: f64) {
        self.mouth = mouth;
        self.speed = speed;
        self.stage = AssemblyStage::Align;
        self.attempts += 1;
    }

    pub fn step(
        &mut self,
        params: &OperatorParams,
        obs: &Observation,
        _fresh: bool,
        command: &Vector3<f64>,
        ctx: &TaskContext,
    ) -> PolicyOutput {
        let mut out = PolicyOutput::default();
        let max_step = self.speed * ctx.dt;
        let tip_cmd = command + ctx.tip_offset;
        let felt = ctx.camera * obs.felt_force;
        match self.stage {
            AssemblyStage::Align => {
                let goal = Vector3::new(self.mouth.x, self.mouth.y, tip_cmd.z);
                out.increment = toward(&tip_cmd, &goal, max_step);
                if (tip_cmd + out.increment - goal).norm() < 1e-9 {
                    self.stage = AssemblyStage::Descend;
                }
            }
            AssemblyStage::Descend => {
                let tip_seen = obs.ee_pose.position + ctx.tip_offset;
                let depth_seen = self.mouth.z - tip_seen.z;
                let lateral = Vector3::new(felt.x, felt.y, 0.0);
                if params.uses_force_feedback && felt.z > params.stop_force && depth_seen < ENTRY_DEPTH {
                    self.stage = AssemblyStage::Backoff;
                    self.backoff_to = Vector3::new(tip_cmd.x, tip_cmd.y, self.mouth.z + INSERT_RETREAT) - ctx.tip_offset;
                    out.corrected = true;
                    return out;
                }
                if depth_seen >= self.depth {
                    if !params.uses_force_feedback || lateral.norm() <= params.stop_force {
                        out.inserted = true;
                        self.stage = AssemblyStage::Released;
                    }
                    return out;
                }
                out.increment = Vector3::new(0.0, 0.0, -max_step);
                if params.uses_force_feedback && lateral.norm() > 0.0 {
                    out.increment += lateral * (params.compliance_gain * ctx.dt);
                    out.corrected = true;
                }
            }
            AssemblyStage::Backoff => {
                out.increment = toward(command, &self.backoff_to, max_step);
                if (command + out.increment - self.backoff_to).norm() < 1e-9 {
                    out.redraw = true;
                }
            }
            AssemblyStage::Released => {}
        }
        out
    }
}
