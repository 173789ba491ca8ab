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
//! Scripted trials: the operator model drives a session through the whole
//! mission and the outcome is reduced to a [`TrialRecord`].

use isru_link::GripperCommand;
use isru_operator::{Operator, OperatorAction};
use isru_rvp::{MissionPhase, MissionState};
use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::session::{GoalName, Session};
use crate::StationError;

/// Planning attempts per autonomous phase before the trial is abandoned.
pub const PLAN_ATTEMPTS: u32 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scenario: String,
    pub index: u64,
    pub seed: u64,
    pub force_feedback: bool,
    pub delay_s: f64,
    pub fetching_success: bool,
    pub assembly_success: bool,
    pub safety_tripped: bool,
    /// Largest measured force magnitude over the trial (N).
    pub peak_force: f64,
    /// Largest measured torque magnitude over the trial (N·m).
    pub peak_torque: f64,
    pub duration_s: f64,
    pub final_state: MissionState,
    pub engagements: u32,
    /// Gripper close commands sent.
    pub grasp_attempts: u32,
    /// Why the trial ended short of completion, if it did.
    pub failure: Option<String>,
}

impl TrialRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("records always serialize")
    }
}

/// Seed of trial `index` in a scenario.
pub fn trial_seed(config: &ScenarioConfig, index: u64) -> u64 {
    config.base_seed.wrapping_add(index)
}

/// Runs trial `index` of `config` to completion.
pub fn run_trial(config: &ScenarioConfig, index: u64) -> Result<TrialRecord, StationError> {
    let seed = trial_seed(config, index);
    let mut session = Session::new(config, seed)?;
    let operator = Operator::new(config.operator_for(seed)).map_err(|e| StationError::BadConfig {
        path: "operator".into(),
        reason: e.to_string(),
    })?;
    let mut operator = operator;
    Ok(drive(&mut session, &mut operator, index))
}

/// Runs an already built session with `operator` as its controller.
pub fn drive(session: &mut Session, operator: &mut Operator, index: u64) -> TrialRecord {
    let config = session.config.clone();
    let dt = session.dt();
    let limit = |s: f64| (s / dt).round() as u64;
    let mut plan_attempts = 0u32;
    let mut planned_phase = None;
    let mut last_phase = session.mission();
    let mut peak_force = 0.0f64;
    let mut peak_torque = 0.0f64;
    let mut engagements = 0u32;
    let mut grasp_attempts = 0u32;
    let mut failure = None;
    let assembly_start_phase = MissionPhase::PreUtilization;
    let mut assembly_start = None;

    while !session.is_finished() {
        let tick = session.tick();
        if tick >= limit(config.limits.trial_s) {
            failure = Some("trial time limit".to_string());
            session.abort();
            break;
        }
        session.begin_tick();
        let state = session.mission();
        if state != last_phase {
            last_phase = state;
            if state == MissionState::Active(assembly_start_phase) {
                assembly_start = Some(tick);
            }
        }
        if assembly_start.is_none() && tick >= limit(config.limits.fetch_s) {
            failure = Some("fetch time limit".to_string());
            session.abort();
            break;
        }
        if let Some(start) = assembly_start {
            if tick - start >= limit(config.limits.assembly_s) {
                failure = Some("assembly time limit".to_string());
                session.abort();
                break;
            }
        }

        if let MissionState::Active(phase @ (MissionPhase::PreCollection | MissionPhase::PreUtilization)) = state {
            if planned_phase != Some(phase) {
                planned_phase = Some(phase);
                plan_attempts = 0;
            }
            let idle = !session.plan_completed() && session.execution().is_none_or(|e| e.finished().is_some());
            if idle {
                let goal = if phase == MissionPhase::PreCollection {
                    GoalName::Fetch
                } else {
                    GoalName::Insert
                };
                if plan_attempts >= PLAN_ATTEMPTS {
                    failure = Some(format!("no executable plan for {goal:?}"));
                    session.abort();
                    break;
                }
                plan_attempts += 1;
                let _ = plan_rehearse_execute(session, goal);
            }
        }

        let obs = session.take_observation();
        let ctx = session.operator_context();
        for action in operator.tick(session.time(), obs, &ctx) {
            match action {
                OperatorAction::Stylus { pose } => session.set_stylus(isru_hcs::StylusState::at(pose)),
                OperatorAction::RequestEngage { stylus } => {
                    session.set_stylus(isru_hcs::StylusState::at(stylus));
                    if session.request_engage().is_ok() {
                        engagements += 1;
                    }
                }
                OperatorAction::CloseGripper => {
                    if session.gripper(GripperCommand::Close).is_ok() {
                        grasp_attempts += 1;
                    }
                }
                OperatorAction::DeclareInserted => {
                    let _ = session.declare_inserted();
                }
            }
        }
        session.end_tick();
        let w = session.robot().measured();
        peak_force = peak_force.max(w.force.norm());
        peak_torque = peak_torque.max(w.torque.norm());
    }

    let final_state = session.mission();
    let safety_tripped = session.safety_tripped() || session.robot().sim.state.safety_tripped;
    if failure.is_none() && final_state == MissionState::Failed {
        failure = Some(if safety_tripped {
            "safety trip".to_string()
        } else {
            "aborted".to_string()
        });
    }
    TrialRecord {
        scenario: config.name.clone(),
        index,
        seed: session.id,
        force_feedback: config.force_feedback,
        delay_s: config.delay_s,
        fetching_success: session.fetch_success(),
        assembly_success: final_state == MissionState::Complete && !safety_tripped && session.assembled(),
        safety_tripped,
        peak_force,
        peak_torque,
        duration_s: session.time(),
        final_state,
        engagements,
        grasp_attempts,
        failure,
    }
}

/// Plans to `goal`, rehearses the plan and uplinks it if it passed.
pub fn plan_rehearse_execute(session: &mut Session, goal: GoalName) -> Result<u64, StationError> {
    session.request_plan(goal)?;
    session.request_rehearse()?;
    session.request_execute()
}
