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
//! End-effector impedance simulation of the manipulation robot.
//!
//! The end effector is a 6-DOF virtual mass held to the last received
//! reference by a diagonal spring-damper. Linear impedance terms are
//! integrated implicitly, contact and payload forces explicitly, at a fixed
//! step. Missing references leave the setpoint where it was.

pub mod contact;
pub mod env;

use nalgebra::{UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use contact::{classify, contact_wrench, peg_tip_in_slot, SlotRegion};
pub use env::{CameraSpec, EnvModel, SampleSpec, SlotSpec};

use crate::geometry::{canonical, orientation_error, rotation_error_vector, Pose, Wrench, GRAVITY};

pub const DEFAULT_DT: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("gripper is not holding a sample")]
    NotHolding,
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
}

/// Diagonal Cartesian impedance: `[x, y, z, rx, ry, rz]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceParams {
    pub stiffness: [f64; 6],
    pub damping: [f64; 6],
    pub virtual_mass: [f64; 6],
}

/// Smallest damping ratio accepted by [`ImpedanceParams::validate`].
pub const MIN_DAMPING_RATIO: f64 = 0.7;

impl ImpedanceParams {
    /// Critically damped parameters for the given stiffness and mass.
    pub fn critically_damped(stiffness: [f64; 6], virtual_mass: [f64; 6]) -> Self {
        let mut damping = [0.0; 6];
        for i in 0..6 {
            damping[i] = 2.0 * (stiffness[i] * virtual_mass[i]).sqrt();
        }
        Self {
            stiffness,
            damping,
            virtual_mass,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        for i in 0..6 {
            let (k, d, m) = (self.stiffness[i], self.damping[i], self.virtual_mass[i]);
            if !(k > 0.0 && d > 0.0 && m > 0.0) {
                return Err(SimError::InvalidParams(format!("axis {i}: entries must be positive")));
            }
            if d < MIN_DAMPING_RATIO * 2.0 * (k * m).sqrt() {
                return Err(SimError::InvalidParams(format!(
                    "axis {i}: damping below {MIN_DAMPING_RATIO} of critical"
                )));
            }
        }
        Ok(())
    }
}

impl Default for ImpedanceParams {
    fn default() -> Self {
        Self::critically_damped([600.0, 600.0, 600.0, 30.0, 30.0, 30.0], [5.0, 5.0, 5.0, 0.5, 0.5, 0.5])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripperConfig {
    pub capture_radius: f64,
    pub capture_angle: f64,
    pub closing_time: f64,
    /// Distance from the grasp frame to the fingertips along the approach
    /// axis.
    pub fingertip_depth: f64,
}

impl Default for GripperConfig {
    fn default() -> Self {
        Self {
            capture_radius: 0.01,
            capture_angle: 0.2,
            closing_time: 0.3,
            fingertip_depth: 0.04,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyMonitor {
    pub force_limit: f64,
    pub torque_limit: f64,
}

impl Default for SafetyMonitor {
    fn default() -> Self {
        Self {
            force_limit: 30.0,
            torque_limit: 10.0,
        }
    }
}

impl SafetyMonitor {
    /// True when either limit is strictly exceeded.
    pub fn check(&self, wrench: &Wrench) -> bool {
        wrench.force.norm() > self.force_limit || wrench.torque.norm() > self.torque_limit
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperState {
    Open,
    Closing,
    Holding,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub ee_pose: Pose,
    /// `[v; ω]` in world axes.
    pub ee_twist: Vector6<f64>,
    pub last_reference: Pose,
    /// Rate of the reference stream at the last update, `[v; ω]`.
    pub reference_rate: Vector6<f64>,
    pub gripper: GripperState,
    pub closing_elapsed: f64,
    /// Sample pose relative to the grasp frame while held.
    pub grasped_sample: Option<Pose>,
    /// World pose of the sample when not held.
    pub sample_pose: Pose,
    pub clock: f64,
    pub safety_tripped: bool,
    /// Peg entered the hole inside the clearance and has stayed below the
    /// mouth since.
    pub peg_entered: bool,
    pub fingertip_depth: f64,
}

impl SimState {
    pub fn at_rest(ee_pose: Pose, sample_pose: Pose, fingertip_depth: f64) -> Self {
        Self {
            ee_pose,
            ee_twist: Vector6::zeros(),
            last_reference: ee_pose,
            reference_rate: Vector6::zeros(),
            gripper: GripperState::Open,
            closing_elapsed: 0.0,
            grasped_sample: None,
            sample_pose,
            clock: 0.0,
            safety_tripped: false,
            peg_entered: false,
            fingertip_depth,
        }
    }

    pub fn linear_velocity(&self) -> Vector3<f64> {
        self.ee_twist.fixed_rows::<3>(0).into_owned()
    }

    pub fn angular_velocity(&self) -> Vector3<f64> {
        self.ee_twist.fixed_rows::<3>(3).into_owned()
    }

    /// Velocity of a world point rigidly attached to the end effector.
    pub fn point_velocity(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.linear_velocity() + self.angular_velocity().cross(&(p - self.ee_pose.position))
    }

    /// Current world pose of the sample, held or not.
    pub fn current_sample_pose(&self) -> Pose {
        match &self.grasped_sample {
            Some(attach) => self.ee_pose.compose(attach),
            None => self.sample_pose,
        }
    }

    /// Kinetic plus spring energy relative to `last_reference`.
    pub fn virtual_energy(&self, params: &ImpedanceParams) -> f64 {
        let dp = self.ee_pose.position - self.last_reference.position;
        let dr = rotation_error_vector(&self.ee_pose.orientation, &self.last_reference.orientation);
        let mut e = 0.0;
        for i in 0..3 {
            e += 0.5 * params.virtual_mass[i] * self.ee_twist[i].powi(2);
            e += 0.5 * params.virtual_mass[i + 3] * self.ee_twist[i + 3].powi(2);
            e += 0.5 * params.stiffness[i] * dp[i].powi(2);
            e += 0.5 * params.stiffness[i + 3] * dr[i].powi(2);
        }
        e
    }
}

/// Result of one simulation step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutput {
    /// External wrench at the grasp frame: contact plus payload weight.
    pub measured: Wrench,
    pub contact: Wrench,
    /// Set on the step the monitor first trips.
    pub tripped_now: bool,
}

/// Weight of the held sample, about the grasp-frame origin.
pub fn payload_wrench(env: &EnvModel, state: &SimState) -> Wrench {
    match &state.grasped_sample {
        Some(attach) => {
            let com = state.ee_pose.compose(attach).position;
            let f = Vector3::new(0.0, 0.0, -env.sample.mass * GRAVITY);
            Wrench::from_force_at(f, &com, &state.ee_pose.position)
        }
        None => Wrench::zero(),
    }
}

/// Attempts a grasp with the current grasp frame. Succeeds iff the sample
/// centre is within the capture radius and the approach axis is within the
/// capture angle of the sample's downward axis; otherwise the gripper
/// reopens. The closed fingers centre the sample in the grasp frame.
pub fn grasp_attempt(state: &SimState, env: &EnvModel, cfg: &GripperConfig) -> SimState {
    let mut next = state.clone();
    next.closing_elapsed = 0.0;
    if state.grasped_sample.is_some() {
        next.gripper = GripperState::Holding;
        return next;
    }
    let _ = env;
    let (offset, angle) = grasp_error(state, &state.sample_pose);
    if offset <= cfg.capture_radius && angle <= cfg.capture_angle {
        next.gripper = GripperState::Holding;
        next.grasped_sample = Some(sample_attachment(state, &state.sample_pose));
    } else {
        next.gripper = GripperState::Open;
    }
    next
}

/// Distance from the grasp frame to the sample centre, and the angle between
/// the approach axis and the sample's downward axis.
pub fn grasp_error(state: &SimState, sample: &Pose) -> (f64, f64) {
    let offset = (sample.position - state.ee_pose.position).norm();
    let approach = state.ee_pose.transform_vector(&Vector3::z());
    let down = sample.transform_vector(&-Vector3::z());
    let angle = approach.dot(&down).clamp(-1.0, 1.0).acos();
    (offset, angle)
}

/// Sample pose in the grasp frame after the fingers centre it: long axis
/// opposite the approach axis, yaw about the approach axis preserved, and
/// the offset along the approach axis kept.
fn sample_attachment(state: &SimState, sample: &Pose) -> Pose {
    let flip = UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI);
    let relative = state.ee_pose.orientation.inverse() * sample.orientation;
    // Keep only the rotation about the grasp z axis.
    let aligned = flip.inverse() * relative;
    let (_, _, yaw) = aligned.euler_angles();
    let yaw_q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw);
    let along = state.ee_pose.orientation.inverse() * (sample.position - state.ee_pose.position);
    Pose::new(Vector3::new(0.0, 0.0, along.z), flip * yaw_q)
}

/// Opens the gripper and leaves the sample at its current pose.
pub fn release(state: &SimState) -> Result<SimState, SimError> {
    if state.gripper != GripperState::Holding {
        return Err(SimError::NotHolding);
    }
    let mut next = state.clone();
    next.sample_pose = state.current_sample_pose();
    next.grasped_sample = None;
    next.gripper = GripperState::Open;
    next.peg_entered = false;
    Ok(next)
}

/// Minimum depth of the sample's bottom face below the slot mouth for it to
/// count as assembled.
pub const ASSEMBLED_MIN_DEPTH: f64 = 0.03;

/// True when the released sample sits inside the hole: bottom face at least
/// [`ASSEMBLED_MIN_DEPTH`] below the mouth, laterally within the hole, long
/// axis within 0.1 rad of the hole axis, and the fingers open.
pub fn is_assembled(env: &EnvModel, state: &SimState) -> bool {
    if state.gripper != GripperState::Open || state.grasped_sample.is_some() {
        return false;
    }
    let sample = state.sample_pose;
    let tip = sample.transform_point(&Vector3::new(0.0, 0.0, -env.sample.half_length()));
    let local = env.slot.pose.orientation.inverse() * (tip - env.slot.pose.position);
    // Wall penetration of a few tenths of a millimetre is tolerated.
    let lateral_limit = 0.5 * env.slot.clearance + 5e-4;
    let tilt = orientation_error(
        &UnitQuaternion::identity(),
        &(env.slot.pose.orientation.inverse() * sample.orientation),
    );
    let axis_tilt = tilt.min((std::f64::consts::PI - tilt).abs());
    local.z <= -ASSEMBLED_MIN_DEPTH
        && local.x.abs() <= lateral_limit
        && local.y.abs() <= lateral_limit
        && axis_tilt < 0.1
}

/// Configuration of a simulator instance.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub impedance: ImpedanceParams,
    pub gripper: GripperConfig,
    pub safety: SafetyMonitor,
    pub dt: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            impedance: ImpedanceParams::default(),
            gripper: GripperConfig::default(),
            safety: SafetyMonitor::default(),
            dt: DEFAULT_DT,
        }
    }
}

/// Single-owner simulation instance.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub config: SimConfig,
    pub env: EnvModel,
    pub state: SimState,
    /// Extra external wrench applied every step (test disturbances).
    pub disturbance: Wrench,
    pub peak_force: f64,
    pub peak_torque: f64,
    pending_close: bool,
}

impl Simulator {
    pub fn new(config: SimConfig, env: EnvModel, ee_pose: Pose) -> Result<Self, SimError> {
        config.impedance.validate()?;
        if config.safety.force_limit <= 0.0 || config.safety.torque_limit <= 0.0 {
            return Err(SimError::InvalidParams("safety limits must be positive".into()));
        }
        if !(config.dt > 0.0) {
            return Err(SimError::InvalidParams("dt must be positive".into()));
        }
        let state = SimState::at_rest(ee_pose, env.sample.pose, config.gripper.fingertip_depth);
        Ok(Self {
            config,
            env,
            state,
            disturbance: Wrench::zero(),
            peak_force: 0.0,
            peak_torque: 0.0,
            pending_close: false,
        })
    }

    /// Starts closing the fingers; the grasp is evaluated once closed.
    pub fn close_gripper(&mut self) {
        if self.state.gripper == GripperState::Open && !self.state.safety_tripped {
            self.state.gripper = GripperState::Closing;
            self.state.closing_elapsed = 0.0;
            self.pending_close = true;
        }
    }

    pub fn open_gripper(&mut self) -> Result<(), SimError> {
        match self.state.gripper {
            GripperState::Holding => {
                self.state = release(&self.state)?;
                Ok(())
            }
            GripperState::Closing => {
                self.state.gripper = GripperState::Open;
                self.pending_close = false;
                Ok(())
            }
            GripperState::Open => Err(SimError::NotHolding),
        }
    }

    /// Advances one fixed step. `reference = None` keeps tracking the last
    /// received reference.
    pub fn step(&mut self, reference: Option<Pose>) -> StepOutput {
        let h = self.config.dt;
        let p = self.config.impedance;
        let state = &mut self.state;

        if !state.safety_tripped {
            if let Some(r) = reference {
                let prev = state.last_reference;
                let v = (r.position - prev.position) / h;
                let w = rotation_error_vector(&prev.orientation, &r.orientation) / h;
                state.reference_rate = Vector6::new(v.x, v.y, v.z, w.x, w.y, w.z);
                state.last_reference = r;
            } else {
                state.reference_rate = Vector6::zeros();
            }
        }

        let contact = contact_wrench(&self.env, state);
        let payload = payload_wrench(&self.env, state);
        let external = contact + payload + self.disturbance;

        // Translation: implicit in spring and damper.
        let target = state.last_reference;
        let mut pos = state.ee_pose.position;
        let mut twist = state.ee_twist;
        for i in 0..3 {
            let (k, d, m) = (p.stiffness[i], p.damping[i], p.virtual_mass[i]);
            let err = target.position[i] - pos[i];
            let v = (m * twist[i] + h * (k * err + d * state.reference_rate[i] + external.force[i]))
                / (m + h * d + h * h * k);
            twist[i] = v;
            pos[i] += h * v;
        }
        // Rotation: same scheme on the rotation-vector error to the setpoint.
        let mut err = rotation_error_vector(&state.ee_pose.orientation, &target.orientation);
        for i in 0..3 {
            let (k, d, m) = (p.stiffness[i + 3], p.damping[i + 3], p.virtual_mass[i + 3]);
            let w = (m * twist[i + 3]
                + h * (k * err[i] + d * state.reference_rate[i + 3] + external.torque[i]))
                / (m + h * d + h * h * k);
            twist[i + 3] = w;
            err[i] -= h * w;
        }
        let orientation =
            canonical(UnitQuaternion::from_scaled_axis(-err) * target.orientation);
        state.ee_pose = Pose::new(pos, orientation);
        state.ee_twist = twist;
        state.clock += h;

        // Contact-mode memory for the peg.
        if let Some((local, _)) = peg_tip_in_slot(&self.env, state) {
            match classify(&self.env, &local) {
                SlotRegion::Clear => state.peg_entered = false,
                SlotRegion::Aligned => state.peg_entered = true,
                _ => {}
            }
        } else {
            state.peg_entered = false;
        }

        if state.gripper == GripperState::Closing && self.pending_close {
            state.closing_elapsed += h;
            if state.closing_elapsed + 1e-12 >= self.config.gripper.closing_time {
                *state = grasp_attempt(state, &self.env, &self.config.gripper);
                self.pending_close = false;
            }
        }

        let measured = contact + payload;
        self.peak_force = self.peak_force.max(measured.force.norm());
        self.peak_torque = self.peak_torque.max(measured.torque.norm());
        let mut tripped_now = false;
        if !state.safety_tripped && self.config.safety.check(&measured) {
            state.safety_tripped = true;
            tripped_now = true;
            // The controller stops where it is.
            state.last_reference = state.ee_pose;
            state.reference_rate = Vector6::zeros();
        }
        StepOutput {
            measured,
            contact,
            tripped_now,
        }
    }
}
