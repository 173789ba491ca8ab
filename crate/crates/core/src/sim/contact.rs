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
//! Contact model for the held peg and the gripper fingertips.
//!
//! The peg is reduced to the centre of its bottom face. Below the slot mouth
//! the contact mode depends on how the peg arrived: inside the clearance it
//! is guided by the hole walls, on the chamfer it is pushed toward the axis,
//! and on the flat rim it is held up.

use nalgebra::Vector3;

use super::env::EnvModel;
use super::{GripperState, SimState};
use crate::geometry::Wrench;

/// Where the contact point sits relative to the hole.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SlotRegion {
    /// Above the mouth or off the block.
    Clear,
    /// Lateral overlap within the clearance.
    Aligned,
    /// Overlapping the chamfer by at most its width.
    Chamfer,
    /// Overlapping the flat rim.
    Rim,
}

/// Lateral overlap of the peg past the hole edge, per slot axis.
fn lateral_overlap(env: &EnvModel, offset: f64) -> f64 {
    (offset.abs() - 0.5 * env.slot.clearance).max(0.0)
}

/// Peg tip (bottom-face centre) in the slot frame, and its velocity.
pub fn peg_tip_in_slot(env: &EnvModel, state: &SimState) -> Option<(Vector3<f64>, Vector3<f64>)> {
    let attach = state.grasped_sample.as_ref()?;
    let sample = state.ee_pose.compose(attach);
    let tip = sample.transform_point(&Vector3::new(0.0, 0.0, -env.sample.half_length()));
    let vel = state.point_velocity(&tip);
    let inv = env.slot.pose.orientation.inverse();
    Some((inv * (tip - env.slot.pose.position), inv * vel))
}

pub fn classify(env: &EnvModel, local: &Vector3<f64>) -> SlotRegion {
    let reach = env.slot.block_half_extents;
    if local.z >= 0.0 || local.x.abs() > reach.x || local.y.abs() > reach.y {
        return SlotRegion::Clear;
    }
    let p = lateral_overlap(env, local.x).max(lateral_overlap(env, local.y));
    if p == 0.0 {
        SlotRegion::Aligned
    } else if p <= env.slot.chamfer {
        SlotRegion::Chamfer
    } else {
        SlotRegion::Rim
    }
}

/// Unilateral spring-damper: never pulls.
fn push(k: f64, d: f64, pen: f64, pen_rate: f64) -> f64 {
    (k * pen + d * pen_rate).max(0.0)
}

/// Contact wrench on the end effector, about the grasp-frame origin in
/// world axes. Zero outside contact.
pub fn contact_wrench(env: &EnvModel, state: &SimState) -> Wrench {
    let k = env.wall_stiffness;
    let d = env.wall_damping;
    let mut total = Wrench::zero();
    let ee = state.ee_pose.position;

    let contact_point = match state.grasped_sample.as_ref() {
        Some(attach) => {
            let sample = state.ee_pose.compose(attach);
            sample.transform_point(&Vector3::new(0.0, 0.0, -env.sample.half_length()))
        }
        None if state.gripper != GripperState::Holding => state
            .ee_pose
            .transform_point(&Vector3::new(0.0, 0.0, state.fingertip_depth)),
        None => return total,
    };
    let vel = state.point_velocity(&contact_point);

    let pen = env.ground_height - contact_point.z;
    if pen > 0.0 {
        let f = Vector3::new(0.0, 0.0, push(k, d, pen, -vel.z));
        total += Wrench::from_force_at(f, &contact_point, &ee);
    }

    let Some((local, local_vel)) = peg_tip_in_slot(env, state) else {
        return total;
    };
    let slot_rot = env.slot.pose.orientation;
    let mut local_force = Vector3::zeros();
    let region = classify(env, &local);
    if state.peg_entered && region != SlotRegion::Clear {
        for axis in 0..2 {
            let p = lateral_overlap(env, local[axis]);
            if p > 0.0 {
                let s = local[axis].signum();
                local_force[axis] -= s * push(k, d, p, s * local_vel[axis]);
            }
        }
        let below = -env.slot.depth - local.z;
        if below > 0.0 {
            local_force.z += push(k, d, below, -local_vel.z);
        }
    } else {
        match region {
            SlotRegion::Clear | SlotRegion::Aligned => {}
            SlotRegion::Chamfer => {
                let w = env.slot.chamfer;
                let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
                for axis in 0..2 {
                    let p = lateral_overlap(env, local[axis]);
                    if p == 0.0 {
                        continue;
                    }
                    let s = local[axis].signum();
                    // Face z = p - w; inward normal (-s, +1)/√2.
                    let pen_n = ((p - w) - local.z) * inv_sqrt2;
                    if pen_n > 0.0 {
                        let rate = (s * local_vel[axis] - local_vel.z) * inv_sqrt2;
                        let f = push(k, d, pen_n, rate);
                        local_force[axis] -= s * f * inv_sqrt2;
                        local_force.z += f * inv_sqrt2;
                    }
                }
            }
            SlotRegion::Rim => {
                local_force.z += push(k, d, -local.z, -local_vel.z);
            }
        }
    }
    if local_force != Vector3::zeros() {
        let f = slot_rot * local_force;
        total += Wrench::from_force_at(f, &contact_point, &ee);
    }
    total
}
