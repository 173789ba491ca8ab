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
//! Kinematic playback of trajectories against a world model.
//!
//! Samples alone cannot prove a motion collision-free, so each step between
//! samples is certified with a lever-arm bound on how far any body can move:
//! a pair whose clearances at both ends exceed that bound cannot touch in
//! between. Steps that fail the test are bisected.

use isru_core::collision::{pair_clearances, Attachment, BodyRef, CollisionPrimitive, ContactPair};
use isru_core::kinematics::{ArmModel, JointConfig};
use serde::{Deserialize, Serialize};

use crate::trajectory::Trajectory;
use crate::world::WorldModel;

/// Largest joint step (rad, max over joints) between rehearsal samples.
pub const FINE_STEP: f64 = 0.005;

/// Steps shorter than this are not bisected further.
const MIN_STEP: f64 = 1e-6;

/// Per-body, per-joint upper bound on the distance from the joint axis to
/// any point of the body, independent of configuration.
#[derive(Clone, Debug)]
pub struct MotionBound {
    levers: Vec<Vec<f64>>,
}

impl MotionBound {
    pub fn new(arm: &ArmModel) -> Self {
        let dof = arm.dof();
        let offsets: Vec<f64> = arm.joints.iter().map(|j| j.origin.position.norm()).collect();
        let levers = arm
            .collision_bodies
            .iter()
            .map(|body| {
                let link = match body.attachment {
                    Attachment::Link(l) => l,
                    Attachment::World => 0,
                };
                let reach = body.local_pose.position.norm() + body.shape.bounding_radius();
                (0..dof)
                    .map(|i| {
                        // Joint i+1 turns link i+1 and everything after it.
                        if i + 1 > link {
                            0.0
                        } else {
                            offsets[i + 1..link].iter().sum::<f64>() + reach
                        }
                    })
                    .collect()
            })
            .collect();
        Self { levers }
    }

    /// Upper bound on the displacement of any point of `body` when the
    /// joints move along a straight line by `dq`.
    pub fn sweep(&self, body: usize, dq: &[f64]) -> f64 {
        self.levers[body].iter().zip(dq).map(|(r, d)| r * d.abs()).sum()
    }

    fn pair_sweep(&self, pair: &ContactPair, dq: &[f64]) -> f64 {
        let side = |b: BodyRef| match b {
            BodyRef::Arm(i) => self.sweep(i, dq),
            BodyRef::World(_) => 0.0,
        };
        side(pair.a) + side(pair.b)
    }
}

/// Clearance evaluation and step certification for one arm/world pair.
pub(crate) struct Checker<'a> {
    arm: &'a ArmModel,
    world: Vec<CollisionPrimitive>,
    bound: MotionBound,
}

pub(crate) enum StepFault {
    /// A pair is in contact (or within slack) at fraction `s` of the step.
    Contact { s: f64, pair: ContactPair },
}

impl<'a> Checker<'a> {
    pub(crate) fn new(arm: &'a ArmModel, world: &WorldModel) -> Self {
        Self {
            arm,
            world: world.primitives(),
            bound: MotionBound::new(arm),
        }
    }

    pub(crate) fn clearances(&self, q: &JointConfig) -> Vec<ContactPair> {
        pair_clearances(self.arm, q, &self.world).expect("dimension checked by caller")
    }

    /// Certifies the straight joint motion `a -> b` keeps every pair's
    /// clearance above its slack. `s` positions are fractions of the step.
    pub(crate) fn certify(
        &self,
        a: &JointConfig,
        ca: &[ContactPair],
        b: &JointConfig,
        cb: &[ContactPair],
        slack: &[f64],
        min_step: f64,
    ) -> Result<(), StepFault> {
        self.certify_range(a, ca, 0.0, b, cb, 1.0, slack, min_step)
    }

    #[allow(clippy::too_many_arguments)]
    fn certify_range(
        &self,
        a: &JointConfig,
        ca: &[ContactPair],
        sa: f64,
        b: &JointConfig,
        cb: &[ContactPair],
        sb: f64,
        slack: &[f64],
        min_step: f64,
    ) -> Result<(), StepFault> {
        let dq: Vec<f64> = b.0.iter().zip(&a.0).map(|(x, y)| x - y).collect();
        let mut uncertain = false;
        for k in 0..ca.len() {
            if ca[k].clearance < slack[k] {
                return Err(StepFault::Contact { s: sa, pair: ca[k] });
            }
            if cb[k].clearance < slack[k] {
                return Err(StepFault::Contact { s: sb, pair: cb[k] });
            }
            if ca[k].clearance + cb[k].clearance <= self.bound.pair_sweep(&ca[k], &dq) + 2.0 * slack[k] {
                uncertain = true;
            }
        }
        if !uncertain {
            return Ok(());
        }
        let step = a.max_abs_diff(b);
        if step < min_step {
            // Cannot separate the pair from contact at this resolution.
            let worst = (0..ca.len())
                .min_by(|&i, &j| {
                    (ca[i].clearance + cb[i].clearance).total_cmp(&(ca[j].clearance + cb[j].clearance))
                })
                .unwrap();
            return Err(StepFault::Contact { s: sa, pair: ca[worst] });
        }
        let m = a.lerp(b, 0.5);
        let cm = self.clearances(&m);
        let sm = 0.5 * (sa + sb);
        self.certify_range(a, ca, sa, &m, &cm, sm, slack, min_step)?;
        self.certify_range(&m, &cm, sm, b, cb, sb, slack, min_step)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub time: f64,
    pub pair: ContactPair,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitViolation {
    pub time: f64,
    pub joint: usize,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RehearsalReport {
    pub collision_free: bool,
    pub first_violation: Option<Violation>,
    /// Smallest clearance over all rehearsal samples (m).
    pub min_clearance: f64,
    pub limit_violations: Vec<LimitViolation>,
    /// True when the trajectory was planned against a different world.
    pub stale_world: bool,
}

/// Plays `traj` back at [`FINE_STEP`] resolution against `world`. Pure.
pub fn rehearse(traj: &Trajectory, arm: &ArmModel, world: &WorldModel) -> RehearsalReport {
    let mut report = RehearsalReport {
        collision_free: true,
        first_violation: None,
        min_clearance: f64::INFINITY,
        limit_violations: Vec::new(),
        stale_world: traj.world_hash != world.hash(),
    };
    if traj.waypoints.is_empty() || traj.waypoints.iter().any(|w| w.q.len() != arm.dof()) {
        report.collision_free = false;
        return report;
    }
    let checker = Checker::new(arm, world);
    let record = |report: &mut RehearsalReport, time: f64, pair: ContactPair| {
        if report.first_violation.is_none() {
            report.collision_free = false;
            report.first_violation = Some(Violation { time, pair });
        }
    };
    let no_slack = vec![0.0; checker.clearances(traj.start()).len()];

    for w in &traj.waypoints {
        for (joint, (l, v)) in arm.limits.iter().zip(&w.q.0).enumerate() {
            if !l.contains(*v) {
                report.limit_violations.push(LimitViolation {
                    time: w.time,
                    joint,
                    value: *v,
                });
            }
        }
    }

    let first = &traj.waypoints[0];
    let mut prev_q = first.q.clone();
    let mut prev_c = checker.clearances(&prev_q);
    let mut prev_t = first.time;
    observe(&mut report, &prev_c, prev_t, &record);
    for w in &traj.waypoints[1..] {
        let start = prev_q.clone();
        let t_start = prev_t;
        let n = (start.max_abs_diff(&w.q) / FINE_STEP).ceil().max(1.0) as usize;
        for k in 1..=n {
            let frac = k as f64 / n as f64;
            let q = if k == n { w.q.clone() } else { start.lerp(&w.q, frac) };
            let t = t_start + (w.time - t_start) * frac;
            let c = checker.clearances(&q);
            observe(&mut report, &c, t, &record);
            if report.first_violation.is_none() {
                if let Err(StepFault::Contact { s, pair, .. }) =
                    checker.certify(&prev_q, &prev_c, &q, &c, &no_slack, MIN_STEP)
                {
                    record(&mut report, prev_t + (t - prev_t) * s, pair);
                }
            }
            prev_q = q;
            prev_c = c;
            prev_t = t;
        }
    }
    if !report.limit_violations.is_empty() {
        report.collision_free = false;
    }
    report
}

fn observe(
    report: &mut RehearsalReport,
    c: &[ContactPair],
    t: f64,
    record: &impl Fn(&mut RehearsalReport, f64, ContactPair),
) {
    for p in c {
        report.min_clearance = report.min_clearance.min(p.clearance);
        if p.clearance < 0.0 {
            record(report, t, *p);
        }
    }
}
