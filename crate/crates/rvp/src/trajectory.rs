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
use isru_core::kinematics::{ArmModel, JointConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TRAJECTORY_FORMAT_VERSION: u32 = 1;

/// Largest joint-space step (max over joints, rad) between consecutive
/// waypoints.
pub const DENSIFY_STEP: f64 = 0.02;

#[derive(Debug, Error, PartialEq)]
pub enum TrajectoryError {
    #[error("trajectory has no waypoints")]
    Empty,
    #[error("waypoint {0}: times must start at 0 and strictly increase")]
    BadTiming(usize),
    #[error("waypoint {0}: joint count does not match the arm")]
    Dimension(usize),
    #[error("waypoint {index}: joint {joint} outside its limits")]
    OutOfLimits { index: usize, joint: usize },
    #[error("waypoints {0} and {1} are further apart than the densification step")]
    TooSparse(usize, usize),
    #[error("trajectory file: {0}")]
    Format(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub time: f64,
    pub q: JointConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: u64,
    pub planner: String,
    pub world_hash: u64,
    pub waypoints: Vec<Waypoint>,
}

impl Trajectory {
    /// Single-waypoint trajectory holding `q`.
    pub fn stationary(id: u64, q: JointConfig, world_hash: u64) -> Self {
        Self {
            id,
            planner: "hold".into(),
            world_hash,
            waypoints: vec![Waypoint { time: 0.0, q }],
        }
    }

    pub fn duration(&self) -> f64 {
        self.waypoints.last().map_or(0.0, |w| w.time)
    }

    pub fn start(&self) -> &JointConfig {
        &self.waypoints[0].q
    }

    pub fn goal(&self) -> &JointConfig {
        &self.waypoints[self.waypoints.len() - 1].q
    }

    /// Linear interpolation between waypoints, clamped to the ends.
    pub fn sample(&self, t: f64) -> JointConfig {
        let w = &self.waypoints;
        if t <= w[0].time {
            return w[0].q.clone();
        }
        let i = w.partition_point(|p| p.time <= t);
        if i >= w.len() {
            return w[w.len() - 1].q.clone();
        }
        let (a, b) = (&w[i - 1], &w[i]);
        a.q.lerp(&b.q, (t - a.time) / (b.time - a.time))
    }

    pub fn validate(&self, arm: &ArmModel) -> Result<(), TrajectoryError> {
        if self.waypoints.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        for (i, w) in self.waypoints.iter().enumerate() {
            let ok_time = if i == 0 {
                w.time == 0.0
            } else {
                w.time > self.waypoints[i - 1].time
            };
            if !ok_time || !w.time.is_finite() {
                return Err(TrajectoryError::BadTiming(i));
            }
            if w.q.len() != arm.dof() {
                return Err(TrajectoryError::Dimension(i));
            }
            if let Some(joint) = arm.limits.iter().zip(&w.q.0).position(|(l, v)| !l.contains(*v)) {
                return Err(TrajectoryError::OutOfLimits { index: i, joint });
            }
            if i > 0 && w.q.max_abs_diff(&self.waypoints[i - 1].q) > DENSIFY_STEP + 1e-12 {
                return Err(TrajectoryError::TooSparse(i - 1, i));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        let file = TrajectoryFile {
            format_version: TRAJECTORY_FORMAT_VERSION,
            id: self.id,
            planner: self.planner.clone(),
            world_hash: format!("{:016x}", self.world_hash),
            joints: self.waypoints.first().map_or(0, |w| w.q.len()),
            waypoint: self
                .waypoints
                .iter()
                .map(|w| WaypointEntry {
                    t_s: w.time,
                    q_rad: w.q.0.clone(),
                })
                .collect(),
        };
        toml::to_string(&file).expect("trajectory serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, TrajectoryError> {
        let file: TrajectoryFile = toml::from_str(text).map_err(|e| TrajectoryError::Format(e.to_string()))?;
        if file.format_version != TRAJECTORY_FORMAT_VERSION {
            return Err(TrajectoryError::Format(format!(
                "unsupported format_version {}",
                file.format_version
            )));
        }
        let world_hash = u64::from_str_radix(&file.world_hash, 16)
            .map_err(|e| TrajectoryError::Format(format!("world_hash: {e}")))?;
        if file.waypoint.iter().any(|w| w.q_rad.len() != file.joints) {
            return Err(TrajectoryError::Format("waypoint joint count differs from `joints`".into()));
        }
        Ok(Self {
            id: file.id,
            planner: file.planner,
            world_hash,
            waypoints: file
                .waypoint
                .into_iter()
                .map(|w| Waypoint {
                    time: w.t_s,
                    q: JointConfig::new(w.q_rad),
                })
                .collect(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct TrajectoryFile {
    format_version: u32,
    id: u64,
    planner: String,
    /// Hex digest of the world the plan was made in.
    world_hash: String,
    joints: usize,
    waypoint: Vec<WaypointEntry>,
}

#[derive(Serialize, Deserialize)]
struct WaypointEntry {
    t_s: f64,
    q_rad: Vec<f64>,
}

/// Rest-to-rest trapezoidal timing of a piecewise-linear joint path. Each
/// segment is scaled so that no joint exceeds `max_velocity` or
/// `max_acceleration`, and is split into steps of at most `max_step`.
pub fn time_parameterize(
    path: &[JointConfig],
    max_velocity: f64,
    max_acceleration: f64,
    max_step: f64,
) -> Vec<Waypoint> {
    let mut out = vec![Waypoint {
        time: 0.0,
        q: path[0].clone(),
    }];
    let mut t0 = 0.0;
    for pair in path.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let len = a.max_abs_diff(b);
        if len == 0.0 {
            continue;
        }
        let profile = Trapezoid::new(len, max_velocity, max_acceleration);
        let n = (len / max_step).ceil().max(1.0) as usize;
        for k in 1..=n {
            let s = len * k as f64 / n as f64;
            let q = if k == n { b.clone() } else { a.lerp(b, s / len) };
            out.push(Waypoint {
                time: t0 + profile.time_at(s),
                q,
            });
        }
        t0 += profile.total;
    }
    out
}

struct Trapezoid {
    len: f64,
    accel: f64,
    v_peak: f64,
    t_ramp: f64,
    total: f64,
}

impl Trapezoid {
    fn new(len: f64, v: f64, a: f64) -> Self {
        let (v_peak, t_ramp, total) = if len >= v * v / a {
            (v, v / a, len / v + v / a)
        } else {
            let t = (len / a).sqrt();
            (a * t, t, 2.0 * t)
        };
        Self {
            len,
            accel: a,
            v_peak,
            t_ramp,
            total,
        }
    }

    /// Time at which arc length `s` is reached.
    fn time_at(&self, s: f64) -> f64 {
        let s_ramp = 0.5 * self.accel * self.t_ramp * self.t_ramp;
        if s >= self.len {
            self.total
        } else if s <= s_ramp {
            (2.0 * s / self.accel).sqrt()
        } else if s <= self.len - s_ramp {
            self.t_ramp + (s - s_ramp) / self.v_peak
        } else {
            self.total - (2.0 * (self.len - s) / self.accel).sqrt()
        }
    }
}
