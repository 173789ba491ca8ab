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
//! Bidirectional RRT (RRT-Connect) in joint space with IK goal sampling and
//! shortcut smoothing.

use isru_core::collision::ContactPair;
use isru_core::geometry::Pose;
use isru_core::kinematics::{ArmModel, JointConfig, KinematicsError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::rehearse::{rehearse, Checker};
use crate::trajectory::{time_parameterize, Trajectory, DENSIFY_STEP};
use crate::world::WorldModel;

pub const PLANNER_NAME: &str = "rrt-connect";

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerConfig {
    /// Random samples drawn before giving up.
    pub max_samples: usize,
    /// Tree extension step (rad, Euclidean in joint space).
    pub extend_step: f64,
    /// Edge sampling resolution (rad, max over joints).
    pub coarse_step: f64,
    /// Clearance kept along planned paths (m).
    pub margin: f64,
    /// Random IK seeds tried in addition to the start and home configs.
    pub ik_seeds: usize,
    pub shortcut_iterations: usize,
    pub max_velocity: f64,
    pub max_acceleration: f64,
    pub seed: u64,
    pub trajectory_id: u64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            max_samples: 10_000,
            extend_step: 0.3,
            coarse_step: 0.02,
            margin: 0.005,
            ik_seeds: 16,
            shortcut_iterations: 150,
            max_velocity: 0.5,
            max_acceleration: 1.0,
            seed: 0,
            trajectory_id: 1,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("start configuration is in collision")]
    StartInCollision,
    #[error("no IK solution for the goal")]
    GoalUnreachable,
    #[error("no path found after {samples} samples")]
    NoPathFound { samples: usize },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("planned path failed rehearsal")]
    ValidationFailed,
}

struct Node {
    q: JointConfig,
    parent: Option<usize>,
}

struct Planner<'a> {
    arm: &'a ArmModel,
    checker: Checker<'a>,
    cfg: &'a PlannerConfig,
    slack: Vec<f64>,
}

impl Planner<'_> {
    fn clear(&self, c: &[ContactPair]) -> bool {
        c.iter().zip(&self.slack).all(|(p, s)| p.clearance >= *s)
    }

    fn edge_free(&self, a: &JointConfig, b: &JointConfig) -> bool {
        let n = (a.max_abs_diff(b) / self.cfg.coarse_step).ceil().max(1.0) as usize;
        let mut prev_q = a.clone();
        let mut prev_c = self.checker.clearances(a);
        for k in 1..=n {
            let q = if k == n { b.clone() } else { a.lerp(b, k as f64 / n as f64) };
            let c = self.checker.clearances(&q);
            if !self.clear(&c) {
                return false;
            }
            if self
                .checker
                .certify(&prev_q, &prev_c, &q, &c, &self.slack, 1e-4)
                .is_err()
            {
                return false;
            }
            prev_q = q;
            prev_c = c;
        }
        true
    }

    fn steer(&self, from: &JointConfig, to: &JointConfig) -> JointConfig {
        let d = distance(from, to);
        if d <= self.cfg.extend_step {
            to.clone()
        } else {
            from.lerp(to, self.cfg.extend_step / d)
        }
    }

    /// Extends `tree` one step toward `target`. Returns the new node index
    /// and whether it reached the target.
    fn extend(&self, tree: &mut Vec<Node>, target: &JointConfig) -> Option<(usize, bool)> {
        let near = nearest(tree, target);
        let q = self.steer(&tree[near].q, target);
        if !self.edge_free(&tree[near].q, &q) {
            return None;
        }
        let reached = distance(&q, target) < 1e-12;
        tree.push(Node { q, parent: Some(near) });
        Some((tree.len() - 1, reached))
    }

    fn connect(&self, tree: &mut Vec<Node>, target: &JointConfig) -> Option<usize> {
        loop {
            match self.extend(tree, target) {
                Some((i, true)) => return Some(i),
                Some((_, false)) => continue,
                None => return None,
            }
        }
    }

    fn shortcut(&self, path: &mut Vec<JointConfig>, rng: &mut ChaCha8Rng) {
        for _ in 0..self.cfg.shortcut_iterations {
            if path.len() < 3 {
                return;
            }
            let i = rng.random_range(0..path.len() - 2);
            let j = rng.random_range(i + 2..path.len());
            if self.edge_free(&path[i], &path[j]) {
                path.drain(i + 1..j);
            }
        }
    }
}

fn distance(a: &JointConfig, b: &JointConfig) -> f64 {
    a.0.iter().zip(&b.0).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn nearest(tree: &[Node], q: &JointConfig) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, n) in tree.iter().enumerate() {
        let d = distance(&n.q, q);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

fn trace(tree: &[Node], mut i: usize) -> Vec<JointConfig> {
    let mut out = vec![tree[i].q.clone()];
    while let Some(p) = tree[i].parent {
        out.push(tree[p].q.clone());
        i = p;
    }
    out
}

/// Plans a collision-free joint trajectory from `q_start` to a
/// configuration whose grasp frame reaches `goal`.
pub fn plan_p2p(
    arm: &ArmModel,
    world: &WorldModel,
    q_start: &JointConfig,
    goal: &Pose,
    cfg: &PlannerConfig,
) -> Result<Trajectory, PlanError> {
    arm.check_dimension(q_start)?;
    let checker = Checker::new(arm, world);
    let start_c = checker.clearances(q_start);
    if start_c.iter().any(|p| p.clearance < 0.0) || !arm.within_limits(q_start) {
        return Err(PlanError::StartInCollision);
    }
    // Pairs already tight at the start only need to stay clear.
    let slack: Vec<f64> = start_c.iter().map(|p| cfg.margin.min(0.5 * p.clearance)).collect();
    let planner = Planner {
        arm,
        checker,
        cfg,
        slack,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut seeds = vec![q_start.clone(), arm.home.clone()];
    for _ in 0..cfg.ik_seeds {
        seeds.push(random_config(arm, &mut rng));
    }
    let mut solved = Vec::new();
    let mut goals: Vec<JointConfig> = Vec::new();
    for seed in &seeds {
        if let Ok(q) = arm.solve_ik(goal, seed) {
            solved.push(q.clone());
            if goals.iter().all(|g| g.max_abs_diff(&q) > 1e-3) && planner.clear(&planner.checker.clearances(&q)) {
                goals.push(q);
            }
        }
    }
    if solved.is_empty() {
        return Err(PlanError::GoalUnreachable);
    }
    if goals.is_empty() {
        return Err(PlanError::NoPathFound { samples: 0 });
    }
    goals.sort_by(|a, b| distance(q_start, a).total_cmp(&distance(q_start, b)));

    let path = match goals.iter().find(|g| planner.edge_free(q_start, g)) {
        Some(g) => vec![q_start.clone(), g.clone()],
        None => {
            let mut path = grow(&planner, q_start, &goals, &mut rng)?;
            planner.shortcut(&mut path, &mut rng);
            path
        }
    };
    let traj = Trajectory {
        id: cfg.trajectory_id,
        planner: PLANNER_NAME.into(),
        world_hash: world.hash(),
        waypoints: time_parameterize(&path, cfg.max_velocity, cfg.max_acceleration, DENSIFY_STEP),
    };
    if !rehearse(&traj, arm, world).collision_free {
        return Err(PlanError::ValidationFailed);
    }
    Ok(traj)
}

fn grow(
    planner: &Planner,
    q_start: &JointConfig,
    goals: &[JointConfig],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<JointConfig>, PlanError> {
    let mut start_tree = vec![Node {
        q: q_start.clone(),
        parent: None,
    }];
    let mut goal_tree: Vec<Node> = goals.iter().map(|g| Node { q: g.clone(), parent: None }).collect();
    let mut forward = true;
    for _ in 0..planner.cfg.max_samples {
        let target = random_config(planner.arm, rng);
        let (a, b) = if forward {
            (&mut start_tree, &mut goal_tree)
        } else {
            (&mut goal_tree, &mut start_tree)
        };
        if let Some((new, _)) = planner.extend(a, &target) {
            let q_new = a[new].q.clone();
            if let Some(met) = planner.connect(b, &q_new) {
                let (s_idx, g_idx) = if forward { (new, met) } else { (met, new) };
                let mut path = trace(&start_tree, s_idx);
                path.reverse();
                let tail = trace(&goal_tree, g_idx);
                // Both branches end at the same configuration.
                path.extend(tail.into_iter().skip(1));
                return Ok(path);
            }
        }
        forward = !forward;
    }
    Err(PlanError::NoPathFound {
        samples: planner.cfg.max_samples,
    })
}

fn random_config(arm: &ArmModel, rng: &mut ChaCha8Rng) -> JointConfig {
    JointConfig::new(arm.limits.iter().map(|l| rng.random_range(l.lower..l.upper)).collect())
}
