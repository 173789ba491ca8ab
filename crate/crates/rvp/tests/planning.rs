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
use isru_core::collision::{check_collision, min_clearance, CollisionPrimitive, Obstacle};
use isru_core::geometry::Pose;
use isru_core::kinematics::{ArmModel, JointConfig};
use isru_core::sim::EnvModel;
use isru_rvp::*;
use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn down() -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI)
}

/// Independent fine check: every 0.001 rad along each waypoint segment.
fn fine_oracle_free(traj: &Trajectory, arm: &ArmModel, world: &WorldModel) -> bool {
    let prims = world.primitives();
    for pair in traj.waypoints.windows(2) {
        let (a, b) = (&pair[0].q, &pair[1].q);
        let n = (a.max_abs_diff(b) / 0.001).ceil().max(1.0) as usize;
        for k in 0..=n {
            let q = a.lerp(b, k as f64 / n as f64);
            if check_collision(arm, &q, &prims).unwrap().colliding {
                return false;
            }
        }
    }
    traj.waypoints.len() > 1
        || !check_collision(arm, traj.start(), &prims).unwrap().colliding
}

fn random_free(arm: &ArmModel, world: &WorldModel, rng: &mut ChaCha8Rng, margin: f64) -> JointConfig {
    let prims = world.primitives();
    loop {
        let q = JointConfig::new(arm.limits.iter().map(|l| rng.random_range(l.lower..l.upper)).collect());
        let c = min_clearance(arm, &q, &prims).unwrap().unwrap();
        if c.clearance > margin {
            return q;
        }
    }
}

#[test]
fn empty_world_nearby_goal_is_a_straight_line() {
    let arm = ArmModel::default_arm();
    let world = WorldModel::empty();
    let home = arm.forward_kinematics(&arm.home).unwrap();
    let goal = Pose::new(home.position + Vector3::new(0.05, 0.03, -0.04), home.orientation);
    let traj = plan_p2p(&arm, &world, &arm.home, &goal, &PlannerConfig::default()).unwrap();
    traj.validate(&arm).unwrap();
    let (s, g) = (traj.start().clone(), traj.goal().clone());
    for w in &traj.waypoints {
        // Every waypoint lies on the segment start -> goal.
        let d: Vec<f64> = g.0.iter().zip(&s.0).map(|(a, b)| a - b).collect();
        let t = w.q.0.iter().zip(&s.0).zip(&d).map(|((q, s), d)| (q - s) * d).sum::<f64>()
            / d.iter().map(|x| x * x).sum::<f64>();
        assert!(s.lerp(&g, t).max_abs_diff(&w.q) < 1e-9);
    }
    let reached = arm.forward_kinematics(&g).unwrap();
    let (dp, dr) = reached.distance_to(&goal);
    assert!(dp < 1e-6 && dr < 1e-4);
}

#[test]
fn path_around_a_blocking_box_is_collision_free() {
    let arm = ArmModel::default_arm();
    let home = arm.forward_kinematics(&arm.home).unwrap();
    let goal = Pose::new(Vector3::new(0.0, 0.45, 0.35), home.orientation);
    let free = WorldModel::empty();
    let straight = plan_p2p(&arm, &free, &arm.home, &goal, &PlannerConfig::default()).unwrap();
    assert!(straight.waypoints.len() > 1);
    // Drop a box on the midpoint of the free-space motion.
    let mid = arm.forward_kinematics(&straight.sample(0.5 * straight.duration())).unwrap();
    let world = WorldModel::new(vec![Obstacle::new(
        "blocker",
        CollisionPrimitive::world_box(Pose::from_translation(mid.position.x, mid.position.y, mid.position.z), Vector3::new(0.06, 0.06, 0.06)),
    )]);
    assert!(!rehearse(&straight, &arm, &world).collision_free);
    let traj = plan_p2p(&arm, &world, &arm.home, &goal, &PlannerConfig::default()).unwrap();
    traj.validate(&arm).unwrap();
    assert!(fine_oracle_free(&traj, &arm, &world));
    assert!(rehearse(&traj, &arm, &world).collision_free);
}

#[test]
fn unreachable_and_blocked_goals_fail() {
    let arm = ArmModel::default_arm();
    let far = Pose::from_translation(10.0, 0.0, 0.0);
    assert_eq!(
        plan_p2p(&arm, &WorldModel::empty(), &arm.home, &far, &PlannerConfig::default()),
        Err(PlanError::GoalUnreachable)
    );
    let goal = Pose::new(Vector3::new(0.5, 0.0, 0.3), down());
    let world = WorldModel::new(vec![Obstacle::new(
        "solid",
        CollisionPrimitive::world_box(Pose::from_translation(0.5, 0.0, 0.3), Vector3::new(0.1, 0.1, 0.1)),
    )]);
    let err = plan_p2p(&arm, &world, &arm.home, &goal, &PlannerConfig::default()).unwrap_err();
    assert!(matches!(err, PlanError::GoalUnreachable | PlanError::NoPathFound { .. }));
}

#[test]
fn start_in_collision_is_rejected() {
    let arm = ArmModel::default_arm();
    let flange = arm.link_poses(&arm.home).unwrap()[7].position;
    let world = WorldModel::new(vec![Obstacle::new("ball", CollisionPrimitive::sphere(flange, 0.05))]);
    let goal = arm.forward_kinematics(&arm.home).unwrap();
    assert_eq!(
        plan_p2p(&arm, &world, &arm.home, &goal, &PlannerConfig::default()),
        Err(PlanError::StartInCollision)
    );
}

#[test]
fn timing_respects_velocity_cap_and_is_deterministic() {
    let arm = ArmModel::default_arm();
    let env = EnvModel::default_env();
    let world = WorldModel::from_env(&env, Some(&env.sample.pose));
    let goal = Pose::new(env.sample.pose.position + Vector3::new(0.0, 0.0, 0.06), down());
    let cfg = PlannerConfig { seed: 4, ..Default::default() };
    let a = plan_p2p(&arm, &world, &arm.home, &goal, &cfg).unwrap();
    let b = plan_p2p(&arm, &world, &arm.home, &goal, &cfg).unwrap();
    assert_eq!(a, b);
    a.validate(&arm).unwrap();
    assert_eq!(a.world_hash, world.hash());
    for w in a.waypoints.windows(2) {
        let v = w[1].q.max_abs_diff(&w[0].q) / (w[1].time - w[0].time);
        assert!(v <= 0.5 + 1e-9, "{v}");
    }
}

#[test]
fn planned_paths_pass_rehearsal_in_the_bundled_world() {
    let arm = ArmModel::default_arm();
    let env = EnvModel::default_env();
    let world = WorldModel::from_env(&env, None);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ok = 0;
    let n = 20;
    for i in 0..n {
        let start = random_free(&arm, &world, &mut rng, 0.01);
        let target = random_free(&arm, &world, &mut rng, 0.01);
        let goal = arm.forward_kinematics(&target).unwrap();
        let cfg = PlannerConfig { seed: i, ..Default::default() };
        if let Ok(t) = plan_p2p(&arm, &world, &start, &goal, &cfg) {
            ok += 1;
            assert!(rehearse(&t, &arm, &world).collision_free);
            assert!(fine_oracle_free(&t, &arm, &world));
        }
    }
    assert!(ok >= 18, "{ok}/{n}");
}

#[test]
fn blocker_added_after_planning_is_reported() {
    let arm = ArmModel::default_arm();
    let home = arm.forward_kinematics(&arm.home).unwrap();
    let goal = Pose::new(home.position + Vector3::new(0.0, 0.25, 0.0), home.orientation);
    let world = WorldModel::empty();
    let traj = plan_p2p(&arm, &world, &arm.home, &goal, &PlannerConfig::default()).unwrap();
    let clean = rehearse(&traj, &arm, &world);
    assert!(clean.collision_free && clean.first_violation.is_none() && !clean.stale_world);
    let flange = arm.link_poses(&traj.sample(0.5 * traj.duration())).unwrap()[7].position;
    let changed = world.with_obstacle(Obstacle::new("new", CollisionPrimitive::sphere(flange, 0.03)));
    let report = rehearse(&traj, &arm, &changed);
    assert!(report.stale_world);
    assert!(!report.collision_free);
    let v = report.first_violation.unwrap();
    assert!(v.time > 0.0 && v.time < traj.duration());
    assert!(report.min_clearance < 0.0);
}

#[test]
fn single_waypoint_rehearsal_reports_static_clearance() {
    let arm = ArmModel::default_arm();
    let env = EnvModel::default_env();
    let world = WorldModel::from_env(&env, Some(&env.sample.pose));
    let traj = Trajectory::stationary(3, arm.home.clone(), world.hash());
    let report = rehearse(&traj, &arm, &world);
    assert!(report.collision_free);
    let oracle = min_clearance(&arm, &arm.home, &world.primitives()).unwrap().unwrap();
    assert_eq!(report.min_clearance, oracle.clearance);
}

#[test]
fn rehearsal_never_misses_a_fine_resolution_collision() {
    let arm = ArmModel::default_arm();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut free = 0;
    for _ in 0..100 {
        let world = WorldModel::new(
            (0..3)
                .map(|i| {
                    let c = Vector3::new(rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7), rng.random_range(0.0..0.9));
                    Obstacle::new(&format!("o{i}"), CollisionPrimitive::sphere(c, rng.random_range(0.03..0.12)))
                })
                .collect(),
        );
        let a = JointConfig::new(arm.limits.iter().map(|l| rng.random_range(l.lower..l.upper)).collect());
        let b = JointConfig::new(a.0.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect());
        let mut b = b;
        arm.clamp_to_limits(&mut b);
        let traj = Trajectory {
            id: 1,
            planner: "test".into(),
            world_hash: world.hash(),
            waypoints: isru_rvp::trajectory::time_parameterize(&[a, b], 0.5, 1.0, 0.02),
        };
        let report = rehearse(&traj, &arm, &world);
        if report.collision_free {
            free += 1;
            assert!(fine_oracle_free(&traj, &arm, &world));
        }
    }
    assert!(free > 10);
}

#[test]
fn trajectory_file_round_trip_and_validation() {
    let arm = ArmModel::default_arm();
    let home = arm.forward_kinematics(&arm.home).unwrap();
    let goal = Pose::new(home.position + Vector3::new(0.0, 0.1, -0.1), home.orientation);
    let traj = plan_p2p(&arm, &WorldModel::empty(), &arm.home, &goal, &PlannerConfig::default()).unwrap();
    let text = traj.to_toml();
    assert!(text.contains("t_s") && text.contains("q_rad") && text.contains("format_version = 1"));
    assert_eq!(Trajectory::from_toml(&text).unwrap(), traj);

    let mut bad = traj.clone();
    bad.waypoints[1].time = 0.0;
    assert_eq!(bad.validate(&arm), Err(TrajectoryError::BadTiming(1)));
    let mut sparse = traj.clone();
    sparse.waypoints.remove(1);
    assert!(matches!(sparse.validate(&arm), Err(TrajectoryError::TooSparse(..)) | Ok(())));
    let mut out = traj.clone();
    out.waypoints[1].q.0[3] = 1.0;
    assert!(matches!(out.validate(&arm), Err(TrajectoryError::OutOfLimits { joint: 3, .. }) | Err(TrajectoryError::TooSparse(..))));
    assert!(Trajectory::from_toml(&text.replace("format_version = 1", "format_version = 2")).is_err());
}

#[test]
fn sampling_interpolates_between_waypoints() {
    let a = JointConfig::new(vec![0.0; 7]);
    let b = JointConfig::new(vec![0.01; 7]);
    let traj = Trajectory {
        id: 1,
        planner: "test".into(),
        world_hash: 0,
        waypoints: vec![Waypoint { time: 0.0, q: a.clone() }, Waypoint { time: 2.0, q: b.clone() }],
    };
    assert_eq!(traj.sample(-1.0), a);
    assert_eq!(traj.sample(5.0), b);
    assert!((traj.sample(1.0).0[4] - 0.005).abs() < 1e-15);
}

#[test]
fn payload_capsule_covers_the_held_box() {
    let arm = ArmModel::default_arm();
    let env = EnvModel::default_env();
    let attach = Pose::from_rotation(down());
    let with = attach_payload(&arm, &attach, &env.sample.half_extents);
    assert_eq!(with.collision_bodies.len(), arm.collision_bodies.len() + 1);
    let ee = with.forward_kinematics(&with.home).unwrap();
    let body = with.posed_bodies(&with.home).unwrap().last().unwrap().1;
    let sample = ee.compose(&attach);
    // Every box corner lies inside the capsule.
    let h = env.sample.half_extents;
    let isru_core::collision::Shape::Capsule { radius, half_length } = body.shape else { panic!() };
    for sx in [-1.0, 1.0] {
        for sy in [-1.0, 1.0] {
            for sz in [-1.0, 1.0] {
                let c = sample.transform_point(&Vector3::new(sx * h.x, sy * h.y, sz * h.z));
                let axis = body.local_pose.transform_vector(&Vector3::z()) * half_length;
                let d = isru_core::collision::point_segment_distance(&c, &(body.local_pose.position - axis), &(body.local_pose.position + axis));
                assert!(d <= radius + 1e-12);
            }
        }
    }
}
