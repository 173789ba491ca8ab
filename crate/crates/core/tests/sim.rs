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
use approx::assert_abs_diff_eq;
use isru_core::geometry::{Pose, Wrench};
use isru_core::sim::*;
use nalgebra::{UnitQuaternion, Vector3};
use proptest::prelude::*;
use std::f64::consts::PI;

fn down() -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::x_axis(), PI)
}

fn free_pose() -> Pose {
    Pose::new(Vector3::new(0.35, 0.1, 0.30), down())
}

fn sim_at(pose: Pose) -> Simulator {
    Simulator::new(SimConfig::default(), EnvModel::default_env(), pose).unwrap()
}

/// Simulator holding the sample with its bottom face at `tip_local` in the
/// slot frame.
fn holding_with_tip(tip_local: Vector3<f64>, entered: bool) -> Simulator {
    let env = EnvModel::default_env();
    let tip = env.slot.pose.transform_point(&tip_local);
    let ee = Pose::new(tip + Vector3::new(0.0, 0.0, env.sample.half_length()), down());
    let mut sim = sim_at(ee);
    sim.state.gripper = GripperState::Holding;
    sim.state.grasped_sample = Some(Pose::from_rotation(down()));
    sim.state.peg_entered = entered;
    sim
}

#[test]
fn equilibrium_is_a_fixed_point() {
    let mut sim = sim_at(free_pose());
    let before = sim.state.clone();
    for _ in 0..100 {
        let out = sim.step(Some(free_pose()));
        assert_eq!(out.measured, Wrench::zero());
    }
    assert_eq!(sim.state.ee_pose, before.ee_pose);
    assert_eq!(sim.state.ee_twist, before.ee_twist);
}

#[test]
fn constant_force_settles_at_compliance_offset() {
    let mut sim = sim_at(free_pose());
    sim.disturbance = Wrench::new(Vector3::new(6.0, 0.0, 0.0), Vector3::zeros());
    for _ in 0..2000 {
        sim.step(None);
    }
    let offset = sim.state.ee_pose.position - free_pose().position;
    assert_abs_diff_eq!(offset.x, 6.0 / 600.0, epsilon = 1e-6);
    assert_abs_diff_eq!(offset.y, 0.0, epsilon = 1e-9);
}

#[test]
fn starved_stream_converges_to_last_reference() {
    let start = free_pose();
    let mut sim = sim_at(start);
    let mut last = start;
    for i in 1..=100 {
        last = Pose::new(start.position + Vector3::new(0.0005 * i as f64, 0.0, 0.0), start.orientation);
        sim.step(Some(last));
    }
    // Critically damped: the error peaks once, below |e0| + v0 / (ω e).
    let e0 = sim.state.ee_pose.distance_to(&last).0;
    let v0 = sim.state.linear_velocity().norm();
    let bound = e0 + v0 / ((600.0f64 / 5.0).sqrt() * std::f64::consts::E);
    let errors: Vec<f64> = (0..200)
        .map(|_| {
            sim.step(None);
            sim.state.ee_pose.distance_to(&last).0
        })
        .collect();
    let peak = errors.iter().cloned().fold(0.0, f64::max);
    let peak_at = errors.iter().position(|&e| e == peak).unwrap();
    assert!(peak <= bound, "peak {peak} bound {bound}");
    assert!(errors[peak_at..].windows(2).all(|w| w[1] <= w[0]));
    assert!(errors[199] < 1e-4, "error {}", errors[199]);
    assert_eq!(sim.state.last_reference, last);
}

#[test]
fn centred_peg_feels_no_lateral_force() {
    let sim = holding_with_tip(Vector3::new(0.0, 0.0, -0.02), true);
    let w = contact_wrench(&sim.env, &sim.state);
    assert_eq!(w.force.x, 0.0);
    assert_eq!(w.force.y, 0.0);
}

#[test]
fn wall_penetration_gives_linear_spring_force() {
    let sim = holding_with_tip(Vector3::new(0.001 + 0.002, 0.0, -0.02), true);
    assert_eq!(sim.env.wall_stiffness, 5000.0);
    let w = contact_wrench(&sim.env, &sim.state);
    assert_abs_diff_eq!(w.force.x, -10.0, epsilon = 1e-9);
    assert_abs_diff_eq!(w.force.z, 0.0, epsilon = 1e-12);
}

#[test]
fn wall_contact_is_dissipative_over_a_cycle() {
    let mut sim = holding_with_tip(Vector3::new(0.0, 0.0, -0.03), true);
    let start = sim.state.ee_pose;
    let mut work = 0.0;
    let n = 200;
    for i in 0..=2 * n {
        let phase = if i <= n { i as f64 / n as f64 } else { (2 * n - i) as f64 / n as f64 };
        let reference = Pose::new(start.position + Vector3::new(0.006 * phase, 0.0, 0.0), start.orientation);
        let before = sim.state.ee_pose.position;
        let out = sim.step(Some(reference));
        work += out.contact.force.dot(&(sim.state.ee_pose.position - before));
    }
    for _ in 0..500 {
        let before = sim.state.ee_pose.position;
        let out = sim.step(None);
        work += out.contact.force.dot(&(sim.state.ee_pose.position - before));
    }
    assert!(sim.peak_force > 1.0);
    assert!(work <= 0.0, "wall injected {work} J");
}

#[test]
fn blind_descent_on_rim_trips_monitor() {
    let mut sim = holding_with_tip(Vector3::new(0.01, 0.0, 0.01), false);
    let start = sim.state.ee_pose;
    let mut tripped_at = None;
    for i in 1..=500 {
        let reference = Pose::new(start.position - Vector3::new(0.0, 0.0, 0.0002 * i as f64), start.orientation);
        if sim.step(Some(reference)).tripped_now {
            tripped_at = Some(i);
            break;
        }
    }
    assert!(tripped_at.is_some());
    let (tip, _) = peg_tip_in_slot(&sim.env, &sim.state).unwrap();
    assert!(tip.z > -ASSEMBLED_MIN_DEPTH);
}

#[test]
fn safety_threshold_is_strict() {
    let m = SafetyMonitor::default();
    assert!(!m.check(&Wrench::new(Vector3::new(10.0, 0.0, 0.0), Vector3::zeros())));
    assert!(m.check(&Wrench::new(Vector3::new(0.0, 31.0, 0.0), Vector3::zeros())));
    assert!(m.check(&Wrench::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 10.5))));
}

#[test]
fn safety_trip_latches_and_freezes_setpoint() {
    let mut sim = holding_with_tip(Vector3::new(0.01, 0.0, 0.001), false);
    let start = sim.state.ee_pose;
    let mut i = 0;
    while !sim.state.safety_tripped {
        i += 1;
        let reference = Pose::new(start.position - Vector3::new(0.0, 0.0, 0.0005 * i as f64), start.orientation);
        sim.step(Some(reference));
        assert!(i < 1000);
    }
    let frozen = sim.state.last_reference;
    for j in 0..300 {
        let wild = Pose::new(Vector3::new(0.1 * j as f64, 0.0, 1.0), start.orientation);
        let out = sim.step(Some(wild));
        assert!(!out.tripped_now);
        assert!(sim.state.safety_tripped);
        assert_eq!(sim.state.last_reference, frozen);
    }
}

#[test]
fn grasp_at_frame_holds_and_far_sample_does_not() {
    let env = EnvModel::default_env();
    let cfg = GripperConfig::default();
    let state = SimState::at_rest(Pose::new(env.sample.pose.position, down()), env.sample.pose, 0.04);
    let held = grasp_attempt(&state, &env, &cfg);
    assert_eq!(held.gripper, GripperState::Holding);
    let (dp, dr) = held.current_sample_pose().distance_to(&env.sample.pose);
    assert!(dp < 1e-12 && dr < 1e-7);

    let far = Pose::new(env.sample.pose.position + Vector3::new(0.05, 0.0, 0.0), down());
    let missed = grasp_attempt(&SimState::at_rest(far, env.sample.pose, 0.04), &env, &cfg);
    assert_eq!(missed.gripper, GripperState::Open);
    assert!(missed.grasped_sample.is_none());
}

#[test]
fn grasp_centres_laterally_and_keeps_height() {
    let env = EnvModel::default_env();
    let cfg = GripperConfig::default();
    let ee = Pose::new(env.sample.pose.position + Vector3::new(0.003, -0.002, -0.006), down());
    let held = grasp_attempt(&SimState::at_rest(ee, env.sample.pose, 0.04), &env, &cfg);
    assert_eq!(held.gripper, GripperState::Holding);
    let sample = held.current_sample_pose().position;
    assert_abs_diff_eq!(sample.x, ee.position.x, epsilon = 1e-12);
    assert_abs_diff_eq!(sample.y, ee.position.y, epsilon = 1e-12);
    assert_abs_diff_eq!(sample.z, env.sample.pose.position.z, epsilon = 1e-12);
    // Resting on the ground: no contact force from the grasp itself.
    let contact = contact_wrench(&env, &held);
    assert!(contact.force.norm() < 1e-9, "{contact:?}");
}

#[test]
fn grasp_region_matches_thresholds_on_grid() {
    let env = EnvModel::default_env();
    let cfg = GripperConfig::default();
    let sample = env.sample.pose;
    for i in 0..=24 {
        let r = 0.02 * i as f64 / 24.0;
        for j in 0..=24 {
            let tilt = 0.4 * j as f64 / 24.0;
            let dir = Vector3::new((i as f64).cos(), (i as f64).sin(), 0.3).normalize();
            let q = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), tilt) * down();
            let ee = Pose::new(sample.position + r * dir, q);
            let s = SimState::at_rest(ee, sample, cfg.fingertip_depth);
            let expected = r <= cfg.capture_radius && tilt <= cfg.capture_angle;
            // Skip points within rounding of the boundary.
            if (r - cfg.capture_radius).abs() < 1e-9 || (tilt - cfg.capture_angle).abs() < 1e-9 {
                continue;
            }
            let got = grasp_attempt(&s, &env, &cfg).gripper == GripperState::Holding;
            assert_eq!(got, expected, "r={r} tilt={tilt}");
        }
    }
}

#[test]
fn closing_gripper_grasps_after_closing_time() {
    let env = EnvModel::default_env();
    let grasp = Pose::new(env.sample.pose.position, down());
    let mut sim = sim_at(grasp);
    sim.close_gripper();
    assert_eq!(sim.state.gripper, GripperState::Closing);
    for _ in 0..29 {
        sim.step(None);
    }
    assert_eq!(sim.state.gripper, GripperState::Closing);
    sim.step(None);
    assert_eq!(sim.state.gripper, GripperState::Holding);
}

#[test]
fn release_requires_holding_and_freezes_pose() {
    let env = EnvModel::default_env();
    let mut state = SimState::at_rest(Pose::new(env.sample.pose.position, down()), env.sample.pose, 0.04);
    assert_eq!(release(&state), Err(SimError::NotHolding));
    state = grasp_attempt(&state, &env, &GripperConfig::default());
    state.ee_pose = Pose::new(state.ee_pose.position + Vector3::new(0.0, 0.0, 0.1), down());
    let held_at = state.current_sample_pose();
    let released = release(&state).unwrap();
    assert_eq!(released.gripper, GripperState::Open);
    assert_eq!(released.sample_pose, held_at);
    assert!(released.grasped_sample.is_none());
}

#[test]
fn full_insertion_then_release_is_assembled() {
    let mut sim = holding_with_tip(Vector3::new(0.0, 0.0, 0.02), false);
    let start = sim.state.ee_pose;
    for i in 1..=400 {
        let dz = (0.0002 * i as f64).min(0.065);
        let reference = Pose::new(start.position - Vector3::new(0.0, 0.0, dz), start.orientation);
        sim.step(Some(reference));
    }
    for _ in 0..200 {
        sim.step(None);
    }
    assert!(!sim.state.safety_tripped);
    assert!(sim.state.peg_entered);
    assert!(!is_assembled(&sim.env, &sim.state));
    sim.open_gripper().unwrap();
    assert!(is_assembled(&sim.env, &sim.state));
}

#[test]
fn rejects_underdamped_parameters() {
    let mut p = ImpedanceParams::default();
    p.damping[2] = 0.5 * 2.0 * (600.0f64 * 5.0).sqrt();
    assert!(p.validate().is_err());
    assert!(ImpedanceParams::default().validate().is_ok());
}

fn run(sim: &mut Simulator, refs: &[Option<Pose>]) -> Vec<(Pose, [f64; 6])> {
    refs.iter()
        .map(|r| {
            sim.step(*r);
            let t = sim.state.ee_twist;
            (sim.state.ee_pose, [t[0], t[1], t[2], t[3], t[4], t[5]])
        })
        .collect()
}

#[test]
fn identical_inputs_give_bit_identical_trajectories() {
    let start = free_pose();
    let refs: Vec<Option<Pose>> = (0..300)
        .map(|i| {
            (i % 7 != 0).then(|| {
                Pose::new(
                    start.position + Vector3::new(0.001 * (i as f64 * 0.1).sin(), 0.0002 * i as f64, 0.0),
                    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.001 * i as f64) * start.orientation,
                )
            })
        })
        .collect();
    let a = run(&mut sim_at(start), &refs);
    let b = run(&mut sim_at(start), &refs);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.0.xyzw(), y.0.xyzw());
        assert_eq!(x.0.position_array(), y.0.position_array());
        assert_eq!(x.1, y.1);
    }
}

proptest! {
    #[test]
    fn virtual_energy_never_increases_without_contact(
        dx in -0.05f64..0.05, dy in -0.05f64..0.05, dz in -0.05f64..0.05,
        rx in -0.3f64..0.3, ry in -0.3f64..0.3, rz in -0.3f64..0.3,
        vx in -0.2f64..0.2, wz in -1.0f64..1.0,
    ) {
        let reference = free_pose();
        let mut sim = sim_at(reference);
        sim.state.ee_pose = Pose::new(
            reference.position + Vector3::new(dx, dy, dz),
            UnitQuaternion::from_scaled_axis(Vector3::new(rx, ry, rz)) * reference.orientation,
        );
        sim.state.ee_twist[0] = vx;
        sim.state.ee_twist[5] = wz;
        let p = sim.config.impedance;
        let mut e = sim.state.virtual_energy(&p);
        for _ in 0..300 {
            let out = sim.step(None);
            prop_assert_eq!(out.contact, Wrench::zero());
            let next = sim.state.virtual_energy(&p);
            prop_assert!(next <= e + 1e-12, "energy rose {} -> {}", e, next);
            e = next;
        }
    }
}
