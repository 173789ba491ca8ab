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
use isru_core::geometry::{orientation_error, Pose};
use isru_core::kinematics::{ArmModel, JointConfig, KinematicsError};
use nalgebra::{Matrix3, Matrix4, UnitQuaternion, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

/// Modified Denavit-Hartenberg table of the bundled arm: (a, d, alpha).
const DH: [(f64, f64, f64); 7] = [
    (0.0, 0.333, 0.0),
    (0.0, 0.0, -FRAC_PI_2),
    (0.0, 0.316, FRAC_PI_2),
    (0.0825, 0.0, FRAC_PI_2),
    (-0.0825, 0.384, -FRAC_PI_2),
    (0.0, 0.0, FRAC_PI_2),
    (0.088, 0.0, FRAC_PI_2),
];

fn rot_x(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(1.0, 0.0, 0.0, 0.0, 0.0, c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0)
}

fn rot_z(a: f64) -> Matrix4<f64> {
    let (s, c) = a.sin_cos();
    Matrix4::new(c, -s, 0.0, 0.0, s, c, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)
}

fn trans(x: f64, y: f64, z: f64) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m[(0, 3)] = x;
    m[(1, 3)] = y;
    m[(2, 3)] = z;
    m
}

/// Chain product of homogeneous transforms, independent of `Pose`.
fn dh_oracle(q: &[f64]) -> Matrix4<f64> {
    let mut t = Matrix4::<f64>::identity();
    for (i, &(a, d, alpha)) in DH.iter().enumerate() {
        t = t * rot_x(alpha) * trans(a, 0.0, 0.0) * rot_z(q[i]) * trans(0.0, 0.0, d);
    }
    t * trans(0.0, 0.0, 0.2104) * rot_z(-FRAC_PI_4)
}

fn to_matrix(p: &Pose) -> Matrix4<f64> {
    let mut m = Matrix4::identity();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&p.rotation_matrix());
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&p.position);
    m
}

fn random_q(arm: &ArmModel, rng: &mut ChaCha8Rng, margin: f64) -> JointConfig {
    JointConfig::new(
        arm.limits
            .iter()
            .map(|l| rng.random_range(l.lower + margin..l.upper - margin))
            .collect(),
    )
}

#[test]
fn zero_configuration_is_the_fixed_chain() {
    let arm = ArmModel::default_arm();
    let q = JointConfig::zeros(7);
    let mut chain = Pose::identity();
    for j in &arm.joints {
        chain = chain.compose(&j.origin);
    }
    chain = chain.compose(&arm.ee_offset);
    let fk = arm.forward_kinematics(&q).unwrap();
    assert_abs_diff_eq!(fk.position, chain.position, epsilon = 1e-12);
    assert!(orientation_error(&fk.orientation, &chain.orientation) < 1e-9);
}

#[test]
fn home_pose_matches_chain_multiplication_oracle() {
    let arm = ArmModel::default_arm();
    let home = [0.0, -FRAC_PI_4, 0.0, -3.0 * FRAC_PI_4, 0.0, FRAC_PI_2, FRAC_PI_4];
    for (a, b) in arm.home.as_slice().iter().zip(&home) {
        assert!((a - b).abs() < 1e-6);
    }
    let fk = to_matrix(&arm.forward_kinematics(&arm.home).unwrap());
    let oracle = dh_oracle(arm.home.as_slice());
    assert!((fk - oracle).abs().max() < 1e-9, "{fk}\n{oracle}");
}

#[test]
fn random_poses_match_chain_oracle() {
    let arm = ArmModel::default_arm();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let q = random_q(&arm, &mut rng, 0.0);
        let fk = to_matrix(&arm.forward_kinematics(&q).unwrap());
        assert!((fk - dh_oracle(q.as_slice())).abs().max() < 1e-9);
    }
}

#[test]
fn moving_the_base_moves_the_grasp_frame() {
    let base = Pose::from_xyz_rpy([0.3, -0.2, 0.1], [0.2, -0.4, 1.1]);
    let arm = ArmModel::default_arm();
    let moved = arm.clone().with_base(base);
    let q = arm.home.clone();
    let expected = base.compose(&arm.forward_kinematics(&q).unwrap());
    let got = moved.forward_kinematics(&q).unwrap();
    assert_abs_diff_eq!(got.position, expected.position, epsilon = 1e-12);
    assert!(orientation_error(&got.orientation, &expected.orientation) < 1e-9);
}

#[test]
fn dimension_mismatch_is_reported() {
    let arm = ArmModel::default_arm();
    let q = JointConfig::zeros(6);
    assert!(matches!(arm.forward_kinematics(&q), Err(KinematicsError::DimensionMismatch { .. })));
    assert!(matches!(arm.jacobian(&q), Err(KinematicsError::DimensionMismatch { .. })));
}

#[test]
fn jacobian_matches_central_differences() {
    let arm = ArmModel::default_arm();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-6;
    for _ in 0..100 {
        let q = random_q(&arm, &mut rng, 1e-3);
        let jac = arm.jacobian(&q).unwrap();
        for j in 0..7 {
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp.0[j] += h;
            qm.0[j] -= h;
            let fp = arm.forward_kinematics(&qp).unwrap();
            let fm = arm.forward_kinematics(&qm).unwrap();
            let dv = (fp.position - fm.position) / (2.0 * h);
            let dw = (fp.orientation * fm.orientation.inverse()).scaled_axis() / (2.0 * h);
            for r in 0..3 {
                assert!((jac[(r, j)] - dv[r]).abs() < 1e-4);
                assert!((jac[(r + 3, j)] - dw[r]).abs() < 1e-4);
            }
        }
    }
}

#[test]
fn distal_joint_does_not_translate_grasp_frame_at_home() {
    let arm = ArmModel::default_arm();
    let jac = arm.jacobian(&arm.home).unwrap();
    let col: Vector3<f64> = jac.fixed_view::<3, 1>(0, 6).into_owned();
    assert!(col.norm() < 1e-12);
    assert!(jac.fixed_view::<3, 1>(0, 5).norm() > 0.05);
}

#[test]
fn jacobian_rotates_with_the_base() {
    let arm = ArmModel::default_arm();
    let base = Pose::from_xyz_rpy([0.1, 0.2, -0.3], [0.3, 0.5, -0.7]);
    let r: Matrix3<f64> = base.rotation_matrix();
    let moved = arm.clone().with_base(base);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let q = random_q(&arm, &mut rng, 0.0);
        let j0 = arm.jacobian(&q).unwrap();
        let j1 = moved.jacobian(&q).unwrap();
        for c in 0..7 {
            let v: Vector3<f64> = j0.fixed_view::<3, 1>(0, c).into_owned();
            let w: Vector3<f64> = j0.fixed_view::<3, 1>(3, c).into_owned();
            let v1: Vector3<f64> = j1.fixed_view::<3, 1>(0, c).into_owned();
            let w1: Vector3<f64> = j1.fixed_view::<3, 1>(3, c).into_owned();
            assert!((r * v - v1).norm() < 1e-12);
            assert!((r * w - w1).norm() < 1e-12);
        }
    }
}

#[test]
fn ik_fixed_point_returns_seed() {
    let arm = ArmModel::default_arm();
    let target = arm.forward_kinematics(&arm.home).unwrap();
    let q = arm.solve_ik(&target, &arm.home).unwrap();
    assert_eq!(q, arm.home);
}

#[test]
fn ik_recovers_from_perturbed_seed() {
    let arm = ArmModel::default_arm();
    let target = arm.forward_kinematics(&arm.home).unwrap();
    let seed = JointConfig::new(arm.home.0.iter().enumerate().map(|(i, v)| v + if i % 2 == 0 { 0.1 } else { -0.1 }).collect());
    let q = arm.solve_ik(&target, &seed).unwrap();
    let (dp, dr) = arm.forward_kinematics(&q).unwrap().distance_to(&target);
    assert!(dp < 1e-6 && dr < 1e-4);
    assert!(arm.within_limits(&q));
}

#[test]
fn ik_rejects_unreachable_target() {
    let arm = ArmModel::default_arm();
    let target = Pose::from_translation(10.0, 0.0, 0.0);
    assert!(matches!(arm.solve_ik(&target, &arm.home), Err(KinematicsError::NoConvergence { .. })));
}

#[test]
fn fk_ik_round_trip_over_random_configurations() {
    let arm = ArmModel::default_arm();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = Vec::new();
    for case in 0..1000 {
        let q = random_q(&arm, &mut rng, 0.15);
        let target = arm.forward_kinematics(&q).unwrap();
        let seed = JointConfig::new(q.0.iter().map(|v| v + rng.random_range(-0.1..0.1)).collect());
        match arm.solve_ik(&target, &seed) {
            Ok(r) => {
                let (dp, dr) = arm.forward_kinematics(&r).unwrap().distance_to(&target);
                if dp >= 1e-6 || dr >= 1e-4 || !arm.within_limits(&r) {
                    failures.push((case, dp, dr));
                }
            }
            Err(e) => failures.push((case, f64::NAN, {
                let _ = e;
                f64::NAN
            })),
        }
    }
    assert!(failures.is_empty(), "{} failures: {:?}", failures.len(), &failures[..failures.len().min(5)]);
}

#[test]
fn arm_file_round_trips() {
    let arm = ArmModel::default_arm();
    let again = ArmModel::from_toml(&arm.to_toml()).unwrap();
    let q = arm.home.clone();
    let a = arm.forward_kinematics(&q).unwrap();
    let b = again.forward_kinematics(&q).unwrap();
    assert!(a.distance_to(&b).0 < 1e-12);
    assert_eq!(arm.collision_bodies.len(), again.collision_bodies.len());
}

#[test]
fn arm_file_rejects_bad_limits_and_versions() {
    let text = isru_core::kinematics::DEFAULT_ARM_TOML;
    assert!(ArmModel::from_toml(&text.replacen("format_version = 1", "format_version = 9", 1)).is_err());
    let swapped = text.replacen("limits_rad = [-2.8973, 2.8973]", "limits_rad = [2.8973, -2.8973]", 1);
    assert_ne!(swapped, text);
    assert!(ArmModel::from_toml(&swapped).is_err());
}

fn quat() -> impl Strategy<Value = UnitQuaternion<f64>> {
    (-PI..PI, -PI..PI, -PI..PI).prop_map(|(a, b, c)| UnitQuaternion::from_euler_angles(a, b, c))
}

fn pose() -> impl Strategy<Value = Pose> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, quat())
        .prop_map(|(x, y, z, q)| Pose::new(Vector3::new(x, y, z), q))
}

proptest! {
    #[test]
    fn composition_is_associative(a in pose(), b in pose(), c in pose()) {
        let l = a.compose(&b).compose(&c);
        let r = a.compose(&b.compose(&c));
        prop_assert!((l.position - r.position).norm() < 1e-9);
        prop_assert!(orientation_error(&l.orientation, &r.orientation) < 1e-7);
    }

    #[test]
    fn compose_with_inverse_is_identity(p in pose()) {
        let i = p.compose(&p.inverse());
        prop_assert!(i.position.norm() < 1e-9);
        prop_assert!((i.orientation.quaternion().w - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orientation_error_is_symmetric_and_bounded(a in quat(), b in quat()) {
        let e = orientation_error(&a, &b);
        prop_assert!((0.0..=PI + 1e-12).contains(&e));
        prop_assert!((e - orientation_error(&b, &a)).abs() < 1e-12);
        let neg = UnitQuaternion::new_unchecked(-b.into_inner());
        prop_assert!((e - orientation_error(&a, &neg)).abs() < 1e-12);
    }
}

#[test]
fn quaternion_norm_survives_a_million_compositions() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let steps: Vec<Pose> = (0..1000)
        .map(|_| {
            Pose::from_xyz_rpy(
                [rng.random_range(-0.1..0.1), 0.0, 0.0],
                [rng.random_range(-PI..PI), rng.random_range(-1.5..1.5), rng.random_range(-PI..PI)],
            )
        })
        .collect();
    let mut p = Pose::identity();
    let mut worst: f64 = 0.0;
    for i in 0..1_000_000 {
        p = p.compose(&steps[i % steps.len()]);
        p.position = Vector3::zeros();
        worst = worst.max((p.orientation.quaternion().norm() - 1.0).abs());
    }
    assert!(worst <= 1e-9, "norm drift {worst}");
}
