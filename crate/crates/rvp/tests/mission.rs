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
use isru_core::geometry::Wrench;
use isru_core::kinematics::ArmModel;
use isru_core::sim::{EnvModel, SimState};
use isru_rvp::*;
use proptest::prelude::*;

use MissionEvent as E;
use MissionPhase as P;

fn run(events: &[MissionEvent]) -> Mission {
    let mut m = Mission::new();
    for e in events {
        m.apply(*e).unwrap();
    }
    m
}

#[test]
fn nominal_sequence_reaches_completion() {
    let mut m = Mission::new();
    assert_eq!(m.state(), MissionState::Active(P::PreCollection));
    assert_eq!(m.apply(E::PlanDone).unwrap(), MissionState::Active(P::PreCollection));
    assert_eq!(m.apply(E::Engaged).unwrap(), MissionState::Active(P::Collection));
    assert_eq!(m.apply(E::GraspOk).unwrap(), MissionState::Active(P::PostCollection));
    assert_eq!(m.apply(E::RetractDone).unwrap(), MissionState::Active(P::PreUtilization));
    assert_eq!(m.apply(E::Engaged).unwrap(), MissionState::Active(P::PreUtilization));
    assert_eq!(m.apply(E::Plan2Done).unwrap(), MissionState::Active(P::Utilization));
    assert_eq!(m.apply(E::InsertOk).unwrap(), MissionState::Active(P::PostUtilization));
    assert_eq!(m.apply(E::ReleaseOk).unwrap(), MissionState::Complete);
}

#[test]
fn guards_reject_out_of_order_events() {
    let mut m = run(&[E::PlanDone, E::Engaged]);
    let err = m.apply(E::ReleaseOk).unwrap_err();
    assert_eq!(err.state, MissionState::Active(P::Collection));
    assert_eq!(m.phase(), Some(P::Collection));
    assert!(Mission::new().apply(E::GraspOk).is_err());
    assert!(Mission::new().apply(E::Plan2Done).is_err());
    // Flags from the collection half do not carry over.
    let mut m = run(&[E::PlanDone, E::Engaged, E::GraspOk, E::RetractDone]);
    assert_eq!(m.apply(E::Plan2Done).unwrap(), MissionState::Active(P::PreUtilization));
}

#[test]
fn abort_latches_failure_from_every_phase() {
    let prefixes: [&[MissionEvent]; 6] = [
        &[],
        &[E::PlanDone, E::Engaged],
        &[E::PlanDone, E::Engaged, E::GraspOk],
        &[E::PlanDone, E::Engaged, E::GraspOk, E::RetractDone],
        &[E::PlanDone, E::Engaged, E::GraspOk, E::RetractDone, E::Plan2Done, E::Engaged],
        &[E::PlanDone, E::Engaged, E::GraspOk, E::RetractDone, E::Plan2Done, E::Engaged, E::InsertOk],
    ];
    for (prefix, phase) in prefixes.iter().zip(P::ALL) {
        let mut m = run(prefix);
        assert_eq!(m.phase(), Some(phase));
        assert_eq!(m.apply(E::Abort).unwrap(), MissionState::Failed);
        assert!(m.apply(E::GraspOk).is_err());
        assert!(m.apply(E::PlanDone).is_err());
        assert_eq!(m.apply(E::Abort).unwrap(), MissionState::Failed);
    }
}

#[test]
fn phase_indices_round_trip() {
    for p in P::ALL {
        assert_eq!(P::from_index(p.index()), Some(p));
    }
    assert_eq!(P::from_index(6), None);
    assert!(P::PreCollection.allows_autonomy() && P::PreUtilization.allows_autonomy());
    assert!(!P::Collection.allows_autonomy());
}

fn event() -> impl Strategy<Value = MissionEvent> {
    prop_oneof![
        Just(E::PlanDone),
        Just(E::Engaged),
        Just(E::GraspOk),
        Just(E::RetractDone),
        Just(E::Plan2Done),
        Just(E::InsertOk),
        Just(E::ReleaseOk),
        Just(E::Abort),
    ]
}

proptest! {
    #[test]
    fn post_utilization_needs_grasp_then_insert(events in prop::collection::vec(event(), 0..40)) {
        let mut m = Mission::new();
        for e in events {
            let _ = m.apply(e);
            if m.phase() == Some(P::PostUtilization) || m.state() == MissionState::Complete {
                let h = m.history();
                let grasp = h.iter().position(|e| *e == E::GraspOk);
                let insert = h.iter().position(|e| *e == E::InsertOk);
                prop_assert!(matches!((grasp, insert), (Some(g), Some(i)) if g < i));
            }
        }
    }
}

#[test]
fn snapshot_shapes_and_hash_are_stable() {
    let arm = ArmModel::default_arm();
    let env = EnvModel::default_env();
    let world = WorldModel::from_env(&env, Some(&env.sample.pose));
    let ee = arm.forward_kinematics(&arm.home).unwrap();
    let sim = SimState::at_rest(ee, env.sample.pose, 0.04);
    let traj = Trajectory::stationary(1, arm.home.clone(), world.hash());
    let snap = |t: Option<&Trajectory>| {
        snapshot_scene(&sim, &Wrench::zero(), &arm, &arm.home, &world, Mission::new().state(), t).unwrap()
    };
    let a = snap(Some(&traj));
    assert_eq!(a.link_poses.len(), arm.dof() + 1);
    assert_eq!(a.planned_path.len(), 1);
    assert_eq!(a.hash(), snap(Some(&traj)).hash());
    assert_ne!(a.hash(), snap(None).hash());
    let json = serde_json::to_string(&a).unwrap();
    let back: SceneSnapshot = serde_json::from_str(&json).unwrap();
    assert_eq!(back, a);
}
