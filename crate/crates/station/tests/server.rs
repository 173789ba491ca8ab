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
use std::net::SocketAddr;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use isru_core::geometry::Pose;
use isru_core::sim::{EnvModel, GripperState};
use isru_link::GripperCommand;
use isru_rvp::{MissionPhase, MissionState};
use isru_station::protocol::{read_frame, write_frame, Buttons, RejectReason};
use isru_station::{
    ClientMessage, Client, GoalName, Role, ScenarioConfig, ServeOptions, Server, ServerMessage, Session,
    SessionMode, Snapshot, StationError, StopHandle, PROTOCOL_VERSION,
};
use nalgebra::Vector3;

fn interactive(time_scale: f64) -> ScenarioConfig {
    ScenarioConfig {
        mode: SessionMode::Interactive,
        time_scale,
        ..ScenarioConfig::default()
    }
}

fn start(cfg: &ScenarioConfig, max_ticks: u64) -> (SocketAddr, StopHandle, JoinHandle<Result<Session, StationError>>) {
    let session = Session::new(cfg, 9).unwrap();
    let mut options = ServeOptions::for_session(&session);
    options.max_ticks = Some(max_ticks);
    let server = Server::bind("127.0.0.1:0", session, options).unwrap();
    let addr = server.local_addr().unwrap();
    let stop = server.stop_handle();
    (addr, stop, std::thread::spawn(move || server.run()))
}

fn wait_for(c: &mut Client, what: &str, pred: impl Fn(&Snapshot) -> bool) -> Snapshot {
    for _ in 0..20_000 {
        let s = c.snapshot().unwrap();
        if pred(&s) {
            return s;
        }
    }
    panic!("timed out waiting for {what}");
}

fn phase(s: &Snapshot) -> MissionState {
    s.scene.mission
}

fn ok(c: &mut Client, msg: ClientMessage) -> Option<String> {
    let (ok, detail) = c.request(&msg).unwrap();
    assert!(ok, "{msg:?} failed: {detail:?}");
    detail
}

fn stylus(delta: Vector3<f64>, buttons: Buttons) -> ClientMessage {
    ClientMessage::StylusInput {
        delta: Pose::from_translation(delta.x, delta.y, delta.z),
        buttons,
    }
}

/// Puts the stylus high in the device workspace, then aligns and engages.
fn engage(c: &mut Client, into: MissionPhase) {
    let at = c.latest.as_ref().unwrap().station.stylus.position;
    ok(c, stylus(Vector3::new(0.0, 0.045, 0.0) - at, Buttons::default()));
    ok(
        c,
        stylus(
            Vector3::zeros(),
            Buttons {
                align: true,
                engage: true,
                ..Buttons::default()
            },
        ),
    );
    wait_for(c, "engagement", |s| s.station.engaged && phase(s) == MissionState::Active(into));
}

fn plan_and_execute(c: &mut Client, goal: GoalName) {
    ok(c, ClientMessage::PlanRequest { goal });
    let report = ok(c, ClientMessage::RehearseRequest).unwrap();
    assert!(report.contains("\"collision_free\":true"), "{report}");
    ok(c, ClientMessage::ExecuteRequest);
    wait_for(c, "plan completion", |s| s.station.plan_completed);
}

/// Moves the stylus so that `point(snapshot)` reaches `target`.
fn servo(c: &mut Client, target: Vector3<f64>, tol: f64, point: impl Fn(&Snapshot) -> Vector3<f64>) {
    let mut settled = 0;
    for _ in 0..5000 {
        let s = c.latest.clone().unwrap();
        let err = target - point(&s);
        if err.norm() < tol {
            settled += 1;
            if settled >= 5 {
                return;
            }
        } else {
            settled = 0;
        }
        let step = err * 0.3;
        let step = if step.norm() > 0.003 { step.normalize() * 0.003 } else { step };
        let device = s.station.camera_rotation.inverse() * step;
        ok(c, stylus(device, Buttons::default()));
        c.snapshot().unwrap();
    }
    panic!("servo did not converge to {target:?}");
}

#[test]
fn headless_client_runs_the_whole_mission() {
    let env = EnvModel::default_env();
    let (addr, stop, server) = start(&interactive(40.0), 200_000);
    let mut c = Client::connect(addr, Role::Controller).unwrap();
    c.snapshot().unwrap();

    plan_and_execute(&mut c, GoalName::Fetch);
    engage(&mut c, MissionPhase::Collection);
    let sample = env.sample.pose.position;
    servo(&mut c, sample, 0.0015, |s| s.scene.ee_pose.position);
    ok(&mut c, ClientMessage::GripperCmd { command: GripperCommand::Close });
    wait_for(&mut c, "grasp", |s| phase(s) == MissionState::Active(MissionPhase::PostCollection));
    let s = wait_for(&mut c, "retract", |s| phase(s) == MissionState::Active(MissionPhase::PreUtilization));
    assert_eq!(s.scene.gripper, GripperState::Holding);

    plan_and_execute(&mut c, GoalName::Insert);
    engage(&mut c, MissionPhase::Utilization);
    let half = env.sample.half_length();
    let tip = move |s: &Snapshot| s.scene.sample_pose.transform_point(&Vector3::new(0.0, 0.0, -half));
    let mouth = env.slot.pose.position;
    let above = tip(c.latest.as_ref().unwrap());
    servo(&mut c, Vector3::new(mouth.x, mouth.y, above.z), 0.0004, tip);
    servo(&mut c, mouth - Vector3::new(0.0, 0.0, 0.045), 0.001, tip);
    ok(&mut c, ClientMessage::DeclareInserted);
    wait_for(&mut c, "release", |s| phase(s) == MissionState::Complete);
    assert!(c
        .events
        .iter()
        .any(|e| e.event == isru_station::SessionEvent::Mission {
            event: isru_rvp::MissionEvent::InsertOk,
            state: MissionState::Active(MissionPhase::PostUtilization)
        }));

    stop.stop();
    let session = server.join().unwrap().unwrap();
    assert!(session.assembled());
    assert!(!session.safety_tripped());
}

#[test]
fn second_controller_is_rejected_and_viewers_are_not() {
    let (addr, stop, server) = start(&interactive(1.0), 100_000);
    let first = Client::connect(addr, Role::Controller).unwrap();
    match Client::connect(addr, Role::Controller) {
        Err(StationError::EndpointBusy(_)) => {}
        other => panic!("expected EndpointBusy, got {:?}", other.map(|c| c.role)),
    }
    let mut viewer = Client::connect(addr, Role::Viewer).unwrap();
    let (ok, detail) = viewer.request(&ClientMessage::EngageRequest).unwrap();
    assert!(!ok);
    assert!(detail.unwrap().contains("view-only"));

    drop(first);
    let deadline = Instant::now() + Duration::from_secs(5);
    let again = loop {
        match Client::connect(addr, Role::Controller) {
            Ok(c) => break c,
            Err(StationError::EndpointBusy(_)) if Instant::now() < deadline => {
                std::thread::sleep(Duration::from_millis(10))
            }
            Err(e) => panic!("{e}"),
        }
    };
    assert_eq!(again.role, Role::Controller);
    stop.stop();
    server.join().unwrap().unwrap();
}

#[test]
fn viewer_sees_the_controller_stream() {
    let (addr, stop, server) = start(&interactive(20.0), 100_000);
    let mut controller = Client::connect(addr, Role::Controller).unwrap();
    let mut viewer = Client::connect(addr, Role::Viewer).unwrap();
    ok(&mut controller, ClientMessage::PlanRequest { goal: GoalName::Fetch });
    ok(&mut controller, ClientMessage::RehearseRequest);
    ok(&mut controller, ClientMessage::ExecuteRequest);
    let a: Vec<Snapshot> = (0..60).map(|_| controller.snapshot().unwrap()).collect();
    let b: Vec<Snapshot> = (0..60).map(|_| viewer.snapshot().unwrap()).collect();
    stop.stop();
    server.join().unwrap().unwrap();

    let mut common = 0;
    for s in &a {
        if let Some(t) = b.iter().find(|t| t.station.tick == s.station.tick) {
            assert_eq!(serde_json::to_string(s).unwrap(), serde_json::to_string(t).unwrap());
            common += 1;
        }
    }
    assert!(common >= 30, "only {common} common snapshots");
    assert!(a.iter().any(|s| !s.scene.planned_path.is_empty()));
}

#[test]
fn snapshots_are_paced_at_least_ten_hertz() {
    let (addr, stop, server) = start(&interactive(1.0), 100_000);
    let mut c = Client::connect(addr, Role::Viewer).unwrap();
    let first = c.snapshot().unwrap();
    let t0 = Instant::now();
    let mut last = first.station.tick;
    let mut n = 0;
    while t0.elapsed() < Duration::from_millis(600) {
        let s = c.snapshot().unwrap();
        assert!(s.station.tick > last);
        last = s.station.tick;
        n += 1;
    }
    let wall = t0.elapsed().as_secs_f64();
    let logical = (last - first.station.tick) as f64 / 100.0;
    stop.stop();
    server.join().unwrap().unwrap();
    assert!(n as f64 / wall >= 10.0, "{n} snapshots in {wall} s");
    assert!((logical - wall).abs() < 0.25, "logical {logical} s vs wall {wall} s");
}

#[test]
fn unknown_verbs_and_bad_hellos_are_rejected() {
    let (addr, stop, server) = start(&interactive(1.0), 100_000);
    let mut c = Client::connect(addr, Role::Controller).unwrap();
    c.send_raw(r#"{"verb": "teleport", "to": [0, 0, 0]}"#).unwrap();
    let (ok, _) = c.reply().unwrap();
    assert!(!ok);
    c.send_raw(r#"{"verb": "plan_request", "goal": "moon"}"#).unwrap();
    let (ok, _) = c.reply().unwrap();
    assert!(!ok);
    c.send_raw(r#"{"verb": "link", "message": {"kind": "pose_ref", "pose": {"position": [0,0,0], "orientation": [0,0,0,1]}}}"#)
        .unwrap();
    let (ok, detail) = c.reply().unwrap();
    assert!(!ok, "{detail:?}");
    let (ok, _) = c.request(&ClientMessage::GripperCmd { command: GripperCommand::Close }).unwrap();
    assert!(!ok, "gripper outside teleoperation");

    let mut raw = std::net::TcpStream::connect(addr).unwrap();
    write_frame(
        &mut raw,
        &ClientMessage::Hello {
            version: PROTOCOL_VERSION + 1,
            role: Role::Viewer,
        },
    )
    .unwrap();
    let reply: Option<ServerMessage> = read_frame(&mut raw).unwrap();
    assert!(matches!(
        reply,
        Some(ServerMessage::Rejected {
            reason: RejectReason::VersionMismatch,
            ..
        })
    ));

    let mut raw = std::net::TcpStream::connect(addr).unwrap();
    write_frame(&mut raw, &ClientMessage::EngageRequest).unwrap();
    let reply: Option<ServerMessage> = read_frame(&mut raw).unwrap();
    assert!(matches!(
        reply,
        Some(ServerMessage::Rejected {
            reason: RejectReason::BadHello,
            ..
        })
    ));
    stop.stop();
    server.join().unwrap().unwrap();
}

#[test]
fn scripted_sessions_cannot_be_served() {
    let s = Session::new(&ScenarioConfig::default(), 0).unwrap();
    let opts = ServeOptions::for_session(&s);
    assert!(matches!(Server::bind("127.0.0.1:0", s, opts), Err(StationError::NotAllowed(_))));
}

#[test]
fn bundled_interactive_config_loads() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/interactive.toml");
    let cfg = ScenarioConfig::from_toml(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(cfg.mode, SessionMode::Interactive);
    Session::new(&cfg, 0).unwrap();
}

#[test]
fn snapshots_round_trip_through_json() {
    let mut s = Session::new(&ScenarioConfig::default(), 0).unwrap();
    isru_station::plan_rehearse_execute(&mut s, GoalName::Fetch).unwrap();
    for i in 0..300 {
        s.step();
        if i % 37 == 0 {
            let snap = s.snapshot();
            let text = serde_json::to_string(&ServerMessage::Snapshot(Box::new(snap.clone()))).unwrap();
            let back: ServerMessage = serde_json::from_str(&text).unwrap();
            assert_eq!(back, ServerMessage::Snapshot(Box::new(snap)));
        }
    }
}
