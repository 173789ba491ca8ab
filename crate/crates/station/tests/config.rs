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
use isru_rvp::{MissionPhase, MissionState};
use isru_station::{standard_scenarios, ScenarioConfig, ScenarioFile, Session, StationError};

#[test]
fn default_config_builds_a_session_in_pre_collection() {
    let cfg = ScenarioConfig::default();
    assert_eq!(cfg.delay_s, 0.0);
    assert!(cfg.force_feedback);
    let s = Session::new(&cfg, 0).unwrap();
    assert_eq!(s.mission(), MissionState::Active(MissionPhase::PreCollection));
    assert_eq!(s.uplink().delay_ticks(), 0);
    assert_eq!(s.downlink().delay_ticks(), 0);
    assert!(!s.is_engaged());
}

#[test]
fn half_second_delay_is_fifty_ticks_each_way() {
    let cfg = ScenarioConfig::named("C", true, 0.5);
    let s = Session::new(&cfg, 0).unwrap();
    assert_eq!(s.uplink().delay_ticks(), 50);
    assert_eq!(s.downlink().delay_ticks(), 50);
}

fn bad_path(err: StationError) -> String {
    match err {
        StationError::BadConfig { path, .. } => path,
        other => panic!("expected BadConfig, got {other:?}"),
    }
}

#[test]
fn malformed_config_reports_the_field_path() {
    let e = ScenarioConfig::from_toml("name = \"x\"\ndelay_s = \"slow\"\n").unwrap_err();
    assert_eq!(bad_path(e), "delay_s");

    let e = ScenarioConfig::from_toml("[operator]\nservo_speed = true\n").unwrap_err();
    assert_eq!(bad_path(e), "operator.servo_speed");

    let e = ScenarioConfig::from_toml("delay_s = -1.0\n").unwrap_err();
    assert_eq!(bad_path(e), "delay_s");

    let e = ScenarioConfig::from_toml("trials = 0\n").unwrap_err();
    assert_eq!(bad_path(e), "trials");

    let e = ScenarioConfig::from_toml("colour = 3\n").unwrap_err();
    assert!(matches!(e, StationError::BadConfig { .. }));

    let text = "[[scenario]]\nname = \"a\"\n[[scenario]]\nname = \"b\"\n[scenario.operator]\nreaction_delay = \"x\"\n";
    let e = ScenarioFile::from_toml(text).unwrap_err();
    assert_eq!(bad_path(e), "scenario[1].operator.reaction_delay");

    let e = ScenarioFile::from_toml("[[scenario]]\nname = \"a\"\ntick_rate_hz = 0.0\n").unwrap_err();
    assert_eq!(bad_path(e), "scenario[0].tick_rate_hz");
}

#[test]
fn session_creation_rejects_bad_configs() {
    let cfg = ScenarioConfig {
        loss_probability: 1.5,
        ..ScenarioConfig::default()
    };
    assert!(matches!(Session::new(&cfg, 0), Err(StationError::BadConfig { .. })));
}

#[test]
fn partial_config_takes_defaults() {
    let cfg = ScenarioConfig::from_toml("name = \"D\"\ndelay_s = 1.0\n[operator]\nperception_noise = 0.002\n").unwrap();
    assert_eq!(cfg.name, "D");
    assert_eq!(cfg.delay_s, 1.0);
    assert_eq!(cfg.operator.perception_noise, 0.002);
    assert_eq!(cfg.operator.servo_speed, ScenarioConfig::default().operator.servo_speed);
    assert_eq!(cfg.tick_rate_hz, 100.0);
}

#[test]
fn scenario_file_round_trips() {
    let file = ScenarioFile {
        scenarios: standard_scenarios(20, 7),
    };
    let text = file.to_toml();
    assert_eq!(ScenarioFile::from_toml(&text).unwrap(), file);
}

#[test]
fn standard_scenarios_cover_the_four_cases() {
    let s = standard_scenarios(50, 3);
    let rows: Vec<_> = s.iter().map(|c| (c.name.as_str(), c.force_feedback, c.delay_s)).collect();
    assert_eq!(rows, [("A", false, 0.0), ("B", true, 0.0), ("C", true, 0.5), ("D", true, 1.0)]);
    assert!(s.iter().all(|c| c.trials == 50 && c.base_seed == 3));
}

#[test]
fn bundled_scenario_file_loads() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/scenarios.toml");
    let file = ScenarioFile::load(&path).unwrap();
    assert_eq!(file.scenarios, standard_scenarios(50, 0));
}
