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
//! Scenario configuration files.

use std::path::{Path, PathBuf};

use isru_core::kinematics::ArmModel;
use isru_core::sim::EnvModel;
use isru_hcs::MappingConfig;
use isru_operator::OperatorParams;
use serde::{Deserialize, Serialize};

use crate::StationError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    #[default]
    Scripted,
    Interactive,
}

/// Time budgets (s of simulated time).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub fetch_s: f64,
    pub assembly_s: f64,
    pub trial_s: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            fetch_s: 120.0,
            assembly_s: 120.0,
            trial_s: 420.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub force_feedback: bool,
    /// One-way delay (s).
    pub delay_s: f64,
    pub jitter_s: f64,
    pub loss_probability: f64,
    pub tick_rate_hz: f64,
    pub trials: u32,
    pub base_seed: u64,
    /// Operator parameters; `uses_force_feedback` and `seed` are set per trial.
    pub operator: OperatorParams,
    pub mapping: MappingConfig,
    pub limits: Limits,
    pub mode: SessionMode,
    /// Wall-clock speed-up of interactive sessions.
    pub time_scale: f64,
    /// Snapshot broadcast rate of interactive sessions (Hz).
    pub snapshot_rate_hz: f64,
    pub env_path: Option<PathBuf>,
    pub arm_path: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            force_feedback: true,
            delay_s: 0.0,
            jitter_s: 0.0,
            loss_probability: 0.0,
            tick_rate_hz: 100.0,
            trials: 50,
            base_seed: 0,
            operator: OperatorParams::default(),
            mapping: MappingConfig::default(),
            limits: Limits::default(),
            mode: SessionMode::Scripted,
            time_scale: 1.0,
            snapshot_rate_hz: 20.0,
            env_path: None,
            arm_path: None,
        }
    }
}

fn bad(path: &str, reason: impl Into<String>) -> StationError {
    StationError::BadConfig {
        path: path.into(),
        reason: reason.into(),
    }
}

impl ScenarioConfig {
    pub fn named(name: &str, force_feedback: bool, delay_s: f64) -> Self {
        Self {
            name: name.into(),
            force_feedback,
            delay_s,
            ..Self::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, StationError> {
        let cfg: Self = parse_toml(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a single-scenario file; relative model paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, StationError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("", format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config serializes")
    }

    pub fn validate(&self) -> Result<(), StationError> {
        if self.trials < 1 {
            return Err(bad("trials", "must be at least 1"));
        }
        if !(self.delay_s.is_finite() && self.delay_s >= 0.0) {
            return Err(bad("delay_s", "must be non-negative"));
        }
        if !(self.jitter_s.is_finite() && self.jitter_s >= 0.0 && self.jitter_s <= self.delay_s) {
            return Err(bad("jitter_s", "must lie in [0, delay_s]"));
        }
        if !(0.0..=1.0).contains(&self.loss_probability) {
            return Err(bad("loss_probability", "must lie in [0, 1]"));
        }
        if !(self.tick_rate_hz.is_finite() && self.tick_rate_hz > 0.0) {
            return Err(bad("tick_rate_hz", "must be positive"));
        }
        if !(self.time_scale.is_finite() && self.time_scale > 0.0) {
            return Err(bad("time_scale", "must be positive"));
        }
        if !(self.snapshot_rate_hz.is_finite() && self.snapshot_rate_hz > 0.0) {
            return Err(bad("snapshot_rate_hz", "must be positive"));
        }
        let l = &self.limits;
        for (p, v) in [("limits.fetch_s", l.fetch_s), ("limits.assembly_s", l.assembly_s), ("limits.trial_s", l.trial_s)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(bad(p, "must be positive"));
            }
        }
        self.operator.validate().map_err(|e| match e {
            isru_operator::OperatorError::InvalidParam { field, reason } => bad(&format!("operator.{field}"), reason),
        })?;
        self.mapping
            .validate()
            .map_err(|e| bad("mapping", e.to_string()))?;
        Ok(())
    }

    /// Resolves relative asset paths against `dir`.
    pub fn resolve_paths(&mut self, dir: &Path) {
        for p in [&mut self.env_path, &mut self.arm_path].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }

    pub fn load_env(&self) -> Result<EnvModel, StationError> {
        match &self.env_path {
            None => Ok(EnvModel::default_env()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| bad("env_path", format!("{}: {e}", p.display())))?;
                EnvModel::from_toml(&text).map_err(|e| bad("env_path", e.to_string()))
            }
        }
    }

    pub fn load_arm(&self) -> Result<ArmModel, StationError> {
        match &self.arm_path {
            None => Ok(ArmModel::default_arm()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| bad("arm_path", format!("{}: {e}", p.display())))?;
                ArmModel::from_toml(&text).map_err(|e| bad("arm_path", e.to_string()))
            }
        }
    }

    /// Operator parameters for one trial.
    pub fn operator_for(&self, seed: u64) -> OperatorParams {
        OperatorParams {
            uses_force_feedback: self.force_feedback,
            seed,
            ..self.operator.clone()
        }
    }
}

/// A list of scenarios, as stored in a campaign file (`[[scenario]]` tables).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(rename = "scenario")]
    pub scenarios: Vec<ScenarioConfig>,
}

impl ScenarioFile {
    pub fn from_toml(text: &str) -> Result<Self, StationError> {
        let file: Self = parse_toml(text)?;
        if file.scenarios.is_empty() {
            return Err(bad("scenario", "at least one scenario is required"));
        }
        for (i, s) in file.scenarios.iter().enumerate() {
            s.validate().map_err(|e| match e {
                StationError::BadConfig { path, reason } => bad(&format!("scenario[{i}].{path}"), reason),
                other => other,
            })?;
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, StationError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("", format!("{}: {e}", path.display())))?;
        let mut file = Self::from_toml(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for s in &mut file.scenarios {
            s.resolve_paths(dir);
        }
        Ok(file)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario file serializes")
    }
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, StationError> {
    let de = toml::Deserializer::parse(text).map_err(|e| bad("", e.to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        bad(if path == "." { "" } else { &path }, e.into_inner().message().to_string())
    })
}

/// The four standard scenarios: A without force feedback, B with it, C and D
/// with it under 0.5 s and 1.0 s one-way delay.
pub fn standard_scenarios(trials: u32, base_seed: u64) -> Vec<ScenarioConfig> {
    [("A", false, 0.0), ("B", true, 0.0), ("C", true, 0.5), ("D", true, 1.0)]
        .into_iter()
        .map(|(name, ff, d)| ScenarioConfig {
            trials,
            base_seed,
            ..ScenarioConfig::named(name, ff, d)
        })
        .collect()
}
