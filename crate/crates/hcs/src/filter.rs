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
use isru_core::geometry::{canonical, Pose};

use crate::HcsError;

/// First-order low-pass on translation; orientation slerps toward the raw
/// sample with the same coefficient. Seeds itself with the first sample.
#[derive(Clone, Debug)]
pub struct TremorFilter {
    cutoff: f64,
    alpha: f64,
    state: Option<Pose>,
}

impl TremorFilter {
    pub fn new(cutoff: f64, dt: f64) -> Result<Self, HcsError> {
        if !(cutoff.is_finite() && cutoff > 0.0 && dt.is_finite() && dt > 0.0) {
            return Err(HcsError::InvalidConfig("tremor cutoff and dt must be positive".into()));
        }
        Ok(Self {
            cutoff,
            alpha: 1.0 - (-2.0 * std::f64::consts::PI * cutoff * dt).exp(),
            state: None,
        })
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    /// Per-sample smoothing coefficient.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn time_constant(&self) -> f64 {
        1.0 / (2.0 * std::f64::consts::PI * self.cutoff)
    }

    pub fn reset(&mut self, pose: &Pose) {
        self.state = Some(*pose);
    }

    pub fn filter(&mut self, raw: &Pose) -> Pose {
        let next = match self.state {
            None => *raw,
            Some(s) => {
                let position = s.position + (raw.position - s.position) * self.alpha;
                let orientation = s
                    .orientation
                    .try_slerp(&raw.orientation, self.alpha, 1e-12)
                    .unwrap_or(raw.orientation);
                Pose::new(position, canonical(orientation))
            }
        };
        self.state = Some(next);
        next
    }
}
