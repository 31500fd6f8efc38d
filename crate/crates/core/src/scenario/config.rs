/*
Copyright 2026 The tdcr Authors

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
//! Versioned scenario configuration, readable from JSON or TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::reference::ReferenceTrajectory;
use crate::backbone::{ActuationVector, SegmentParams};
use crate::error::{Error, Result};
use crate::mppi::{MppiConfig, ObjectiveWeights};
use crate::obstacle::ObstacleSet;
use crate::plant::Plant;
use crate::task::TaskDescriptor;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

/// Source of the shape target handed to the controller.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeMode {
    /// Tip-only objective.
    None,
    /// The reference's own shape, when it has one.
    #[default]
    Reference,
    /// The measured shape at the start of each step, penalizing body motion.
    HoldCurrent,
}

/// Starting command of the plant.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCommand {
    Zero,
    /// Solve for a command that puts the plant tip on the reference at t = 0.
    #[default]
    MatchReference,
    Given {
        q: ActuationVector,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedTask {
    pub at: f64,
    pub task: TaskDescriptor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    pub reference: ReferenceTrajectory,
    /// Simulated seconds.
    pub duration: f64,
    /// Control steps per second; sets `mppi.control_dt`.
    pub control_rate: f64,
    pub seed: u64,
    /// Stations in the downsampled state.
    pub points: usize,
    pub segment: SegmentParams,
    pub mppi: MppiConfig,
    pub weights: ObjectiveWeights,
    pub shape_mode: ShapeMode,
    pub initial: InitialCommand,
    pub tasks: Vec<TimedTask>,
    pub plant: Plant,
    /// Residual checkpoint for the controller's model; nominal when absent.
    pub checkpoint: Option<PathBuf>,
    pub obstacles: ObstacleSet,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            schema_version: SCENARIO_SCHEMA_VERSION,
            name: "circle".into(),
            reference: ReferenceTrajectory::Circle {
                r: 0.05,
                omega: super::reference::DEFAULT_OMEGA,
                z: 0.13,
            },
            duration: 20.0,
            control_rate: 50.0,
            seed: 0,
            points: 10,
            segment: SegmentParams::default(),
            mppi: MppiConfig::default(),
            weights: ObjectiveWeights::default(),
            shape_mode: ShapeMode::default(),
            initial: InitialCommand::default(),
            tasks: Vec::new(),
            plant: Plant::Nominal,
            checkpoint: None,
            obstacles: ObstacleSet::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate
    }

    pub fn steps(&self) -> usize {
        (self.duration * self.control_rate - 1e-9).ceil().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCENARIO_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if !(self.duration > 0.0) || !(self.control_rate > 0.0) {
            return Err(Error::Config("duration and control_rate must be positive".into()));
        }
        if (self.mppi.control_dt - self.dt()).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "mppi.control_dt {} disagrees with control_rate {}",
                self.mppi.control_dt, self.control_rate
            )));
        }
        if self.points < 2 {
            return Err(Error::TooFewPoints {
                min: 2,
                got: self.points,
            });
        }
        self.segment.validate()?;
        self.mppi.validate()?;
        self.weights.validate()?;
        self.reference.validate()?;
        for t in &self.tasks {
            t.task.validate()?;
        }
        ObstacleSet::new(self.obstacles.obstacles.clone())?;
        Ok(())
    }

    /// Sets the rate and keeps `mppi.control_dt` consistent with it.
    pub fn with_rate(mut self, rate: f64) -> Self {
        self.control_rate = rate;
        self.mppi.control_dt = 1.0 / rate;
        self
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    /// `.toml` files parse as TOML, anything else as JSON.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml_str(&text),
            _ => Self::from_json_str(&text),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        ScenarioConfig::default().validate().unwrap();
        assert_eq!(ScenarioConfig::default().steps(), 1000);
    }

    #[test]
    fn json_round_trip() {
        let c = ScenarioConfig::default();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(ScenarioConfig::from_json_str(&s).unwrap(), c);
    }

    #[test]
    fn toml_minimal() {
        let c = ScenarioConfig::from_toml_str(
            r#"
            name = "ellipse"
            seed = 4
            duration = 2.0

            [reference]
            shape = "ellipse"
            a = 0.05
            b = 0.03
            c = 0.01

            [weights]
            w_tip = 50.0
            "#,
        )
        .unwrap();
        assert_eq!(c.reference.name(), "ellipse");
        assert_eq!(c.weights.w_tip, 50.0);
        assert_eq!(c.weights.w_obs, 1e5);
        assert_eq!(c.steps(), 100);
    }

    #[test]
    fn rejects_unknown_and_mismatched() {
        assert!(ScenarioConfig::from_json_str(r#"{"speed": 3}"#).is_err());
        assert!(ScenarioConfig::from_json_str(r#"{"schema_version": 2}"#).is_err());
        assert!(ScenarioConfig::from_json_str(r#"{"control_rate": 100.0}"#).is_err());
        let c = ScenarioConfig::default().with_rate(100.0);
        c.validate().unwrap();
    }
}
