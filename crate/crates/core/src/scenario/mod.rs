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
//! Reference generators, closed-loop runner, metrics, trials and logs.

pub mod config;
pub mod log;
pub mod metrics;
pub mod presets;
pub mod reference;
pub mod runner;
pub mod trials;
pub mod virtual_robot;

pub use config::{InitialCommand, ScenarioConfig, ShapeMode, TimedTask, SCENARIO_SCHEMA_VERSION};
pub use metrics::{command_complexity, compute_metrics, efficiency, settling_time, SeriesRow, Summary};
pub use presets::{ShapeParams, TrackShape};
pub use reference::{ReferenceGenerator, ReferenceSample, ReferenceTrajectory, ScriptedDelta};
pub use runner::{load_model, run_scenario, run_scenario_with_model, shape_error, solve_tip_ik, ScenarioResult};
pub use trials::{Stat, TrialRecord, TrialsReport};
pub use virtual_robot::{VirtualDelta, VirtualRobot};
