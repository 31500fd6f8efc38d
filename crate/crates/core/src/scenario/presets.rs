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
//! Ready-made scenario configurations.

use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::config::{InitialCommand, ScenarioConfig, ShapeMode};
use super::reference::{ReferenceTrajectory, ScriptedDelta, DEFAULT_HELIX_Z0, DEFAULT_OMEGA, DEFAULT_PERIOD};
use super::virtual_robot::VirtualDelta;
use crate::backbone::ActuationVector;
use crate::error::{Error, Result};
use crate::mppi::ObjectiveWeights;
use crate::obstacle::{MovingSphere, ObstacleSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackShape {
    Circle,
    CurvyEdge,
    Butterfly,
    Ellipse,
    Helix,
}

impl TrackShape {
    pub const ALL: [TrackShape; 5] = [
        Self::Circle,
        Self::CurvyEdge,
        Self::Butterfly,
        Self::Ellipse,
        Self::Helix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Circle => "circle",
            Self::CurvyEdge => "curvy_edge",
            Self::Butterfly => "butterfly",
            Self::Ellipse => "ellipse",
            Self::Helix => "helix",
        }
    }
}

impl FromStr for TrackShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s || t.name().replace('_', "-") == s)
            .ok_or_else(|| Error::Config(format!("unknown tracking shape {s:?}")))
    }
}

/// Trajectory parameters. Circle, curvy edge and helix use `a` as radius;
/// the curvy-edge ripple is `c/2` and the helix descends `c` every 10 s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for ShapeParams {
    fn default() -> Self {
        Self {
            a: 0.05,
            b: 0.04,
            c: 0.015,
        }
    }
}

pub fn trajectory(shape: TrackShape, p: ShapeParams) -> ReferenceTrajectory {
    let omega = DEFAULT_OMEGA;
    match shape {
        TrackShape::Circle => ReferenceTrajectory::Circle { r: p.a, omega, z: 0.13 },
        TrackShape::CurvyEdge => ReferenceTrajectory::CurvyEdge {
            r: p.a,
            eps: 0.5 * p.c,
            c: p.c,
            omega,
            z: 0.13,
        },
        TrackShape::Ellipse => ReferenceTrajectory::Ellipse {
            a: p.a,
            b: p.b,
            c: p.c,
            omega,
            z: 0.13,
        },
        TrackShape::Butterfly => ReferenceTrajectory::Butterfly {
            a: p.a,
            b: p.b,
            c: p.c,
            period: DEFAULT_PERIOD,
            z: 0.1,
        },
        TrackShape::Helix => ReferenceTrajectory::Helix {
            r: p.a,
            alpha: p.c / 10.0,
            omega,
            z0: DEFAULT_HELIX_Z0,
        },
    }
}

pub fn tracking(shape: TrackShape, params: ShapeParams) -> ScenarioConfig {
    ScenarioConfig {
        name: shape.name().into(),
        reference: trajectory(shape, params),
        shape_mode: ShapeMode::None,
        ..Default::default()
    }
}

/// Two spheres swinging through the region swept by the body while the
/// tip follows a 5 cm circle.
pub fn obstacle_obstacles() -> ObstacleSet {
    ObstacleSet {
        obstacles: vec![
            MovingSphere {
                base: Vector3::new(-0.01, 0.0, 0.075),
                direction: Vector3::x(),
                amplitude: 0.02,
                period: 12.0,
                radius: 0.01,
            },
            MovingSphere {
                base: Vector3::new(0.0, 0.0, 0.115),
                direction: Vector3::y(),
                amplitude: 0.015,
                period: 9.0,
                radius: 0.01,
            },
        ],
    }
}

/// Barrier distance used by the avoidance preset. The 2 mm over the 0.02 m
/// safety threshold absorbs linear prediction error between stations.
pub const OBSTACLE_MARGIN_THRESHOLD: f64 = 0.022;

pub fn obstacle_avoidance() -> ScenarioConfig {
    ScenarioConfig {
        name: "obstacles".into(),
        weights: ObjectiveWeights {
            obs_threshold: OBSTACLE_MARGIN_THRESHOLD,
            ..Default::default()
        },
        reference: trajectory(
            TrackShape::Circle,
            ShapeParams {
                a: 0.05,
                ..Default::default()
            },
        ),
        shape_mode: ShapeMode::HoldCurrent,
        obstacles: obstacle_obstacles(),
        points: 16,
        ..Default::default()
    }
}

pub fn shape_reaching(target_q: ActuationVector) -> ScenarioConfig {
    ScenarioConfig {
        name: "reaching".into(),
        reference: ReferenceTrajectory::FixedPoint {
            tip: None,
            target_q: Some(target_q),
        },
        duration: 8.0,
        shape_mode: ShapeMode::Reference,
        initial: InitialCommand::Zero,
        ..Default::default()
    }
}

/// A short scripted session: bend the first segment, then counter-bend the
/// distal one and insert.
pub fn teleop_script() -> Vec<ScriptedDelta> {
    let mut script = Vec::new();
    for i in 0..16 {
        script.push(ScriptedDelta {
            at: 0.5 + 0.25 * i as f64,
            delta: VirtualDelta {
                segment: 1,
                curvature: [0.5, 0.5],
                insertion: 0.0,
            },
        });
    }
    for i in 0..16 {
        script.push(ScriptedDelta {
            at: 5.0 + 0.25 * i as f64,
            delta: VirtualDelta {
                segment: 3,
                curvature: [-0.5, 0.0],
                insertion: 0.001,
            },
        });
    }
    script
}

pub fn teleop() -> ScenarioConfig {
    ScenarioConfig {
        name: "teleop".into(),
        reference: ReferenceTrajectory::VirtualRobot {
            script: teleop_script(),
        },
        duration: 12.0,
        shape_mode: ShapeMode::Reference,
        initial: InitialCommand::Zero,
        ..Default::default()
    }
}

/// Preset by name: a tracking shape, `obstacles`, `reaching` or `teleop`.
pub fn by_name(name: &str) -> Result<ScenarioConfig> {
    match name {
        "obstacles" | "obstacle_avoidance" => Ok(obstacle_avoidance()),
        "reaching" | "shape_reaching" => Ok(shape_reaching(ActuationVector([
            0.01, 0.006, -0.004, -0.005, 0.007, 0.004, -0.006,
        ]))),
        "teleop" => Ok(teleop()),
        other => TrackShape::from_str(other).map(|s| tracking(s, ShapeParams::default())),
    }
}
