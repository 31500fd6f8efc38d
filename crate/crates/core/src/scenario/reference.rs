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
//! Parametric tip references and shape targets.

use std::f64::consts::PI;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::virtual_robot::{VirtualDelta, VirtualRobot};
use crate::backbone::{downsample_state, reconstruct_backbone, ActuationBounds, ActuationVector, SegmentParams};
use crate::error::{Error, Result};

/// Default angular rate: one revolution per 20 s.
pub const DEFAULT_OMEGA: f64 = 2.0 * PI / 20.0;
pub const DEFAULT_PERIOD: f64 = 10.0;
pub const DEFAULT_HELIX_Z0: f64 = 0.14;

fn default_omega() -> f64 {
    DEFAULT_OMEGA
}
fn default_period() -> f64 {
    DEFAULT_PERIOD
}
fn default_plane() -> f64 {
    0.13
}
fn default_butterfly_z() -> f64 {
    0.1
}
fn default_helix_z0() -> f64 {
    DEFAULT_HELIX_Z0
}

/// Operator command replayed at time `at`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedDelta {
    pub at: f64,
    pub delta: VirtualDelta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceTrajectory {
    /// `(r cos ωt, r sin ωt, z)`
    Circle {
        r: f64,
        #[serde(default = "default_omega")]
        omega: f64,
        #[serde(default = "default_plane")]
        z: f64,
    },
    /// `(r cos ωt, r sin ωt + ε cos 3ωt, z + c|sin 2ωt|)`
    CurvyEdge {
        r: f64,
        eps: f64,
        c: f64,
        #[serde(default = "default_omega")]
        omega: f64,
        #[serde(default = "default_plane")]
        z: f64,
    },
    /// `(a cos ωt, b sin ωt, z + c sin(ωt/2))`
    Ellipse {
        a: f64,
        b: f64,
        c: f64,
        #[serde(default = "default_omega")]
        omega: f64,
        #[serde(default = "default_plane")]
        z: f64,
    },
    /// `(a sin 2πt/T, b cos πt/T, z + c sin 2πt/T)`
    Butterfly {
        a: f64,
        b: f64,
        c: f64,
        #[serde(default = "default_period")]
        period: f64,
        #[serde(default = "default_butterfly_z")]
        z: f64,
    },
    /// `(r sin ωt, r cos ωt, z0 − αt)`
    Helix {
        r: f64,
        alpha: f64,
        #[serde(default = "default_omega")]
        omega: f64,
        #[serde(default = "default_helix_z0")]
        z0: f64,
    },
    /// Constant target. With `target_q` the full nominal shape at that
    /// actuation is also a target and `tip` may be omitted.
    FixedPoint {
        #[serde(default)]
        tip: Option<[f64; 3]>,
        #[serde(default)]
        target_q: Option<ActuationVector>,
    },
    /// Shape of a virtual robot driven by a command script.
    VirtualRobot {
        #[serde(default)]
        script: Vec<ScriptedDelta>,
    },
}

impl ReferenceTrajectory {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Circle { .. } => "circle",
            Self::CurvyEdge { .. } => "curvy_edge",
            Self::Ellipse { .. } => "ellipse",
            Self::Butterfly { .. } => "butterfly",
            Self::Helix { .. } => "helix",
            Self::FixedPoint { .. } => "fixed_point",
            Self::VirtualRobot { .. } => "virtual_robot",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |vals: &[f64]| vals.iter().all(|v| v.is_finite());
        let ok = match self {
            Self::Circle { r, omega, z } => finite(&[*r, *omega, *z]),
            Self::CurvyEdge { r, eps, c, omega, z } => finite(&[*r, *eps, *c, *omega, *z]),
            Self::Ellipse { a, b, c, omega, z } => finite(&[*a, *b, *c, *omega, *z]),
            Self::Butterfly { a, b, c, period, z } => finite(&[*a, *b, *c, *z]) && *period > 0.0,
            Self::Helix { r, alpha, omega, z0 } => finite(&[*r, *alpha, *omega, *z0]),
            Self::FixedPoint { tip, target_q } => {
                tip.is_some_and(|t| finite(&t)) || target_q.is_some_and(|q| q.is_finite())
            }
            Self::VirtualRobot { script } => script.iter().all(|s| s.at >= 0.0 && s.delta.validate().is_ok()),
        };
        if !ok {
            return Err(Error::Config(format!("invalid {} reference", self.name())));
        }
        Ok(())
    }

    /// Tip target of the analytic shapes; `None` for shape-derived references.
    pub fn analytic_tip(&self, t: f64) -> Option<Vector3<f64>> {
        Some(match *self {
            Self::Circle { r, omega, z } => Vector3::new(r * (omega * t).cos(), r * (omega * t).sin(), z),
            Self::CurvyEdge { r, eps, c, omega, z } => Vector3::new(
                r * (omega * t).cos(),
                r * (omega * t).sin() + eps * (3.0 * omega * t).cos(),
                z + c * (2.0 * omega * t).sin().abs(),
            ),
            Self::Ellipse { a, b, c, omega, z } => Vector3::new(
                a * (omega * t).cos(),
                b * (omega * t).sin(),
                z + c * (0.5 * omega * t).sin(),
            ),
            Self::Butterfly { a, b, c, period, z } => {
                let p = 2.0 * PI * t / period;
                Vector3::new(a * p.sin(), b * (PI * t / period).cos(), z + c * p.sin())
            }
            Self::Helix { r, alpha, omega, z0 } => {
                Vector3::new(r * (omega * t).sin(), r * (omega * t).cos(), z0 - alpha * t)
            }
            Self::FixedPoint { tip: Some(tip), .. } => Vector3::from(tip),
            _ => return None,
        })
    }

    pub fn has_shape(&self) -> bool {
        matches!(
            self,
            Self::FixedPoint { target_q: Some(_), .. } | Self::VirtualRobot { .. }
        )
    }
}

/// Reference at one instant. `shape` has the layout of the downsampled state.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSample {
    pub tip: Vector3<f64>,
    pub shape: Option<DVector<f64>>,
}

/// Evaluates a trajectory, including shape targets that need kinematics.
#[derive(Clone, Debug)]
pub struct ReferenceGenerator {
    trajectory: ReferenceTrajectory,
    params: SegmentParams,
    bounds: ActuationBounds,
    points: usize,
    fixed: Option<ReferenceSample>,
}

impl ReferenceGenerator {
    pub fn new(
        trajectory: ReferenceTrajectory,
        params: SegmentParams,
        bounds: ActuationBounds,
        points: usize,
    ) -> Result<Self> {
        trajectory.validate()?;
        let fixed = match &trajectory {
            ReferenceTrajectory::FixedPoint { tip, target_q } => Some(match target_q {
                Some(q) => {
                    let curve = reconstruct_backbone(q, &params)?;
                    let shape = downsample_state(&curve, points)?;
                    ReferenceSample {
                        tip: tip.map(Vector3::from).unwrap_or_else(|| curve.tip()),
                        shape: Some(shape),
                    }
                }
                None => ReferenceSample {
                    tip: Vector3::from(tip.expect("validated")),
                    shape: None,
                },
            }),
            _ => None,
        };
        Ok(Self {
            trajectory,
            params,
            bounds,
            points,
            fixed,
        })
    }

    pub fn trajectory(&self) -> &ReferenceTrajectory {
        &self.trajectory
    }

    /// Virtual robot after every scripted command up to and including `t`.
    pub fn virtual_robot_at(&self, t: f64) -> Result<Option<VirtualRobot>> {
        let ReferenceTrajectory::VirtualRobot { script } = &self.trajectory else {
            return Ok(None);
        };
        let mut robot = VirtualRobot::new(self.params, self.bounds.clone());
        for s in script.iter().filter(|s| s.at <= t) {
            robot.apply(&s.delta)?;
        }
        Ok(Some(robot))
    }

    pub fn sample(&self, t: f64) -> Result<ReferenceSample> {
        if !(t >= 0.0) {
            return Err(Error::Config(format!("reference time must be non-negative, got {t}")));
        }
        if let Some(f) = &self.fixed {
            return Ok(f.clone());
        }
        if let Some(robot) = self.virtual_robot_at(t)? {
            let curve = robot.backbone()?;
            return Ok(ReferenceSample {
                tip: curve.tip(),
                shape: Some(downsample_state(&curve, self.points)?),
            });
        }
        Ok(ReferenceSample {
            tip: self.trajectory.analytic_tip(t).expect("analytic shape"),
            shape: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tip(r: &ReferenceTrajectory, t: f64) -> Vector3<f64> {
        r.analytic_tip(t).unwrap()
    }

    #[test]
    fn circle_starts_on_x_axis() {
        let c = ReferenceTrajectory::Circle {
            r: 0.05,
            omega: DEFAULT_OMEGA,
            z: 0.13,
        };
        assert_eq!(tip(&c, 0.0), Vector3::new(0.05, 0.0, 0.13));
    }

    #[test]
    fn helix_without_offset() {
        let h = ReferenceTrajectory::Helix {
            r: 0.05,
            alpha: 0.002,
            omega: DEFAULT_OMEGA,
            z0: 0.0,
        };
        assert_eq!(tip(&h, 0.0), Vector3::new(0.0, 0.05, 0.0));
        assert!((tip(&h, 5.0).z + 0.01).abs() < 1e-15);
    }

    #[test]
    fn butterfly_start() {
        let b = ReferenceTrajectory::Butterfly {
            a: 0.04,
            b: 0.03,
            c: 0.015,
            period: 10.0,
            z: 0.1,
        };
        assert_eq!(tip(&b, 0.0), Vector3::new(0.0, 0.03, 0.1));
    }

    #[test]
    fn curvy_edge_and_ellipse() {
        let ce = ReferenceTrajectory::CurvyEdge {
            r: 0.05,
            eps: 0.01,
            c: 0.02,
            omega: 1.0,
            z: 0.13,
        };
        let t = PI / 4.0;
        let p = tip(&ce, t);
        assert!((p.z - 0.15).abs() < 1e-15);
        assert!((p.y - (0.05 * t.sin() + 0.01 * (3.0 * t).cos())).abs() < 1e-15);
        let el = ReferenceTrajectory::Ellipse {
            a: 0.06,
            b: 0.03,
            c: 0.01,
            omega: 1.0,
            z: 0.13,
        };
        assert!((tip(&el, PI).z - 0.14).abs() < 1e-15);
        assert!((tip(&el, PI).x + 0.06).abs() < 1e-15);
    }

    #[test]
    fn parses_tagged_form() {
        let r: ReferenceTrajectory = serde_json::from_str(r#"{"shape":"circle","r":0.05}"#).unwrap();
        assert_eq!(
            r,
            ReferenceTrajectory::Circle {
                r: 0.05,
                omega: DEFAULT_OMEGA,
                z: 0.13
            }
        );
        assert!(serde_json::from_str::<ReferenceTrajectory>(r#"{"shape":"square","r":0.05}"#).is_err());
        assert!(serde_json::from_str::<ReferenceTrajectory>(r#"{"shape":"circle","r":0.05,"q":1}"#).is_err());
    }

    #[test]
    fn fixed_point_shape_matches_backbone() {
        let q = ActuationVector([0.01, 0.003, -0.002, 0.004, 0.0, -0.001, 0.002]);
        let params = SegmentParams::default();
        let g = ReferenceGenerator::new(
            ReferenceTrajectory::FixedPoint {
                tip: None,
                target_q: Some(q),
            },
            params,
            ActuationBounds::default(),
            10,
        )
        .unwrap();
        let s = g.sample(3.0).unwrap();
        assert_eq!(s.tip, reconstruct_backbone(&q, &params).unwrap().tip());
        assert_eq!(s.shape.unwrap().len(), 30);
    }

    #[test]
    fn virtual_robot_follows_script() {
        let delta = VirtualDelta {
            segment: 1,
            curvature: [0.0, 5.0],
            insertion: 0.0,
        };
        let g = ReferenceGenerator::new(
            ReferenceTrajectory::VirtualRobot {
                script: vec![ScriptedDelta { at: 1.0, delta }],
            },
            SegmentParams::default(),
            ActuationBounds::default(),
            6,
        )
        .unwrap();
        let before = g.sample(0.5).unwrap();
        let after = g.sample(1.0).unwrap();
        assert!((before.tip - Vector3::new(0.0, 0.0, 0.15)).norm() < 1e-9);
        assert!(after.tip.x > 0.005);
    }
}
