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
//! Spherical obstacles on sinusoidal tracks.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vector3<f64>,
    pub radius: f64,
}

impl Sphere {
    /// Distance from `p` to the surface, negative inside.
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        (p - self.center).norm() - self.radius
    }
}

/// `center(t) = base + amplitude·sin(2πt/period)·direction`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovingSphere {
    pub base: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub amplitude: f64,
    pub period: f64,
    pub radius: f64,
}

impl MovingSphere {
    pub fn fixed(center: Vector3<f64>, radius: f64) -> Self {
        Self {
            base: center,
            direction: Vector3::x(),
            amplitude: 0.0,
            period: 1.0,
            radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius >= 0.0) || !(self.period > 0.0) || !(self.amplitude >= 0.0) {
            return Err(Error::InvalidParams(format!("bad obstacle {self:?}")));
        }
        if self.amplitude > 0.0 && self.direction.norm() == 0.0 {
            return Err(Error::InvalidParams("obstacle direction is zero".into()));
        }
        Ok(())
    }

    pub fn center_at(&self, t: f64) -> Vector3<f64> {
        let dir = self.direction.try_normalize(0.0).unwrap_or_else(Vector3::zeros);
        self.base + dir * (self.amplitude * (2.0 * PI * t / self.period).sin())
    }

    pub fn at(&self, t: f64) -> Sphere {
        Sphere {
            center: self.center_at(t),
            radius: self.radius,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObstacleSet {
    pub obstacles: Vec<MovingSphere>,
}

impl ObstacleSet {
    pub fn new(obstacles: Vec<MovingSphere>) -> Result<Self> {
        for o in &obstacles {
            o.validate()?;
        }
        Ok(Self { obstacles })
    }

    pub fn is_empty(&self) -> bool {
        self.obstacles.is_empty()
    }

    pub fn at(&self, t: f64) -> Vec<Sphere> {
        self.obstacles.iter().map(|o| o.at(t)).collect()
    }
}

/// Smallest surface distance from any point to any sphere; +inf when empty.
pub fn min_distance<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>, spheres: &[Sphere]) -> f64 {
    points
        .into_iter()
        .flat_map(|p| spheres.iter().map(move |s| s.signed_distance(p)))
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mover() -> MovingSphere {
        MovingSphere {
            base: Vector3::new(0.03, 0.0, 0.08),
            direction: Vector3::new(0.0, 2.0, 0.0),
            amplitude: 0.02,
            period: 8.0,
            radius: 0.01,
        }
    }

    #[test]
    fn starts_at_base() {
        assert_eq!(mover().center_at(0.0), mover().base);
    }

    #[test]
    fn half_period_mirrors_about_base() {
        let m = mover();
        for t in [0.7, 1.3, 2.0] {
            let a = m.center_at(t) - m.base;
            let b = m.center_at(t + m.period / 2.0) - m.base;
            assert!((a + b).norm() < 1e-15);
        }
        assert!((m.center_at(2.0).y - 0.02).abs() < 1e-15);
    }

    #[test]
    fn surface_distance() {
        let s = Sphere {
            center: Vector3::new(0.0, 0.0, 0.1),
            radius: 0.01,
        };
        assert!((s.signed_distance(&Vector3::new(0.0, 0.029, 0.1)) - 0.019).abs() < 1e-15);
        assert!(s.signed_distance(&s.center) < 0.0);
        assert_eq!(min_distance(&[Vector3::zeros()], &[]), f64::INFINITY);
    }

    #[test]
    fn rejects_negative_radius() {
        let mut m = mover();
        m.radius = -1.0;
        assert!(ObstacleSet::new(vec![m]).is_err());
    }
}
