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
//! Synthetic ground-truth plants.
//!
//! The perturbed plant stands in for unmodeled material and loading effects:
//! each segment's curvature is scaled by its own gain error, tapered
//! linearly along the segment, and offset by a constant bias about the local
//! x axis. The controller and the learned model never see these numbers.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{
    reconstruct_backbone_with, ActuationVector, BackboneCurve, Integrator, SegmentParams, NUM_SEGMENTS,
};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantPerturbation {
    /// Multiplicative curvature gain per segment.
    pub gains: [f64; NUM_SEGMENTS],
    /// Constant curvature added to `u_x`, rad/m.
    pub bias_x: f64,
    /// Curvature runs from `1 + taper/2` to `1 - taper/2` times nominal along a segment.
    pub taper: f64,
}

impl PlantPerturbation {
    pub const GAIN_SPREAD: f64 = 0.15;

    /// Gains drawn uniformly in `1 ± 0.15`, fixed bias and taper.
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gains = [1.0; NUM_SEGMENTS];
        for g in &mut gains {
            *g = 1.0 + rng.random_range(-Self::GAIN_SPREAD..=Self::GAIN_SPREAD);
        }
        Self {
            gains,
            bias_x: 1.5,
            taper: 0.2,
        }
    }

    pub fn curvature(&self, segment: usize, fraction: f64, nominal: Vector3<f64>) -> Vector3<f64> {
        let scale = self.gains[segment] * (1.0 + self.taper * (0.5 - fraction));
        nominal * scale + Vector3::new(self.bias_x, 0.0, 0.0)
    }
}

/// The robot being controlled or measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Plant {
    #[default]
    Nominal,
    Perturbed(PlantPerturbation),
}

impl Plant {
    pub fn backbone(&self, q: &ActuationVector, params: &SegmentParams) -> Result<BackboneCurve> {
        match self {
            Plant::Nominal => reconstruct_backbone_with(q, params, Integrator::Rk4, &|_, _, u| u),
            Plant::Perturbed(p) => {
                reconstruct_backbone_with(q, params, Integrator::Rk4, &|seg, f, u| p.curvature(seg, f, u))
            }
        }
    }
}
