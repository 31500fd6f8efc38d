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
//! Task presets that patch objective weights and bounds between control steps.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::backbone::{ActuationBounds, NUM_SEGMENTS};
use crate::error::{Error, Result};
use crate::mppi::{ObjectiveWeights, TipAxis};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskMode {
    #[default]
    Default,
    Clearance,
    DirectAdvance,
    SegmentFree,
    DirectionBias,
}

/// Operator intent. `segment` is 1-based and only read by `segment_free`;
/// `direction` is only read by `direction_bias`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDescriptor {
    pub mode: TaskMode,
    #[serde(default)]
    pub magnitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<[f64; 3]>,
}

impl TaskDescriptor {
    pub fn new(mode: TaskMode, magnitude: f64) -> Self {
        Self {
            mode,
            magnitude,
            ..Default::default()
        }
    }

    pub fn segment_free(segment: usize, magnitude: f64) -> Self {
        Self {
            segment: Some(segment),
            ..Self::new(TaskMode::SegmentFree, magnitude)
        }
    }

    pub fn direction_bias(direction: [f64; 3], magnitude: f64) -> Self {
        Self {
            direction: Some(direction),
            ..Self::new(TaskMode::DirectionBias, magnitude)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.magnitude) {
            return Err(Error::Config(format!("magnitude {} outside [0, 1]", self.magnitude)));
        }
        match self.mode {
            TaskMode::SegmentFree => match self.segment {
                Some(s) if (1..=NUM_SEGMENTS).contains(&s) => {}
                Some(s) => return Err(Error::InvalidSegment(s)),
                None => return Err(Error::Config("segment_free needs a segment".into())),
            },
            TaskMode::DirectionBias => {
                let d = self
                    .direction
                    .ok_or_else(|| Error::Config("direction_bias needs a direction".into()))?;
                let n = Vector3::from(d).norm();
                if !(n > 0.0) || !n.is_finite() {
                    return Err(Error::Config("direction must be finite and nonzero".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Weights and bounds the controller runs with.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlSettings {
    pub weights: ObjectiveWeights,
    pub bounds: ActuationBounds,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightFactors {
    pub w_tip: f64,
    pub w_shape: f64,
    pub w_u: f64,
    pub w_term: f64,
    pub w_obs: f64,
    pub obs_threshold: f64,
}

impl Default for WeightFactors {
    fn default() -> Self {
        Self {
            w_tip: 1.0,
            w_shape: 1.0,
            w_u: 1.0,
            w_term: 1.0,
            w_obs: 1.0,
            obs_threshold: 1.0,
        }
    }
}

/// Overlay on a base configuration. Applying never mutates the base.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightPatch {
    pub factors: WeightFactors,
    /// 1-based segment whose shape points get zero weight.
    pub free_segment: Option<usize>,
    pub tip_axis: Option<TipAxis>,
    pub bounds: Option<ActuationBounds>,
}

/// Segment (1-based) of point `j` among `m` equidistant stations. Segments
/// are equal in length, so this does not depend on insertion.
pub fn point_segment(j: usize, m: usize) -> usize {
    let f = j as f64 / (m - 1) as f64 * NUM_SEGMENTS as f64;
    (f - 1e-9).ceil().clamp(1.0, NUM_SEGMENTS as f64) as usize
}

impl WeightPatch {
    pub fn for_task(desc: &TaskDescriptor) -> Result<Self> {
        desc.validate()?;
        let m = desc.magnitude;
        let mut patch = Self::default();
        match desc.mode {
            TaskMode::Default => {}
            TaskMode::Clearance => {
                patch.factors.w_obs = 1.0 + m;
                patch.factors.obs_threshold = 1.0 + 0.5 * m;
            }
            TaskMode::DirectAdvance => {
                patch.factors.w_tip = 1.0 + m;
                patch.factors.w_shape = 1.0 - 0.5 * m;
            }
            TaskMode::SegmentFree => patch.free_segment = desc.segment,
            TaskMode::DirectionBias => {
                let d = Vector3::from(desc.direction.expect("validated")).normalize();
                patch.tip_axis = Some(TipAxis {
                    direction: d,
                    factor: 1.0 + m,
                });
            }
        }
        Ok(patch)
    }

    pub fn apply(&self, base: &ControlSettings, points: usize) -> Result<ControlSettings> {
        let f = &self.factors;
        let all = [f.w_tip, f.w_shape, f.w_u, f.w_term, f.w_obs, f.obs_threshold];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::Config(format!("patch factors must be positive: {all:?}")));
        }
        let b = &base.weights;
        let mut weights = ObjectiveWeights {
            w_tip: b.w_tip * f.w_tip,
            w_shape: b.w_shape * f.w_shape,
            w_u: b.w_u * f.w_u,
            w_term: b.w_term * f.w_term,
            w_obs: b.w_obs * f.w_obs,
            obs_threshold: b.obs_threshold * f.obs_threshold,
            point_weights: b.point_weights.clone(),
            tip_axis: b.tip_axis,
        };
        if let Some(seg) = self.free_segment {
            if !(1..=NUM_SEGMENTS).contains(&seg) {
                return Err(Error::InvalidSegment(seg));
            }
            if points < 2 {
                return Err(Error::TooFewPoints { min: 2, got: points });
            }
            let mut pw = weights.point_weights.take().unwrap_or_else(|| vec![1.0; points]);
            pw.resize(points, 1.0);
            for (j, w) in pw.iter_mut().enumerate() {
                if j > 0 && point_segment(j, points) == seg {
                    *w = 0.0;
                }
            }
            weights.point_weights = Some(pw);
        }
        if self.tip_axis.is_some() {
            weights.tip_axis = self.tip_axis;
        }
        let bounds = self.bounds.clone().unwrap_or_else(|| base.bounds.clone());
        bounds.validate()?;
        weights.validate()?;
        Ok(ControlSettings { weights, bounds })
    }
}

pub fn apply_task(desc: &TaskDescriptor, base: &ControlSettings, points: usize) -> Result<ControlSettings> {
    WeightPatch::for_task(desc)?.apply(base, points)
}

/// Holds the base settings and the latest descriptor; the effective settings
/// are always recomputed from the base.
#[derive(Clone, Debug)]
pub struct TaskManager {
    base: ControlSettings,
    active: TaskDescriptor,
    effective: ControlSettings,
    points: usize,
}

impl TaskManager {
    pub fn new(base: ControlSettings, points: usize) -> Result<Self> {
        let effective = apply_task(&TaskDescriptor::default(), &base, points)?;
        Ok(Self {
            base,
            active: TaskDescriptor::default(),
            effective,
            points,
        })
    }

    pub fn base(&self) -> &ControlSettings {
        &self.base
    }

    pub fn active(&self) -> &TaskDescriptor {
        &self.active
    }

    pub fn effective(&self) -> &ControlSettings {
        &self.effective
    }

    /// On error the previous task stays active.
    pub fn set_task(&mut self, desc: TaskDescriptor) -> Result<&ControlSettings> {
        self.effective = apply_task(&desc, &self.base, self.points)?;
        self.active = desc;
        Ok(&self.effective)
    }

    /// Replaces the base, keeping the active task on top of it.
    pub fn set_base(&mut self, base: ControlSettings) -> Result<&ControlSettings> {
        self.effective = apply_task(&self.active, &base, self.points)?;
        self.base = base;
        Ok(&self.effective)
    }

    pub fn revert(&mut self) -> &ControlSettings {
        self.active = TaskDescriptor::default();
        self.effective = self.base.clone();
        &self.effective
    }
}
