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
//! Operator-driven kinematic twin whose shape serves as a reference.

use serde::{Deserialize, Serialize};

use crate::backbone::{
    reconstruct_backbone, ActuationBounds, ActuationVector, BackboneCurve, SegmentParams, NUM_SEGMENTS,
};
use crate::error::{Error, Result};

/// Increment for one segment. `segment` is 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirtualDelta {
    pub segment: usize,
    /// Change in `(u_x, u_y)`, rad/m.
    #[serde(default)]
    pub curvature: [f64; 2],
    /// Change in shared insertion, m.
    #[serde(default)]
    pub insertion: f64,
}

impl VirtualDelta {
    pub fn validate(&self) -> Result<()> {
        if !(1..=NUM_SEGMENTS).contains(&self.segment) {
            return Err(Error::InvalidSegment(self.segment));
        }
        if self.curvature.iter().chain([&self.insertion]).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("virtual robot delta"));
        }
        Ok(())
    }
}

/// Curvature-space state, kept inside the actuation bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirtualRobot {
    params: SegmentParams,
    bounds: ActuationBounds,
    q: ActuationVector,
}

impl VirtualRobot {
    pub fn new(params: SegmentParams, bounds: ActuationBounds) -> Self {
        Self {
            params,
            bounds,
            q: ActuationVector::zeros(),
        }
    }

    pub fn actuation(&self) -> &ActuationVector {
        &self.q
    }

    /// Per-segment `(u_x, u_y)`.
    pub fn curvature(&self) -> [[f64; 2]; NUM_SEGMENTS] {
        let l = self.params.segment_length(self.q.insertion());
        let dl = self.params.cable_offset * l;
        std::array::from_fn(|i| {
            let [qx, qy] = self.q.bend(i);
            [qy / dl, -qx / dl]
        })
    }

    pub fn apply(&mut self, delta: &VirtualDelta) -> Result<()> {
        delta.validate()?;
        let mut u = self.curvature();
        let seg = delta.segment - 1;
        u[seg][0] += delta.curvature[0];
        u[seg][1] += delta.curvature[1];
        let mut q = self.q;
        q[0] += delta.insertion;
        q[0] = q[0].clamp(self.bounds.min[0], self.bounds.max[0]);
        let dl = self.params.cable_offset * self.params.segment_length(q[0]);
        for (i, [ux, uy]) in u.iter().enumerate() {
            q.set_bend(i, [-uy * dl, ux * dl]);
        }
        self.q = self.bounds.clamp(&q);
        Ok(())
    }

    pub fn backbone(&self) -> Result<BackboneCurve> {
        reconstruct_backbone(&self.q, &self.params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curvature_increment_maps_to_tendons() {
        let mut v = VirtualRobot::new(SegmentParams::default(), ActuationBounds::default());
        v.apply(&VirtualDelta {
            segment: 2,
            curvature: [0.5, 0.0],
            insertion: 0.0,
        })
        .unwrap();
        let u = v.curvature();
        assert!((u[1][0] - 0.5).abs() < 1e-12);
        assert_eq!(u[0], [0.0, 0.0]);
        // u_x = q_y / (d·l)
        assert!((v.actuation()[4] - 0.5 * 0.0075 * 0.05).abs() < 1e-15);
    }

    #[test]
    fn stays_within_bounds() {
        let b = ActuationBounds::default();
        let mut v = VirtualRobot::new(SegmentParams::default(), b.clone());
        for _ in 0..200 {
            v.apply(&VirtualDelta {
                segment: 3,
                curvature: [-0.5, 0.5],
                insertion: 0.001,
            })
            .unwrap();
        }
        assert!(b.contains(v.actuation()));
        assert_eq!(v.actuation()[0], b.max[0]);
    }

    #[test]
    fn invalid_segment_rejected() {
        let mut v = VirtualRobot::new(SegmentParams::default(), ActuationBounds::default());
        let d = VirtualDelta {
            segment: 0,
            curvature: [0.5, 0.0],
            insertion: 0.0,
        };
        assert!(v.apply(&d).is_err());
    }
}
