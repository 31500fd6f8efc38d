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
//! Backbone supervision loss: sum of Euclidean point errors at arc-length stations.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::BatchSolution;
use crate::backbone::BackboneCurve;
use crate::error::{Error, Result};

/// A measured backbone point at arc length `s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub s: f64,
    pub point: Vector3<f64>,
}

/// `sum_k |p_hat(S_k) - p(S_k)|` (not squared).
pub fn training_loss(curve: &BackboneCurve, truth: &[Station]) -> Result<f64> {
    training_loss_with_grad(curve, truth).map(|(l, _)| l)
}

/// Loss plus its gradient with respect to sample positions, as
/// `(sample index, dL/dp)` pairs.
pub fn training_loss_with_grad(curve: &BackboneCurve, truth: &[Station]) -> Result<(f64, Vec<(usize, [f64; 3])>)> {
    if truth.is_empty() {
        return Err(Error::Config("training loss needs at least one station".into()));
    }
    let samples = curve.samples();
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(2 * truth.len());
    for st in truth {
        let (i, w) = curve.bracket(st.s)?;
        let predicted = if samples.len() == 1 {
            samples[0].pose.position
        } else {
            samples[i].pose.position * (1.0 - w) + samples[i + 1].pose.position * w
        };
        let err = predicted - st.point;
        let norm = err.norm();
        loss += norm;
        if norm > 0.0 && samples.len() > 1 {
            let g = err / norm;
            if w < 1.0 {
                grad.push((i, (g * (1.0 - w)).into()));
            }
            if w > 0.0 {
                grad.push((i + 1, (g * w).into()));
            }
        }
    }
    Ok((loss, grad))
}

/// Loss for sample `i` of a batch, where stations past the sample's own
/// length (up to the batch maximum) see its last valid state.
pub fn masked_training_loss(solution: &BatchSolution, i: usize, truth: &[Station]) -> Result<f64> {
    let curve = &solution.curves()[i];
    let clamped: Vec<Station> = truth
        .iter()
        .map(|st| {
            if st.s > solution.max_length() + 1e-12 {
                Err(Error::StationOutsideCurve {
                    station: st.s,
                    length: solution.max_length(),
                })
            } else {
                Ok(Station {
                    s: st.s.min(curve.length()),
                    point: st.point,
                })
            }
        })
        .collect::<Result<_>>()?;
    training_loss(curve, &clamped)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{reconstruct_backbone, ActuationVector, SegmentParams};

    fn curve() -> BackboneCurve {
        let q = ActuationVector([0.004, 0.01, -0.003, 0.002, 0.0, -0.012, 0.006]);
        reconstruct_backbone(&q, &SegmentParams::default()).unwrap()
    }

    fn stations(curve: &BackboneCurve, k: usize) -> Vec<Station> {
        (1..=k)
            .map(|i| {
                let s = curve.length() * i as f64 / k as f64;
                Station {
                    s,
                    point: curve.position_at(s).unwrap(),
                }
            })
            .collect()
    }

    #[test]
    fn perfect_prediction_is_zero() {
        let c = curve();
        assert_eq!(training_loss(&c, &stations(&c, 16)).unwrap(), 0.0);
    }

    #[test]
    fn offsets_sum_as_norms() {
        let c = curve();
        let mut truth = stations(&c, 2);
        truth[0].point += Vector3::new(0.001, 0.0, 0.0);
        truth[1].point += Vector3::new(0.0, 0.0006, -0.0008);
        let l = training_loss(&c, &truth).unwrap();
        assert!((l - 0.002).abs() < 1e-12, "{l}");
    }

    #[test]
    fn permutation_invariant() {
        let c = curve();
        let mut truth = stations(&c, 5);
        for (i, st) in truth.iter_mut().enumerate() {
            st.point.x += 1e-3 * i as f64;
        }
        let a = training_loss(&c, &truth).unwrap();
        truth.reverse();
        truth.swap(0, 2);
        let b = training_loss(&c, &truth).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn station_outside_is_rejected() {
        let c = curve();
        let truth = [Station {
            s: c.length() + 0.01,
            point: Vector3::zeros(),
        }];
        assert!(matches!(
            training_loss(&c, &truth),
            Err(Error::StationOutsideCurve { .. })
        ));
        assert!(training_loss(&c, &[]).is_err());
    }
}
