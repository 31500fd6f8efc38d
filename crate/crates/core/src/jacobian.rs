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
//! Whole-body Jacobian of the downsampled backbone by batch central
//! differences.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::backbone::{downsample_state, ActuationBounds, ActuationVector, NUM_INPUTS};
use crate::error::{Error, Result};
use crate::model::ShapeModel;

pub const DEFAULT_DELTA: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianMatrix {
    /// `3m × 7` sensitivities, meters per meter.
    pub entries: DMatrix<f64>,
    pub base_q: ActuationVector,
    pub base_x: DVector<f64>,
    /// Columns that fell back to a one-sided difference at a bound.
    pub one_sided: [bool; NUM_INPUTS],
}

impl JacobianMatrix {
    pub fn points(&self) -> usize {
        self.entries.nrows() / 3
    }

    /// Linear prediction `x0 + J·dq`.
    pub fn predict(&self, dq: &[f64; NUM_INPUTS]) -> DVector<f64> {
        &self.base_x + &self.entries * DVector::from_row_slice(dq)
    }
}

/// Perturbation pairs for every column, clipped to `bounds`.
fn stencil(q: &ActuationVector, delta: f64, bounds: &ActuationBounds) -> Vec<(ActuationVector, ActuationVector)> {
    (0..NUM_INPUTS)
        .map(|j| {
            let mut plus = *q;
            let mut minus = *q;
            plus[j] = (q[j] + delta).min(bounds.max[j].max(q[j]));
            minus[j] = (q[j] - delta).max(bounds.min[j].min(q[j]));
            (plus, minus)
        })
        .collect()
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidStep(delta));
    }
    Ok(())
}

fn assemble(
    q: &ActuationVector,
    delta: f64,
    pairs: &[(ActuationVector, ActuationVector)],
    states: &[DVector<f64>],
) -> JacobianMatrix {
    let rows = states[0].len();
    let mut entries = DMatrix::zeros(rows, NUM_INPUTS);
    let mut one_sided = [false; NUM_INPUTS];
    for (j, (plus, minus)) in pairs.iter().enumerate() {
        let span = plus[j] - minus[j];
        one_sided[j] = (span - 2.0 * delta).abs() > 1e-15;
        let col = (&states[1 + 2 * j] - &states[2 + 2 * j]) / span;
        entries.set_column(j, &col);
    }
    JacobianMatrix {
        entries,
        base_q: *q,
        base_x: states[0].clone(),
        one_sided,
    }
}

/// Central-difference Jacobian from a single batch of `2·7 + 1` solves.
pub fn central_difference_jacobian(
    q: &ActuationVector,
    m: usize,
    delta: f64,
    model: &ShapeModel,
    bounds: &ActuationBounds,
) -> Result<JacobianMatrix> {
    check_delta(delta)?;
    let pairs = stencil(q, delta, bounds);
    let mut batch = Vec::with_capacity(1 + 2 * NUM_INPUTS);
    batch.push(*q);
    for (p, n) in &pairs {
        batch.push(*p);
        batch.push(*n);
    }
    let solution = model.batch_integrate(&batch)?;
    let states = solution
        .curves()
        .iter()
        .map(|c| downsample_state(c, m))
        .collect::<Result<Vec<_>>>()?;
    let jac = assemble(q, delta, &pairs, &states);
    if jac.entries.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("jacobian"));
    }
    Ok(jac)
}

/// Same stencil, one solve per perturbed actuation. Reference path for tests.
pub fn sequential_jacobian(
    q: &ActuationVector,
    m: usize,
    delta: f64,
    model: &ShapeModel,
    bounds: &ActuationBounds,
) -> Result<JacobianMatrix> {
    check_delta(delta)?;
    let pairs = stencil(q, delta, bounds);
    let mut states = vec![downsample_state(&model.backbone(q)?, m)?];
    for (p, n) in &pairs {
        states.push(downsample_state(&model.backbone(p)?, m)?);
        states.push(downsample_state(&model.backbone(n)?, m)?);
    }
    Ok(assemble(q, delta, &pairs, &states))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::SegmentParams;

    fn nominal() -> ShapeModel {
        ShapeModel::nominal(SegmentParams::default())
    }

    #[test]
    fn insertion_moves_tip_one_to_one() {
        let j = central_difference_jacobian(
            &ActuationVector::zeros(),
            10,
            DEFAULT_DELTA,
            &nominal(),
            &ActuationBounds::default(),
        )
        .unwrap();
        let tip_z = j.entries.nrows() - 1;
        assert!((j.entries[(tip_z, 0)] - 1.0).abs() < 1e-6, "{}", j.entries[(tip_z, 0)]);
        assert_eq!(j.one_sided, [false; NUM_INPUTS]);
    }

    #[test]
    fn distal_bend_leaves_proximal_points() {
        // m = 7 puts points at multiples of 0.025 m; indices 0..=4 lie on the first two segments.
        let j = central_difference_jacobian(
            &ActuationVector::zeros(),
            7,
            DEFAULT_DELTA,
            &nominal(),
            &ActuationBounds::default(),
        )
        .unwrap();
        for col in [5, 6] {
            for row in 0..15 {
                assert!(j.entries[(row, col)].abs() < 1e-9, "row {row} col {col}");
            }
            assert!(j.entries[(18, col)].abs() + j.entries[(19, col)].abs() > 1.0);
        }
    }

    #[test]
    fn straight_tip_matches_small_angle_derivative() {
        let p = SegmentParams::default();
        let j = central_difference_jacobian(
            &ActuationVector::zeros(),
            4,
            DEFAULT_DELTA,
            &nominal(),
            &ActuationBounds::default(),
        )
        .unwrap();
        let tip = j.entries.nrows() - 3;
        for seg in 0..3 {
            // Bending over [s_i, s_i + l] tilts the remaining arm; lever = l·(2.5 − i).
            let expected = -p.rest_length * (2.5 - seg as f64) / p.cable_offset;
            let jx = j.entries[(tip, 1 + 2 * seg)];
            let jy = j.entries[(tip + 1, 2 + 2 * seg)];
            assert!(
                ((jx - expected) / expected).abs() < 1e-4,
                "seg {seg}: {jx} vs {expected}"
            );
            assert!(
                ((jy - expected) / expected).abs() < 1e-4,
                "seg {seg}: {jy} vs {expected}"
            );
        }
    }

    #[test]
    fn richardson_ratio_is_four() {
        let q = ActuationVector([0.004, 0.006, -0.003, 0.005, 0.002, -0.007, 0.004]);
        let bounds = ActuationBounds::default();
        let j = |d: f64| {
            central_difference_jacobian(&q, 10, d, &nominal(), &bounds)
                .unwrap()
                .entries
        };
        let d = 1e-3;
        let (a, b, c) = (j(d), j(d / 2.0), j(d / 4.0));
        let cols: Vec<usize> = (1..NUM_INPUTS).collect();
        for &col in &cols {
            let num = (a.column(col) - b.column(col)).norm();
            let den = (b.column(col) - c.column(col)).norm();
            let ratio = num / den;
            assert!((ratio - 4.0).abs() < 0.8, "col {col}: ratio {ratio}");
        }
    }

    #[test]
    fn batch_equals_sequential() {
        let q = ActuationVector([0.01, 0.003, -0.004, 0.006, 0.001, -0.002, 0.005]);
        let bounds = ActuationBounds::default();
        let a = central_difference_jacobian(&q, 10, DEFAULT_DELTA, &nominal(), &bounds).unwrap();
        let b = sequential_jacobian(&q, 10, DEFAULT_DELTA, &nominal(), &bounds).unwrap();
        assert!((a.entries - b.entries).amax() < 1e-12);
    }

    #[test]
    fn one_sided_at_bound() {
        let mut q = ActuationVector::zeros();
        q[3] = 0.015;
        let j = central_difference_jacobian(&q, 10, DEFAULT_DELTA, &nominal(), &ActuationBounds::default()).unwrap();
        assert!(j.one_sided[3]);
        assert_eq!(j.one_sided.iter().filter(|&&f| f).count(), 1);
        assert!(j.entries.column(3).norm() > 1.0);
    }

    #[test]
    fn non_positive_delta_rejected() {
        for d in [0.0, -1e-5, f64::NAN] {
            assert!(central_difference_jacobian(
                &ActuationVector::zeros(),
                10,
                d,
                &nominal(),
                &ActuationBounds::default()
            )
            .is_err());
        }
    }
}
