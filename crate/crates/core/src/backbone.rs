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
//! Cosserat-rod backbone kinematics for a three-segment tendon-driven robot.
//!
//! Each segment has constant nominal curvature set by its tendon pair, and the
//! pose `(p, R)` is integrated along arc length with `p' = R e3`,
//! `R' = R [u]x`. The terminal pose of one segment seeds the next.

use nalgebra::{DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_SEGMENTS: usize = 3;
/// Shared insertion plus one tendon pair per segment.
pub const NUM_INPUTS: usize = 1 + 2 * NUM_SEGMENTS;

/// Geometry and discretization of one segment (all segments share it).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    pub rest_length: f64,
    pub cable_offset: f64,
    pub step: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            rest_length: 0.05,
            cable_offset: 0.0075,
            step: 0.001,
        }
    }
}

impl SegmentParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.rest_length, self.cable_offset, self.step];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("segment parameters"));
        }
        if all.iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidParams(format!(
                "all parameters must be positive: {self:?}"
            )));
        }
        if self.step > self.rest_length {
            return Err(Error::InvalidParams(format!(
                "step {} exceeds rest length {}",
                self.step, self.rest_length
            )));
        }
        Ok(())
    }

    /// Length of one segment under insertion `q_ins` (split evenly).
    pub fn segment_length(&self, q_ins: f64) -> f64 {
        self.rest_length + q_ins / NUM_SEGMENTS as f64
    }
}

/// Actuation command `[q_ins, q_1x, q_1y, q_2x, q_2y, q_3x, q_3y]` in meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActuationVector(pub [f64; NUM_INPUTS]);

impl ActuationVector {
    pub fn zeros() -> Self {
        Self([0.0; NUM_INPUTS])
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; NUM_INPUTS] = values.try_into().map_err(|_| Error::Dimension {
            expected: NUM_INPUTS,
            got: values.len(),
        })?;
        Ok(Self(arr))
    }

    pub fn insertion(&self) -> f64 {
        self.0[0]
    }

    /// Tendon pair of segment `segment` (zero-based).
    pub fn bend(&self, segment: usize) -> [f64; 2] {
        [self.0[1 + 2 * segment], self.0[2 + 2 * segment]]
    }

    pub fn set_bend(&mut self, segment: usize, bend: [f64; 2]) {
        self.0[1 + 2 * segment] = bend[0];
        self.0[2 + 2 * segment] = bend[1];
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<usize> for ActuationVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for ActuationVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Box constraint on the actuation vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActuationBounds {
    pub min: [f64; NUM_INPUTS],
    pub max: [f64; NUM_INPUTS],
}

impl Default for ActuationBounds {
    fn default() -> Self {
        let mut min = [-0.015; NUM_INPUTS];
        let mut max = [0.015; NUM_INPUTS];
        min[0] = -0.03;
        max[0] = 0.03;
        Self { min, max }
    }
}

impl ActuationBounds {
    pub fn validate(&self) -> Result<()> {
        for i in 0..NUM_INPUTS {
            if !(self.min[i].is_finite() && self.max[i].is_finite()) {
                return Err(Error::NonFinite("actuation bounds"));
            }
            if self.min[i] >= self.max[i] {
                return Err(Error::Config(format!(
                    "bound {i}: min {} must be below max {}",
                    self.min[i], self.max[i]
                )));
            }
        }
        Ok(())
    }

    pub fn clamp(&self, q: &ActuationVector) -> ActuationVector {
        let mut out = *q;
        for i in 0..NUM_INPUTS {
            out.0[i] = out.0[i].clamp(self.min[i], self.max[i]);
        }
        out
    }

    pub fn contains(&self, q: &ActuationVector) -> bool {
        (0..NUM_INPUTS).all(|i| q.0[i] >= self.min[i] && q.0[i] <= self.max[i])
    }
}

/// Frame attached to one backbone point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseState {
    pub position: Vector3<f64>,
    pub orientation: Matrix3<f64>,
    pub curvature: Vector3<f64>,
}

impl PoseState {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: Matrix3::identity(),
            curvature: Vector3::zeros(),
        }
    }

    pub fn tangent(&self) -> Vector3<f64> {
        self.orientation.column(2).into_owned()
    }

    /// `max |RᵀR - I|` over all entries.
    pub fn orthonormality_error(&self) -> f64 {
        let r = &self.orientation;
        (r.transpose() * r - Matrix3::identity()).abs().max()
    }
}

/// Fixed-step scheme used along arc length.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Rk4,
    /// Four-step Adams–Bashforth. Bootstraps each segment with three RK4
    /// steps and falls back to RK4 on a shortened final step.
    AdamsBashforth4,
}

/// Number of fixed steps covering `length`; the last one may be shorter.
pub fn step_count(length: f64, step: f64) -> usize {
    ((length / step) - 1e-9).ceil().max(1.0) as usize
}

/// Size of step `j` out of `n` steps covering `length`.
pub fn step_size(j: usize, n: usize, length: f64, step: f64) -> f64 {
    if j + 1 < n {
        step
    } else {
        length - (n - 1) as f64 * step
    }
}

/// Skew-symmetric matrix of `u`.
pub fn hat(u: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0)
}

/// Projects a near-rotation back onto SO(3), keeping the tangent column
/// direction and orthogonalizing the first column against it.
pub fn gram_schmidt(r: &Matrix3<f64>) -> Matrix3<f64> {
    let t = r.column(2).normalize();
    let c0 = r.column(0).into_owned();
    let x = (c0 - t * t.dot(&c0)).normalize();
    let y = t.cross(&x);
    Matrix3::from_columns(&[x, y, t])
}

/// Constant curvature and length of one segment from its tendon pair.
pub fn actuation_to_curvature(q_seg: [f64; 2], q_ins: f64, params: &SegmentParams) -> Result<(f64, Vector3<f64>)> {
    if !(q_seg[0].is_finite() && q_seg[1].is_finite() && q_ins.is_finite()) {
        return Err(Error::NonFinite("actuation"));
    }
    let length = params.segment_length(q_ins);
    if length <= 0.0 {
        return Err(Error::NonPositiveLength(length));
    }
    let scale = params.cable_offset * length;
    Ok((length, Vector3::new(q_seg[1] / scale, -q_seg[0] / scale, 0.0)))
}

#[derive(Clone, Copy)]
struct PoseRate {
    dp: Vector3<f64>,
    dr: Matrix3<f64>,
}

fn pose_rate(r: &Matrix3<f64>, u: &Vector3<f64>) -> PoseRate {
    PoseRate {
        dp: r.column(2).into_owned(),
        dr: r * hat(u),
    }
}

fn rk4_step<F>(p: &Vector3<f64>, r: &Matrix3<f64>, s: f64, h: f64, curvature: &F) -> (Vector3<f64>, Matrix3<f64>)
where
    F: Fn(f64) -> Vector3<f64>,
{
    let u_mid = curvature(s + 0.5 * h);
    let k1 = pose_rate(r, &curvature(s));
    let k2 = pose_rate(&(r + k1.dr * (0.5 * h)), &u_mid);
    let k3 = pose_rate(&(r + k2.dr * (0.5 * h)), &u_mid);
    let k4 = pose_rate(&(r + k3.dr * h), &curvature(s + h));
    let p_next = p + (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp) * (h / 6.0);
    let r_next = r + (k1.dr + 2.0 * k2.dr + 2.0 * k3.dr + k4.dr) * (h / 6.0);
    (p_next, r_next)
}

/// Integrates one constant-curvature segment with RK4. Returns the states at
/// `s = 0, ds, 2ds, ..., length` measured from the segment start.
pub fn integrate_segment(start: &PoseState, curvature: Vector3<f64>, length: f64, step: f64) -> Vec<PoseState> {
    integrate_segment_with(start, length, step, Integrator::Rk4, |_| curvature)
}

/// Like [`integrate_segment`] with an explicit scheme and a curvature profile
/// `u(s)` over local arc length.
pub fn integrate_segment_with<F>(
    start: &PoseState,
    length: f64,
    step: f64,
    integrator: Integrator,
    curvature: F,
) -> Vec<PoseState>
where
    F: Fn(f64) -> Vector3<f64>,
{
    let n = step_count(length, step);
    let mut out = Vec::with_capacity(n + 1);
    out.push(PoseState {
        curvature: curvature(0.0),
        ..*start
    });
    let mut p = start.position;
    let mut r = start.orientation;
    let mut history: Vec<PoseRate> = Vec::with_capacity(4);
    for j in 0..n {
        let s = j as f64 * step;
        let h = step_size(j, n, length, step);
        let full_step = j + 1 < n || (h - step).abs() < 1e-15;
        let (p_next, r_next) = match integrator {
            Integrator::AdamsBashforth4 if j >= 3 && full_step => {
                let f0 = pose_rate(&r, &curvature(s));
                let [f3, f2, f1] = [history[0], history[1], history[2]];
                let dp = f0.dp * 55.0 - f1.dp * 59.0 + f2.dp * 37.0 - f3.dp * 9.0;
                let dr = f0.dr * 55.0 - f1.dr * 59.0 + f2.dr * 37.0 - f3.dr * 9.0;
                history.remove(0);
                history.push(f0);
                (p + dp * (h / 24.0), r + dr * (h / 24.0))
            }
            _ => {
                if integrator == Integrator::AdamsBashforth4 {
                    history.push(pose_rate(&r, &curvature(s)));
                }
                rk4_step(&p, &r, s, h, &curvature)
            }
        };
        p = p_next;
        r = gram_schmidt(&r_next);
        let s_next = if j + 1 < n { (j + 1) as f64 * step } else { length };
        out.push(PoseState {
            position: p,
            orientation: r,
            curvature: curvature(s_next.min(length)),
        });
    }
    out
}

/// One arc-length sample of a backbone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub s: f64,
    pub pose: PoseState,
}

/// Full backbone shape sampled along arc length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneCurve {
    samples: Vec<CurveSample>,
    segment_ends: [usize; NUM_SEGMENTS],
}

impl BackboneCurve {
    pub fn new(samples: Vec<CurveSample>, segment_ends: [usize; NUM_SEGMENTS]) -> Self {
        debug_assert!(!samples.is_empty());
        Self { samples, segment_ends }
    }

    pub fn samples(&self) -> &[CurveSample] {
        &self.samples
    }

    /// Index of the last sample of each segment.
    pub fn segment_ends(&self) -> [usize; NUM_SEGMENTS] {
        self.segment_ends
    }

    pub fn length(&self) -> f64 {
        self.samples.last().map_or(0.0, |c| c.s)
    }

    pub fn tip(&self) -> Vector3<f64> {
        self.samples.last().expect("nonempty curve").pose.position
    }

    pub fn tip_pose(&self) -> &PoseState {
        &self.samples.last().expect("nonempty curve").pose
    }

    pub fn positions(&self) -> impl Iterator<Item = Vector3<f64>> + '_ {
        self.samples.iter().map(|c| c.pose.position)
    }

    /// Index `i` and weight `w` such that the point at `s` lies between
    /// samples `i` and `i + 1` as `(1 - w) * x_i + w * x_{i+1}`.
    pub fn bracket(&self, s: f64) -> Result<(usize, f64)> {
        let length = self.length();
        if !s.is_finite() || s < -1e-12 || s > length + 1e-12 {
            return Err(Error::StationOutsideCurve { station: s, length });
        }
        let last = self.samples.len() - 1;
        if s >= length || last == 0 {
            return Ok((last.saturating_sub(1), if last == 0 { 0.0 } else { 1.0 }));
        }
        let i = self
            .samples
            .partition_point(|c| c.s <= s)
            .saturating_sub(1)
            .min(last - 1);
        let (s0, s1) = (self.samples[i].s, self.samples[i + 1].s);
        Ok((i, ((s - s0) / (s1 - s0)).clamp(0.0, 1.0)))
    }

    /// Backbone point at arc length `s`, linearly interpolated between samples.
    pub fn position_at(&self, s: f64) -> Result<Vector3<f64>> {
        let (i, w) = self.bracket(s)?;
        if self.samples.len() == 1 {
            return Ok(self.samples[0].pose.position);
        }
        if w == 1.0 {
            return Ok(self.samples[i + 1].pose.position);
        }
        let a = self.samples[i].pose.position;
        let b = self.samples[i + 1].pose.position;
        Ok(a * (1.0 - w) + b * w)
    }

    /// Segment (zero-based) that owns sample `index`.
    pub fn segment_of_sample(&self, index: usize) -> usize {
        self.segment_ends
            .iter()
            .position(|&end| index <= end)
            .unwrap_or(NUM_SEGMENTS - 1)
    }
}

/// Integrates the full three-segment backbone for `q` with RK4.
pub fn reconstruct_backbone(q: &ActuationVector, params: &SegmentParams) -> Result<BackboneCurve> {
    reconstruct_backbone_with(q, params, Integrator::Rk4, &|_, _, u| u)
}

/// Integrates the backbone with a curvature `profile(segment, fraction, u_nominal)`,
/// where `fraction` runs from 0 to 1 along the segment. The nominal model
/// returns `u_nominal` unchanged.
pub fn reconstruct_backbone_with(
    q: &ActuationVector,
    params: &SegmentParams,
    integrator: Integrator,
    profile: &dyn Fn(usize, f64, Vector3<f64>) -> Vector3<f64>,
) -> Result<BackboneCurve> {
    params.validate()?;
    if !q.is_finite() {
        return Err(Error::NonFinite("actuation"));
    }
    let mut samples = Vec::with_capacity(NUM_SEGMENTS * (step_count(params.rest_length, params.step) + 2));
    let mut segment_ends = [0; NUM_SEGMENTS];
    let mut start = PoseState::identity();
    let mut s0 = 0.0;
    for seg in 0..NUM_SEGMENTS {
        let (length, u_nom) = actuation_to_curvature(q.bend(seg), q.insertion(), params)?;
        let states = integrate_segment_with(&start, length, params.step, integrator, |s| {
            profile(seg, s / length, u_nom)
        });
        let n = states.len() - 1;
        let skip = usize::from(seg > 0);
        for (j, pose) in states.iter().enumerate().skip(skip) {
            let s_local = if j < n { j as f64 * params.step } else { length };
            samples.push(CurveSample {
                s: s0 + s_local,
                pose: *pose,
            });
        }
        segment_ends[seg] = samples.len() - 1;
        start = states[n];
        s0 += length;
    }
    Ok(BackboneCurve::new(samples, segment_ends))
}

/// Concatenated coordinates of `m` points equidistant in arc length,
/// base and tip included.
pub fn downsample_state(curve: &BackboneCurve, m: usize) -> Result<DVector<f64>> {
    if m < 2 {
        return Err(Error::TooFewPoints { min: 2, got: m });
    }
    let length = curve.length();
    let mut x = DVector::zeros(3 * m);
    for i in 0..m {
        let p = if i + 1 == m {
            curve.tip()
        } else {
            curve.position_at(length * i as f64 / (m - 1) as f64)?
        };
        x.fixed_rows_mut::<3>(3 * i).copy_from(&p);
    }
    Ok(x)
}
