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
//! Per-step series and the summary metrics derived from it.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::backbone::NUM_INPUTS;
use crate::error::{Error, Result};
use crate::mppi::CostBreakdown;

/// One logged control step, taken after the command has been applied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub ref_tip: [f64; 3],
    pub tip: [f64; 3],
    pub tip_error: f64,
    /// RMS distance between matching stations, when a shape target exists.
    pub shape_error: Option<f64>,
    pub q: [f64; NUM_INPUTS],
    /// Downsampled plant state.
    pub x: Vec<f64>,
    pub cost: CostBreakdown,
    /// Closest approach of the full backbone to any obstacle surface.
    pub min_clearance: Option<f64>,
    pub feasible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub steps: usize,
    pub duration: f64,
    pub rmse: f64,
    pub mean_error: f64,
    pub max_error: f64,
    pub final_tip_error: f64,
    pub final_shape_error: Option<f64>,
    pub shape_rmse: Option<f64>,
    pub tip_settling_time: Option<f64>,
    pub shape_settling_time: Option<f64>,
    pub min_clearance: Option<f64>,
    pub complexity: f64,
    pub efficiency: Option<f64>,
    pub infeasible_steps: usize,
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    (sum / n as f64).sqrt()
}

/// Time after which `errors` stays within 1.25× its steady level.
///
/// The steady level is the largest error over the final 10% of samples, so
/// controller jitter around a small floor doesn't count as unsettled.
/// `None` only for empty or mismatched input.
pub fn settling_time(times: &[f64], errors: &[f64]) -> Option<f64> {
    let n = errors.len();
    if n == 0 || times.len() != n {
        return None;
    }
    let tail = n.div_ceil(10);
    let steady = errors[n - tail..].iter().copied().fold(0.0, f64::max);
    let band = 1.25 * steady;
    match errors.iter().rposition(|&e| e > band) {
        None => Some(times[0]),
        Some(i) => times.get(i + 1).copied(),
    }
}

/// `L·(1 + κ̄)` for a commanded tip path: `L` is its length and `κ̄` the
/// mean turning angle per unit length at interior vertices.
pub fn command_complexity(path: &[Vector3<f64>]) -> f64 {
    let mut pts: Vec<Vector3<f64>> = Vec::with_capacity(path.len());
    for p in path {
        if pts.last().is_none_or(|q: &Vector3<f64>| (p - q).norm() > 1e-12) {
            pts.push(*p);
        }
    }
    let length: f64 = pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    let kappas: Vec<f64> = pts
        .windows(3)
        .map(|w| {
            let (a, b) = (w[1] - w[0], w[2] - w[1]);
            let cos = (a.dot(&b) / (a.norm() * b.norm())).clamp(-1.0, 1.0);
            cos.acos() / (0.5 * (a.norm() + b.norm()))
        })
        .collect();
    let mean_kappa = if kappas.is_empty() {
        0.0
    } else {
        kappas.iter().sum::<f64>() / kappas.len() as f64
    };
    length * (1.0 + mean_kappa)
}

/// `1 / (E·C)`; `None` when the product is zero.
pub fn efficiency(final_error: f64, complexity: f64) -> Option<f64> {
    let p = final_error * complexity;
    (p > 0.0 && p.is_finite()).then(|| 1.0 / p)
}

pub fn compute_metrics(series: &[SeriesRow]) -> Result<Summary> {
    let last = series.last().ok_or(Error::EmptySeries("scenario series"))?;
    let times: Vec<f64> = series.iter().map(|r| r.t).collect();
    let errors: Vec<f64> = series.iter().map(|r| r.tip_error).collect();
    let shape: Option<Vec<f64>> = series.iter().map(|r| r.shape_error).collect();
    let clearance = series
        .iter()
        .filter_map(|r| r.min_clearance)
        .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.min(c))));
    let path: Vec<Vector3<f64>> = series.iter().map(|r| Vector3::from(r.ref_tip)).collect();
    let complexity = command_complexity(&path);
    Ok(Summary {
        steps: series.len(),
        duration: last.t,
        rmse: rms(errors.iter().copied()),
        mean_error: errors.iter().sum::<f64>() / errors.len() as f64,
        max_error: errors.iter().copied().fold(0.0, f64::max),
        final_tip_error: last.tip_error,
        final_shape_error: last.shape_error,
        shape_rmse: shape.as_ref().map(|s| rms(s.iter().copied())),
        tip_settling_time: settling_time(&times, &errors),
        shape_settling_time: shape.as_ref().and_then(|s| settling_time(&times, s)),
        min_clearance: clearance,
        complexity,
        efficiency: efficiency(last.tip_error, complexity),
        infeasible_steps: series.iter().filter(|r| !r.feasible).count(),
    })
}
