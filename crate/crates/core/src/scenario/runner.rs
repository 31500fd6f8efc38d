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
//! Closed-loop scenario execution.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::config::{InitialCommand, ScenarioConfig, ShapeMode};
use super::metrics::{compute_metrics, SeriesRow, Summary};
use super::reference::{ReferenceGenerator, ReferenceSample};
use crate::backbone::{downsample_state, ActuationBounds, ActuationVector, BackboneCurve, SegmentParams, NUM_INPUTS};
use crate::error::{Error, Result};
use crate::model::ShapeModel;
use crate::mppi::{HorizonTarget, MppiController};
use crate::obstacle::min_distance;
use crate::plant::Plant;
use crate::residual::Checkpoint;
use crate::task::{ControlSettings, TaskDescriptor, TaskManager};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub name: String,
    pub seed: u64,
    pub initial_q: ActuationVector,
    pub series: Vec<SeriesRow>,
    pub summary: Summary,
}

/// Damped least squares on the tip position of `plant`.
pub fn solve_tip_ik(
    plant: &Plant,
    params: &SegmentParams,
    bounds: &ActuationBounds,
    target: &Vector3<f64>,
) -> Result<ActuationVector> {
    let h = 1e-6;
    let mut q = ActuationVector::zeros();
    for _ in 0..60 {
        let tip = plant.backbone(&q, params)?.tip();
        let e = target - tip;
        if e.norm() < 1e-9 {
            break;
        }
        let mut j = DMatrix::zeros(3, NUM_INPUTS);
        for c in 0..NUM_INPUTS {
            let mut qp = q;
            qp[c] += h;
            let col = (plant.backbone(&qp, params)?.tip() - tip) / h;
            j.set_column(c, &col);
        }
        let jjt: Matrix3<f64> = (&j * j.transpose()).fixed_view::<3, 3>(0, 0).into_owned();
        let damped = (jjt + Matrix3::identity() * 1e-6)
            .try_inverse()
            .ok_or(Error::NonFinite("ik"))?;
        let dq = j.transpose() * (damped * e);
        for c in 0..NUM_INPUTS {
            q[c] += dq[c];
        }
        q = bounds.clamp(&q);
    }
    Ok(q)
}

/// Controller model for a config: the checkpoint when given, else nominal.
pub fn load_model(config: &ScenarioConfig) -> Result<ShapeModel> {
    match &config.checkpoint {
        Some(path) => ShapeModel::from_checkpoint(&Checkpoint::load(path)?),
        None => Ok(ShapeModel::nominal(config.segment)),
    }
}

/// RMS station distance, skipping the shared base point.
pub fn shape_error(x: &DVector<f64>, target: &DVector<f64>) -> f64 {
    let m = x.len() / 3;
    let sum: f64 = (1..m)
        .map(|i| (x.fixed_rows::<3>(3 * i) - target.fixed_rows::<3>(3 * i)).norm_squared())
        .sum();
    (sum / (m - 1) as f64).sqrt()
}

fn full_clearance(curve: &BackboneCurve, spheres: &[crate::obstacle::Sphere]) -> Option<f64> {
    if spheres.is_empty() {
        return None;
    }
    let pts: Vec<Vector3<f64>> = curve.positions().collect();
    Some(min_distance(&pts, spheres))
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioResult> {
    let model = load_model(config)?;
    run_scenario_with_model(config, &model)
}

pub fn run_scenario_with_model(config: &ScenarioConfig, model: &ShapeModel) -> Result<ScenarioResult> {
    config.validate()?;
    let dt = config.dt();
    let m = config.points;
    let params = config.segment;
    let reference = ReferenceGenerator::new(config.reference.clone(), params, config.mppi.bounds, m)?;
    let mut tasks = TaskManager::new(
        ControlSettings {
            weights: config.weights.clone(),
            bounds: config.mppi.bounds,
        },
        m,
    )?;
    let mut controller = MppiController::new(config.mppi.clone(), config.weights.clone(), m, config.seed)?;

    let mut q = match &config.initial {
        InitialCommand::Zero => ActuationVector::zeros(),
        InitialCommand::Given { q } => config.mppi.bounds.clamp(q),
        InitialCommand::MatchReference => {
            solve_tip_ik(&config.plant, &params, &config.mppi.bounds, &reference.sample(0.0)?.tip)?
        }
    };
    let initial_q = q;
    let mut curve = config.plant.backbone(&q, &params)?;
    let mut active_task: Option<&TaskDescriptor> = None;
    let mut series = Vec::with_capacity(config.steps());

    for k in 0..config.steps() {
        let t = k as f64 * dt;
        let latest = config.tasks.iter().filter(|tt| tt.at <= t).last().map(|tt| &tt.task);
        if latest != active_task {
            let eff = match latest {
                Some(d) => tasks.set_task(d.clone())?.clone(),
                None => tasks.revert().clone(),
            };
            controller.set_weights(eff.weights)?;
            controller.set_bounds(eff.bounds)?;
            active_task = latest;
        }

        let x0 = downsample_state(&curve, m)?;
        let samples: Vec<ReferenceSample> = (1..=config.mppi.horizon)
            .map(|h| reference.sample(t + h as f64 * dt))
            .collect::<Result<_>>()?;
        let targets: Vec<HorizonTarget> = samples
            .into_iter()
            .map(|s| HorizonTarget {
                tip: s.tip,
                shape: match config.shape_mode {
                    ShapeMode::None => None,
                    ShapeMode::Reference => s.shape,
                    ShapeMode::HoldCurrent => Some(x0.clone()),
                },
            })
            .collect();
        let obstacles: Vec<_> = if config.obstacles.is_empty() {
            Vec::new()
        } else {
            (1..=config.mppi.horizon)
                .map(|h| config.obstacles.at(t + h as f64 * dt))
                .collect()
        };

        let step = controller.step(model, &q, Some(&x0), &targets, &obstacles)?;
        q = step.q_next;
        curve = config.plant.backbone(&q, &params)?;

        let t1 = t + dt;
        let now = reference.sample(t1)?;
        let x = downsample_state(&curve, m)?;
        let tip = curve.tip();
        series.push(SeriesRow {
            t: t1,
            ref_tip: now.tip.into(),
            tip: tip.into(),
            tip_error: (tip - now.tip).norm(),
            shape_error: now.shape.as_ref().map(|s| shape_error(&x, s)),
            q: q.0,
            x: x.as_slice().to_vec(),
            cost: step.predicted,
            min_clearance: full_clearance(&curve, &config.obstacles.at(t1)),
            feasible: step.feasible,
        });
    }
    let summary = compute_metrics(&series)?;
    Ok(ScenarioResult {
        name: config.name.clone(),
        seed: config.seed,
        initial_q,
        series,
        summary,
    })
}
