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
//! Finite-difference validation of the batch Jacobian.

use std::process::ExitCode;

use anyhow::Result;
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use tdcr_core::backbone::{downsample_state, ActuationBounds, ActuationVector, NUM_INPUTS};
use tdcr_core::jacobian::{central_difference_jacobian, sequential_jacobian, JacobianMatrix, DEFAULT_DELTA};
use tdcr_core::model::ShapeModel;
use tdcr_core::residual::Checkpoint;
use tdcr_core::scenario::trials::draw_target;

/// Batch and sequential stencils must agree to round-off.
const BATCH_TOL: f64 = 1e-9;
/// Halving the step moves a central difference by O(δ²) only.
const STEP_TOL: f64 = 1e-5;
/// `∂tip_z/∂q_ins` at the straight pose.
const INSERTION_TOL: f64 = 1e-6;

#[derive(Args)]
pub struct CheckArgs {
    #[arg(long)]
    checkpoint: Option<std::path::PathBuf>,
    /// Downsampled stations.
    #[arg(long, default_value_t = 10)]
    points: usize,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    /// Random actuations checked besides the straight pose.
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Serialize)]
struct Report {
    points: usize,
    delta: f64,
    configurations: usize,
    max_batch_vs_sequential: f64,
    max_step_halving_change: f64,
    /// Largest `‖x(q+dq) − x0 − J·dq‖∞ / ‖x(q+dq) − x0‖∞` over the sample.
    max_relative_linearization_error: f64,
    insertion_tip_z: f64,
    passed: bool,
}

fn max_abs_diff(a: &JacobianMatrix, b: &JacobianMatrix) -> f64 {
    (&a.entries - &b.entries).amax()
}

pub fn run(a: CheckArgs) -> Result<ExitCode> {
    let model = match &a.checkpoint {
        Some(p) => ShapeModel::from_checkpoint(&Checkpoint::load(p)?)?,
        None => ShapeModel::nominal(Default::default()),
    };
    let bounds = ActuationBounds::default();
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut qs = vec![ActuationVector::zeros()];
    qs.extend((0..a.samples).map(|_| draw_target(&mut rng, &bounds)));

    let mut report = Report {
        points: a.points,
        delta: a.delta,
        configurations: qs.len(),
        max_batch_vs_sequential: 0.0,
        max_step_halving_change: 0.0,
        max_relative_linearization_error: 0.0,
        insertion_tip_z: f64::NAN,
        passed: false,
    };
    for (i, q) in qs.iter().enumerate() {
        let batch = central_difference_jacobian(q, a.points, a.delta, &model, &bounds)?;
        let seq = sequential_jacobian(q, a.points, a.delta, &model, &bounds)?;
        let half = central_difference_jacobian(q, a.points, a.delta / 2.0, &model, &bounds)?;
        report.max_batch_vs_sequential = report.max_batch_vs_sequential.max(max_abs_diff(&batch, &seq));
        report.max_step_halving_change = report.max_step_halving_change.max(max_abs_diff(&batch, &half));

        let mut dq = [0.0; NUM_INPUTS];
        for (j, d) in dq.iter_mut().enumerate() {
            *d = if (i + j) % 2 == 0 { 1e-4 } else { -1e-4 };
        }
        let mut moved = *q;
        for j in 0..NUM_INPUTS {
            moved[j] += dq[j];
        }
        let actual = downsample_state(&model.backbone(&moved)?, a.points)?;
        let shift = (&actual - &batch.base_x).amax();
        let miss = (&actual - batch.predict(&dq)).amax();
        report.max_relative_linearization_error = report.max_relative_linearization_error.max(miss / shift);
        if i == 0 {
            // Column 0 is insertion; the tip z row is last.
            report.insertion_tip_z = batch.entries[(batch.entries.nrows() - 1, 0)];
        }
    }
    report.passed = report.max_batch_vs_sequential <= BATCH_TOL
        && report.max_step_halving_change <= STEP_TOL
        && (report.insertion_tip_z - 1.0).abs() <= INSERTION_TOL;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
