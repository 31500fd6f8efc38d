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
//! Residual dynamics: the learned correction on top of the nominal Cosserat
//! model, the batch arc-length solver with length masking, and training.
//!
//! The integrated state is 21-dimensional: position (3), row-major
//! orientation (9), curvature (3) and six augmentation channels that start
//! at zero and are driven only by the network.

mod adam;
mod checkpoint;
mod experiment;
mod loss;
mod network;
mod solver;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_loss_history, write_loss_history, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use experiment::{moving_average, run_experiment, worst_rise, Experiment, ExperimentConfig, ExperimentReport};
pub use loss::{masked_training_loss, training_loss, training_loss_with_grad, Station};
pub use network::{Architecture, LayerTape, ResidualNetwork};
pub use solver::{augmented_rhs, nominal_rhs, BatchSolution, BatchSolver, SolveTape};
pub use train::{
    backbone_rms_error, evaluate_loss, generate_dataset, loss_and_gradient, train, Sample, TrainingConfig,
    TrainingReport,
};

use nalgebra::{Matrix3, Vector3};

use crate::backbone::{PoseState, NUM_INPUTS};

pub const STATE_DIM: usize = 21;
/// Network input: state, arc length, actuation.
pub const INPUT_DIM: usize = STATE_DIM + 1 + NUM_INPUTS;
pub const AUG_DIM: usize = 6;

pub(crate) const P: usize = 0;
pub(crate) const R: usize = 3;
pub(crate) const U: usize = 12;
pub(crate) const AUG: usize = 15;

/// Flat 21-dimensional integration state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentedState(pub [f64; STATE_DIM]);

impl AugmentedState {
    /// Pose and curvature from `pose`, augmentation channels zeroed.
    pub fn from_pose(pose: &PoseState) -> Self {
        let mut z = [0.0; STATE_DIM];
        z[P..P + 3].copy_from_slice(pose.position.as_slice());
        for r in 0..3 {
            for c in 0..3 {
                z[R + 3 * r + c] = pose.orientation[(r, c)];
            }
        }
        z[U..U + 3].copy_from_slice(pose.curvature.as_slice());
        Self(z)
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.0[P], self.0[P + 1], self.0[P + 2])
    }

    pub fn orientation(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&self.0[R..R + 9])
    }

    pub fn curvature(&self) -> Vector3<f64> {
        Vector3::new(self.0[U], self.0[U + 1], self.0[U + 2])
    }

    pub fn augmentation(&self) -> &[f64] {
        &self.0[AUG..AUG + AUG_DIM]
    }

    pub fn to_pose(&self) -> PoseState {
        PoseState {
            position: self.position(),
            orientation: self.orientation(),
            curvature: self.curvature(),
        }
    }
}
