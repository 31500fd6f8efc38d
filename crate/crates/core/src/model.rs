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
//! Shape model used by the controller: nominal kinematics, optionally
//! corrected by a trained residual network.

use crate::backbone::{ActuationVector, BackboneCurve, Integrator, SegmentParams};
use crate::error::Result;
use crate::residual::{BatchSolution, BatchSolver, Checkpoint, ResidualNetwork};

#[derive(Clone, Debug, PartialEq)]
pub struct ShapeModel {
    pub params: SegmentParams,
    pub integrator: Integrator,
    pub network: Option<ResidualNetwork>,
}

impl ShapeModel {
    pub fn nominal(params: SegmentParams) -> Self {
        Self {
            params,
            integrator: Integrator::Rk4,
            network: None,
        }
    }

    pub fn hybrid(params: SegmentParams, integrator: Integrator, network: ResidualNetwork) -> Self {
        Self {
            params,
            integrator,
            network: Some(network),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        Ok(Self::hybrid(ck.segment, ck.integrator, ck.network()?))
    }

    pub fn solver(&self) -> BatchSolver<'_> {
        BatchSolver::new(self.params, self.integrator, self.network.as_ref())
    }

    pub fn batch_integrate(&self, qs: &[ActuationVector]) -> Result<BatchSolution> {
        self.solver().integrate(qs)
    }

    pub fn backbone(&self, q: &ActuationVector) -> Result<BackboneCurve> {
        Ok(self
            .batch_integrate(std::slice::from_ref(q))?
            .into_curves()
            .pop()
            .expect("one sample"))
    }
}
