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
//! # tdcr-core
//!
//! Shape-aware whole-body control for tendon-driven continuum robots.
//!
//! * [`backbone`] – Cosserat-rod kinematics from actuation to full shape.
//! * [`residual`] – learned residual vector field, batch arc-length solver and training.
//! * [`jacobian`] – batch central-difference Jacobians of the downsampled shape.
//! * [`mppi`] – sampling-based predictive controller with shape and obstacle costs.
//! * [`task`] – live task presets that patch objective weights and bounds.
//! * [`scenario`] – references, obstacles, synthetic plants, metrics and the closed-loop runner.

pub mod backbone;
pub mod error;
pub mod jacobian;
pub mod model;
pub mod mppi;
pub mod obstacle;
pub mod plant;
pub mod residual;
pub mod scenario;
pub mod task;

pub use error::{Error, Result};
