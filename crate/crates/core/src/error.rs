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
use std::io;

use thiserror::Error;

/// Errors produced by the modeling, learning and control layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid segment parameters: {0}")]
    InvalidParams(String),
    #[error("segment length must be positive, got {0} m")]
    NonPositiveLength(f64),
    #[error("at least {min} downsampled points are required, got {got}")]
    TooFewPoints { min: usize, got: usize },
    #[error("batch must contain at least one sample")]
    EmptyBatch,
    #[error("station s = {station} m lies outside the curve [0, {length}] m")]
    StationOutsideCurve { station: f64, length: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("segment index {0} is out of range (1..=3)")]
    InvalidSegment(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Diverged { iteration: usize, loss: f64 },
    #[error("unsupported checkpoint: {0}")]
    Checkpoint(String),
    #[error("empty series: {0}")]
    EmptySeries(&'static str),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
