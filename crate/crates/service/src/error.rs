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

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] tdcr_core::Error),
    #[error("malformed message: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad service config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("{0}")]
    Config(String),
    #[error("command queue full")]
    QueueFull,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ServiceError>;
