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
//! Tele-operation service: a virtual robot driven by operator commands, a
//! controlled robot tracking its shape, and live telemetry over websocket.

pub mod error;
pub mod protocol;
pub mod server;
pub mod session;

pub use error::{Result, ServiceError};
pub use protocol::{CommandMessage, RunAction, ServerMessage, TelemetryFrame, SCHEMA_VERSION};
pub use server::{port_from_env, serve, spawn, spawn_session, ServiceHandle, DEFAULT_PORT, PORT_ENV};
pub use session::{reference_targets, ServiceConfig, SessionCommand, TeleopSession};
