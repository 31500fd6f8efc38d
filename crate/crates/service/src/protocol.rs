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
//! Wire messages.
//!
//! Every frame is one JSON object with a `type` tag and a `schema_version`.
//! Parsing is strict: a missing or foreign version and any unknown field
//! reject the whole message.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use tdcr_core::mppi::ObjectiveWeights;
use tdcr_core::scenario::VirtualDelta;
use tdcr_core::task::TaskDescriptor;

use crate::error::{Result, ServiceError};

pub const SCHEMA_VERSION: u32 = 1;

/// Commands a client may send.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CommandMessage {
    VirtualRobotDelta(VirtualDelta),
    TaskDescriptor(TaskDescriptor),
    WeightSet {
        weights: ObjectiveWeights,
    },
    RunControl {
        action: RunAction,
    },
    /// Take command authority if nobody holds it.
    ClaimAuthority,
    ReleaseAuthority,
}

impl CommandMessage {
    /// Whether the sender must hold command authority.
    pub fn needs_authority(&self) -> bool {
        !matches!(self, Self::ClaimAuthority | Self::ReleaseAuthority)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunAction {
    Start,
    Pause,
    Reset,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSnapshot {
    pub center: [f64; 3],
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelemetryFrame {
    /// Strictly increasing per service.
    pub seq: u64,
    /// Wall seconds since the service started; never decreases.
    pub timestamp: f64,
    /// Simulated seconds since the last reset.
    pub sim_time: f64,
    pub running: bool,
    /// Controlled robot backbone.
    pub backbone: Vec<[f64; 3]>,
    pub virtual_backbone: Vec<[f64; 3]>,
    pub q: [f64; 7],
    pub tip_error: f64,
    pub shape_error: f64,
    pub weights: ObjectiveWeights,
    pub task: TaskDescriptor,
    /// `None` with no obstacles configured.
    pub min_clearance: Option<f64>,
    pub obstacles: Vec<ObstacleSnapshot>,
    /// Client currently holding command authority.
    pub authority: Option<u64>,
}

impl TelemetryFrame {
    pub fn is_finite(&self) -> bool {
        let points = self.backbone.iter().chain(&self.virtual_backbone).flatten();
        let scalars = [self.timestamp, self.sim_time, self.tip_error, self.shape_error];
        points.chain(&self.q).chain(&scalars).all(|v| v.is_finite())
            && self.min_clearance.is_none_or(f64::is_finite)
            && self
                .obstacles
                .iter()
                .all(|o| o.center.iter().chain([&o.radius]).all(|v| v.is_finite()))
    }
}

/// Messages the service sends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ServerMessage {
    /// Sent on connect and after every claim or release.
    Authority {
        client_id: u64,
        granted: bool,
    },
    Telemetry(TelemetryFrame),
    /// Reply to the sender of a rejected message.
    Error {
        message: String,
    },
}

pub fn encode<T: Serialize>(message: &T) -> Result<String> {
    let mut value = serde_json::to_value(message)?;
    let Value::Object(map) = &mut value else {
        return Err(ServiceError::Protocol("message is not an object".into()));
    };
    map.insert("schema_version".into(), SCHEMA_VERSION.into());
    Ok(serde_json::to_string(&value)?)
}

pub fn decode<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut map: Map<String, Value> = serde_json::from_str(text)?;
    match map.remove("schema_version") {
        Some(Value::Number(n)) if n.as_u64() == Some(SCHEMA_VERSION as u64) => {}
        Some(v) => return Err(ServiceError::Protocol(format!("unsupported schema_version {v}"))),
        None => return Err(ServiceError::Protocol("missing schema_version".into())),
    }
    Ok(serde_json::from_value(Value::Object(map))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_wire_shape() {
        let text = r#"{"type":"virtual_robot_delta","schema_version":1,"segment":2,"curvature":[0.5,0.0]}"#;
        let cmd: CommandMessage = decode(text).unwrap();
        assert_eq!(
            cmd,
            CommandMessage::VirtualRobotDelta(VirtualDelta {
                segment: 2,
                curvature: [0.5, 0.0],
                insertion: 0.0
            })
        );
    }

    #[test]
    fn unknown_fields_and_versions_rejected() {
        for bad in [
            r#"{"type":"run_control","schema_version":1,"action":"start","extra":1}"#,
            r#"{"type":"virtual_robot_delta","schema_version":1,"segment":1,"bogus":0}"#,
            r#"{"type":"task_descriptor","schema_version":1,"mode":"clearance","magnitude":1,"x":2}"#,
            r#"{"type":"run_control","schema_version":2,"action":"start"}"#,
            r#"{"type":"run_control","action":"start"}"#,
            r#"{"type":"teleport","schema_version":1}"#,
            r#"[1,2]"#,
        ] {
            assert!(decode::<CommandMessage>(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn tags_are_snake_case() {
        let text = encode(&CommandMessage::RunControl {
            action: RunAction::Pause,
        })
        .unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["type"], "run_control");
        assert_eq!(v["action"], "pause");
        assert_eq!(v["schema_version"], 1);
    }
}
