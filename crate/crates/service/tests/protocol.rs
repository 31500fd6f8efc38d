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
//! Recorded wire frames must keep parsing, and re-encode byte for byte.

use serde_json::Value;

use tdcr_service::protocol::{decode, encode};
use tdcr_service::{CommandMessage, ServerMessage, SCHEMA_VERSION};

const TELEMETRY: &str = include_str!("fixtures/telemetry.json");
const COMMANDS: &str = include_str!("fixtures/commands.jsonl");

#[test]
fn recorded_telemetry_round_trips() {
    let text = TELEMETRY.trim_end();
    let msg: ServerMessage = decode(text).unwrap();
    let ServerMessage::Telemetry(frame) = &msg else {
        panic!("fixture is not telemetry");
    };
    assert!(frame.is_finite());
    assert_eq!(frame.backbone.len(), frame.virtual_backbone.len());
    assert_eq!(encode(&msg).unwrap(), text);
}

#[test]
fn recorded_commands_round_trip() {
    let mut kinds = std::collections::BTreeSet::new();
    for line in COMMANDS.lines() {
        let cmd: CommandMessage = decode(line).unwrap();
        let again = encode(&cmd).unwrap();
        assert_eq!(again, line);
        assert_eq!(decode::<CommandMessage>(&again).unwrap(), cmd);
        let v: Value = serde_json::from_str(line).unwrap();
        kinds.insert(v["type"].as_str().unwrap().to_owned());
    }
    // Every command type is covered.
    assert_eq!(kinds.len(), 6);
}

#[test]
fn every_message_carries_the_version() {
    let t: ServerMessage = decode(TELEMETRY.trim_end()).unwrap();
    for text in [
        encode(&t).unwrap(),
        encode(&ServerMessage::Error { message: "x".into() }).unwrap(),
        encode(&ServerMessage::Authority {
            client_id: 3,
            granted: false,
        })
        .unwrap(),
    ] {
        let v: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["schema_version"], SCHEMA_VERSION);
    }
}

#[test]
fn wrong_shapes_are_rejected() {
    let t = TELEMETRY.trim_end();
    for bad in [
        t.replace(r#""seq":41"#, r#""seq":-1"#),
        t.replace(r#""running":true"#, r#""running":"yes""#),
        t.replace(r#""seq":41"#, r#""seq":41,"extra":0"#),
        t.replace(r#""schema_version":1"#, r#""schema_version":"1""#),
    ] {
        assert!(decode::<ServerMessage>(&bad).is_err(), "{bad}");
    }
}
