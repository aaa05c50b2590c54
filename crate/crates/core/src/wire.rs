//! Topic layout and JSON payloads exchanged over the broker.
//!
//! | topic                                   | payload            | class   |
//! |-----------------------------------------|--------------------|---------|
//! | `sb/floor{n}/{zone}/{device}/reading`   | [`ReadingPayload`] | sensor  |
//! | `sb/floor{n}/{zone}/{device}/cmd`       | [`CommandPayload`] | command |
//! | `sb/floor{n}/{zone}/setpoint`           | [`ReadingPayload`] | command |
//! | `sb/floor{n}/energy`                    | [`ReadingPayload`] | energy  |
//! | `sb/env/ambient`                        | [`ReadingPayload`] | sensor  |
//! | `sb/events/{kind}`                      | [`EventPayload`]   | event   |
//! | `sb/control/floor{n}/{request}`         | [`ControlRequest`] | event   |
//!
//! Every payload carries exactly one metric.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::{Action, ActuatorCommand, CommandSource, ServoPosition};
use crate::control::{FloorInput, LightingMode};
use crate::plant::ReadingValue;

pub const ROOT: &str = "sb";
pub const AMBIENT_TOPIC: &str = "sb/env/ambient";
pub const AMBIENT_DEVICE: &str = "ambient";
pub const METRIC_OUTDOOR_TEMPERATURE: &str = "outdoor_temperature";
pub const METRIC_OUTDOOR_HUMIDITY: &str = "outdoor_humidity";
pub const METRIC_TEMPERATURE_SETPOINT: &str = "temperature_setpoint";
pub const METRIC_HUMIDITY_SETPOINT: &str = "humidity_setpoint";
pub const METRIC_POWER: &str = "power_w";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WireError {
    #[error("topic {0} is not part of the layout")]
    UnknownTopic(String),
    #[error("malformed payload on {topic}: {reason}")]
    Payload { topic: String, reason: String },
}

pub fn reading_topic(floor: u32, zone: &str, device: &str) -> String {
    format!("{ROOT}/floor{floor}/{zone}/{device}/reading")
}

pub fn command_topic(floor: u32, zone: &str, device: &str) -> String {
    format!("{ROOT}/floor{floor}/{zone}/{device}/cmd")
}

pub fn setpoint_topic(floor: u32, zone: &str) -> String {
    format!("{ROOT}/floor{floor}/{zone}/setpoint")
}

pub fn energy_topic(floor: u32) -> String {
    format!("{ROOT}/floor{floor}/energy")
}

pub fn event_topic(kind: EventKind) -> String {
    format!("{ROOT}/events/{}", kind.as_str())
}

pub fn control_topic(floor: u32, kind: RequestKind) -> String {
    format!("{ROOT}/control/floor{floor}/{}", kind.as_str())
}

/// Everything a floor controller must hear: its own floor, its requests and the weather.
pub fn controller_filters(floor: u32) -> [String; 3] {
    [
        format!("{ROOT}/floor{floor}/+/+/reading"),
        format!("{ROOT}/control/floor{floor}/+"),
        AMBIENT_TOPIC.to_string(),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Camera,
    Door,
    Diagnostic,
    CommandRejected,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Camera => "camera",
            EventKind::Door => "door",
            EventKind::Diagnostic => "diagnostic",
            EventKind::CommandRejected => "command_rejected",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "camera" => EventKind::Camera,
            "door" => EventKind::Door,
            "diagnostic" => EventKind::Diagnostic,
            "command_rejected" => EventKind::CommandRejected,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Setpoint,
    Light,
    Door,
    Away,
}

impl RequestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RequestKind::Setpoint => "setpoint",
            RequestKind::Light => "light",
            RequestKind::Door => "door",
            RequestKind::Away => "away",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "setpoint" => RequestKind::Setpoint,
            "light" => RequestKind::Light,
            "door" => RequestKind::Door,
            "away" => RequestKind::Away,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Topic {
    Reading { floor: u32, zone: String, device: String },
    Command { floor: u32, zone: String, device: String },
    Setpoint { floor: u32, zone: String },
    Energy { floor: u32 },
    Ambient,
    Event(EventKind),
    Control { floor: u32, kind: RequestKind },
}

fn floor_level(s: &str) -> Option<u32> {
    s.strip_prefix("floor")?.parse().ok()
}

pub fn parse_topic(topic: &str) -> Option<Topic> {
    let levels: Vec<&str> = topic.split('/').collect();
    if levels.first() != Some(&ROOT) {
        return None;
    }
    match levels[1..] {
        ["env", "ambient"] => Some(Topic::Ambient),
        ["events", kind] => EventKind::parse(kind).map(Topic::Event),
        ["control", floor, kind] => {
            Some(Topic::Control { floor: floor_level(floor)?, kind: RequestKind::parse(kind)? })
        }
        [floor, "energy"] => Some(Topic::Energy { floor: floor_level(floor)? }),
        [floor, zone, "setpoint"] => Some(Topic::Setpoint { floor: floor_level(floor)?, zone: zone.into() }),
        [floor, zone, device, "reading"] => {
            Some(Topic::Reading { floor: floor_level(floor)?, zone: zone.into(), device: device.into() })
        }
        [floor, zone, device, "cmd"] => {
            Some(Topic::Command { floor: floor_level(floor)?, zone: zone.into(), device: device.into() })
        }
        _ => None,
    }
}

/// One measured or derived value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadingPayload {
    pub timestamp: f64,
    pub device_id: String,
    pub metric: String,
    pub value: ReadingValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandPayload {
    pub timestamp: f64,
    pub device_id: String,
    #[serde(flatten)]
    pub action: Action,
    pub source: CommandSource,
}

impl From<&ActuatorCommand> for CommandPayload {
    fn from(c: &ActuatorCommand) -> Self {
        Self { timestamp: c.issued_at, device_id: c.device_id.clone(), action: c.action, source: c.source }
    }
}

impl CommandPayload {
    pub fn into_command(self) -> Result<ActuatorCommand, crate::command::RangeError> {
        ActuatorCommand::new(self.device_id, self.action, self.timestamp, self.source)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventPayload {
    pub timestamp: f64,
    pub device_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zone_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<u32>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetpointRequest {
    pub timestamp: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zone_id: Option<String>,
    pub temperature_c: f64,
    pub humidity_pct: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightRequest {
    pub timestamp: f64,
    pub device_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<LightingMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoorRequest {
    pub timestamp: f64,
    pub device_id: String,
    pub position: ServoPosition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AwayRequest {
    pub timestamp: f64,
    pub away: bool,
}

/// Resident request addressed to one floor controller.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlRequest {
    Setpoint(SetpointRequest),
    Light(LightRequest),
    Door(DoorRequest),
    Away(AwayRequest),
}

impl ControlRequest {
    pub fn kind(&self) -> RequestKind {
        match self {
            ControlRequest::Setpoint(_) => RequestKind::Setpoint,
            ControlRequest::Light(_) => RequestKind::Light,
            ControlRequest::Door(_) => RequestKind::Door,
            ControlRequest::Away(_) => RequestKind::Away,
        }
    }

    pub fn timestamp(&self) -> f64 {
        match self {
            ControlRequest::Setpoint(r) => r.timestamp,
            ControlRequest::Light(r) => r.timestamp,
            ControlRequest::Door(r) => r.timestamp,
            ControlRequest::Away(r) => r.timestamp,
        }
    }

    pub fn to_json(&self) -> Vec<u8> {
        match self {
            ControlRequest::Setpoint(r) => to_json(r),
            ControlRequest::Light(r) => to_json(r),
            ControlRequest::Door(r) => to_json(r),
            ControlRequest::Away(r) => to_json(r),
        }
    }

    pub fn from_json(kind: RequestKind, payload: &[u8]) -> Result<Self, serde_json::Error> {
        Ok(match kind {
            RequestKind::Setpoint => ControlRequest::Setpoint(serde_json::from_slice(payload)?),
            RequestKind::Light => ControlRequest::Light(serde_json::from_slice(payload)?),
            RequestKind::Door => ControlRequest::Door(serde_json::from_slice(payload)?),
            RequestKind::Away => ControlRequest::Away(serde_json::from_slice(payload)?),
        })
    }

    pub fn into_input(self) -> FloorInput {
        match self {
            ControlRequest::Setpoint(r) => FloorInput::Setpoint {
                zone_id: r.zone_id,
                temperature_c: r.temperature_c,
                humidity_pct: r.humidity_pct,
                duration_s: r.duration_s,
            },
            ControlRequest::Light(r) => FloorInput::Light { device_id: r.device_id, level: r.level, mode: r.mode },
            ControlRequest::Door(r) => FloorInput::Door { device_id: r.device_id, position: r.position },
            ControlRequest::Away(r) => FloorInput::Away(r.away),
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("wire payloads always serialize")
}

/// Translates one broker message into controller inputs. Messages that carry
/// nothing a controller consumes yield an empty list.
pub fn decode_floor_input(topic: &str, payload: &[u8]) -> Result<Vec<FloorInput>, WireError> {
    let bad = |reason: String| WireError::Payload { topic: topic.to_string(), reason };
    let parsed = parse_topic(topic).ok_or_else(|| WireError::UnknownTopic(topic.to_string()))?;
    match parsed {
        Topic::Reading { zone, .. } => {
            let r: ReadingPayload = serde_json::from_slice(payload).map_err(|e| bad(e.to_string()))?;
            Ok(match (r.metric.as_str(), r.value) {
                ("temperature", ReadingValue::Number(v)) => vec![FloorInput::Temperature { zone_id: zone, value: v }],
                ("humidity", ReadingValue::Number(v)) => vec![FloorInput::Humidity { zone_id: zone, value: v }],
                ("motion", ReadingValue::Bool(b)) => vec![FloorInput::Motion { zone_id: zone, detected: b }],
                _ => vec![],
            })
        }
        Topic::Ambient => {
            let r: ReadingPayload = serde_json::from_slice(payload).map_err(|e| bad(e.to_string()))?;
            Ok(match (r.metric.as_str(), r.value) {
                (METRIC_OUTDOOR_TEMPERATURE, ReadingValue::Number(v)) => vec![FloorInput::AmbientTemperature(v)],
                (METRIC_OUTDOOR_HUMIDITY, ReadingValue::Number(v)) => vec![FloorInput::AmbientHumidity(v)],
                _ => vec![],
            })
        }
        Topic::Control { kind, .. } => {
            let req = ControlRequest::from_json(kind, payload).map_err(|e| bad(e.to_string()))?;
            Ok(vec![req.into_input()])
        }
        _ => Ok(vec![]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topics_round_trip() {
        let cases = [
            (reading_topic(1, "kitchen", "f1-kitchen-th"), Topic::Reading { floor: 1, zone: "kitchen".into(), device: "f1-kitchen-th".into() }),
            (command_topic(2, "living", "f2-living-fan"), Topic::Command { floor: 2, zone: "living".into(), device: "f2-living-fan".into() }),
            (setpoint_topic(3, "bedroom"), Topic::Setpoint { floor: 3, zone: "bedroom".into() }),
            (energy_topic(4), Topic::Energy { floor: 4 }),
            (AMBIENT_TOPIC.to_string(), Topic::Ambient),
            (event_topic(EventKind::CommandRejected), Topic::Event(EventKind::CommandRejected)),
            (control_topic(1, RequestKind::Away), Topic::Control { floor: 1, kind: RequestKind::Away }),
        ];
        for (s, t) in cases {
            assert_eq!(parse_topic(&s), Some(t), "{s}");
        }
        assert_eq!(parse_topic("sb/floorx/energy"), None);
        assert_eq!(parse_topic("other/env/ambient"), None);
        assert_eq!(parse_topic("sb/events/unknown"), None);
    }

    #[test]
    fn command_payload_shape() {
        let cmd = ActuatorCommand::new("f1-kitchen-heater", Action::Duty(0.25), 5.0, CommandSource::Mpc).unwrap();
        let json = String::from_utf8(to_json(&CommandPayload::from(&cmd))).unwrap();
        assert_eq!(
            json,
            r#"{"timestamp":5.0,"device_id":"f1-kitchen-heater","action":"duty","value":0.25,"source":"mpc"}"#
        );
        let back: CommandPayload = serde_json::from_str(&json).unwrap();
        assert_eq!(back.into_command().unwrap(), cmd);
    }

    #[test]
    fn decodes_controller_inputs() {
        let reading = ReadingPayload {
            timestamp: 5.0,
            device_id: "f1-kitchen-th".into(),
            metric: "temperature".into(),
            value: ReadingValue::Number(21.5),
        };
        let got = decode_floor_input(&reading_topic(1, "kitchen", "f1-kitchen-th"), &to_json(&reading)).unwrap();
        assert_eq!(got, vec![FloorInput::Temperature { zone_id: "kitchen".into(), value: 21.5 }]);

        let req = ControlRequest::Setpoint(SetpointRequest {
            timestamp: 10.0,
            zone_id: None,
            temperature_c: 23.0,
            humidity_pct: 45.0,
            duration_s: None,
        });
        let got = decode_floor_input(&control_topic(1, RequestKind::Setpoint), &req.to_json()).unwrap();
        assert!(matches!(got[0], FloorInput::Setpoint { temperature_c: 23.0, .. }));

        assert!(decode_floor_input(&control_topic(1, RequestKind::Door), b"{}").is_err());
        assert!(decode_floor_input("nope", b"{}").is_err());
    }
}
