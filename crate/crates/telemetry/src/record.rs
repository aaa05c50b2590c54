use std::fmt;

use sb_core::plant::ReadingValue;
use sb_core::wire::{
    parse_topic, CommandPayload, ControlRequest, EventPayload, ReadingPayload, Topic, AMBIENT_DEVICE,
    METRIC_HUMIDITY_SETPOINT, METRIC_TEMPERATURE_SETPOINT,
};
use sb_core::command::Action;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordClass {
    Sensor,
    Command,
    Event,
    Energy,
}

impl RecordClass {
    pub const ALL: [RecordClass; 4] = [RecordClass::Sensor, RecordClass::Command, RecordClass::Event, RecordClass::Energy];

    pub fn as_str(self) -> &'static str {
        match self {
            RecordClass::Sensor => "sensor",
            RecordClass::Command => "command",
            RecordClass::Event => "event",
            RecordClass::Energy => "energy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for RecordClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RecordValue {
    Bool(bool),
    Number(f64),
    Text(String),
}

impl From<ReadingValue> for RecordValue {
    fn from(v: ReadingValue) -> Self {
        match v {
            ReadingValue::Bool(b) => RecordValue::Bool(b),
            ReadingValue::Number(x) => RecordValue::Number(x),
            ReadingValue::Text(s) => RecordValue::Text(s),
        }
    }
}

impl RecordValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            RecordValue::Number(x) => Some(*x),
            _ => None,
        }
    }
}

/// A stored sample. `id` is assigned by the store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelemetryRecord {
    pub id: u64,
    pub timestamp: f64,
    pub class: RecordClass,
    pub device_id: String,
    pub zone_id: Option<String>,
    pub floor: Option<u32>,
    pub metric: String,
    pub value: RecordValue,
}

/// Key under which repeated deliveries collapse to one record.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) struct DedupKey {
    device_id: String,
    class: RecordClass,
    timestamp_bits: u64,
    metric: String,
}

impl TelemetryRecord {
    pub(crate) fn dedup_key(&self) -> DedupKey {
        DedupKey {
            device_id: self.device_id.clone(),
            class: self.class,
            timestamp_bits: self.timestamp.to_bits(),
            metric: self.metric.clone(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("topic {0} is not stored")]
    UnknownTopic(String),
    #[error("schema violation on {topic}: {reason}")]
    Schema { topic: String, reason: String },
}

fn schema(topic: &str, reason: impl Into<String>) -> ParseError {
    ParseError::Schema { topic: topic.to_string(), reason: reason.into() }
}

fn check_timestamp(topic: &str, t: f64) -> Result<(), ParseError> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(schema(topic, format!("timestamp {t} must be finite and non-negative")));
    }
    Ok(())
}

fn check_value(topic: &str, v: &ReadingValue) -> Result<(), ParseError> {
    if let ReadingValue::Number(x) = v {
        if !x.is_finite() {
            return Err(schema(topic, "value is not finite"));
        }
    }
    Ok(())
}

fn reading(topic: &str, payload: &[u8]) -> Result<ReadingPayload, ParseError> {
    let r: ReadingPayload = serde_json::from_slice(payload).map_err(|e| schema(topic, e.to_string()))?;
    check_timestamp(topic, r.timestamp)?;
    check_value(topic, &r.value)?;
    if r.device_id.is_empty() || r.metric.is_empty() {
        return Err(schema(topic, "empty device_id or metric"));
    }
    Ok(r)
}

/// Validates one broker message against the schema of its topic class. The
/// returned record has id 0 until a store accepts it.
pub fn parse_message(topic: &str, payload: &[u8]) -> Result<TelemetryRecord, ParseError> {
    let parsed = parse_topic(topic).ok_or_else(|| ParseError::UnknownTopic(topic.to_string()))?;
    let draft = |class, timestamp, device_id: String, zone_id, floor, metric: String, value| TelemetryRecord {
        id: 0,
        timestamp,
        class,
        device_id,
        zone_id,
        floor,
        metric,
        value,
    };
    Ok(match parsed {
        Topic::Reading { floor, zone, device } => {
            let r = reading(topic, payload)?;
            if r.device_id != device {
                return Err(schema(topic, format!("device_id {} does not match topic", r.device_id)));
            }
            draft(RecordClass::Sensor, r.timestamp, device, Some(zone), Some(floor), r.metric, r.value.into())
        }
        Topic::Ambient => {
            let r = reading(topic, payload)?;
            if r.device_id != AMBIENT_DEVICE {
                return Err(schema(topic, "ambient readings must come from device \"ambient\""));
            }
            draft(RecordClass::Sensor, r.timestamp, r.device_id, None, None, r.metric, r.value.into())
        }
        Topic::Energy { floor } => {
            let r = reading(topic, payload)?;
            if !matches!(r.value, ReadingValue::Number(_)) {
                return Err(schema(topic, "energy value must be a number"));
            }
            draft(RecordClass::Energy, r.timestamp, r.device_id, None, Some(floor), r.metric, r.value.into())
        }
        Topic::Setpoint { floor, zone } => {
            let r = reading(topic, payload)?;
            if r.metric != METRIC_TEMPERATURE_SETPOINT && r.metric != METRIC_HUMIDITY_SETPOINT {
                return Err(schema(topic, format!("unexpected setpoint metric {}", r.metric)));
            }
            if !matches!(r.value, ReadingValue::Number(_)) {
                return Err(schema(topic, "setpoint must be a number"));
            }
            draft(RecordClass::Command, r.timestamp, zone.clone(), Some(zone), Some(floor), r.metric, r.value.into())
        }
        Topic::Command { floor, zone, device } => {
            let c: CommandPayload = serde_json::from_slice(payload).map_err(|e| schema(topic, e.to_string()))?;
            check_timestamp(topic, c.timestamp)?;
            if c.device_id != device {
                return Err(schema(topic, format!("device_id {} does not match topic", c.device_id)));
            }
            c.clone().into_command().map_err(|e| schema(topic, e.to_string()))?;
            let metric = c.action.name().to_string();
            let value = match c.action {
                Action::Duty(x) | Action::Level(x) if x.is_finite() => RecordValue::Number(x),
                Action::Position(p) => RecordValue::Text(p.as_str().to_string()),
                _ => return Err(schema(topic, "command value is not finite")),
            };
            draft(RecordClass::Command, c.timestamp, device, Some(zone), Some(floor), metric, value)
        }
        Topic::Event(kind) => {
            let e: EventPayload = serde_json::from_slice(payload).map_err(|e| schema(topic, e.to_string()))?;
            check_timestamp(topic, e.timestamp)?;
            if e.device_id.is_empty() {
                return Err(schema(topic, "empty device_id"));
            }
            draft(RecordClass::Event, e.timestamp, e.device_id, e.zone_id, e.floor, kind.as_str().to_string(), RecordValue::Text(e.detail))
        }
        Topic::Control { floor, kind } => {
            let req = ControlRequest::from_json(kind, payload).map_err(|e| schema(topic, e.to_string()))?;
            check_timestamp(topic, req.timestamp())?;
            let zone = match &req {
                ControlRequest::Setpoint(s) => s.zone_id.clone(),
                _ => None,
            };
            let detail = String::from_utf8(req.to_json()).expect("JSON is UTF-8");
            draft(
                RecordClass::Event,
                req.timestamp(),
                format!("api-floor{floor}"),
                zone,
                Some(floor),
                format!("request_{}", kind.as_str()),
                RecordValue::Text(detail),
            )
        }
    })
}
