//! Actuator commands exchanged between the controllers and the plant.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServoPosition {
    Open,
    Closed,
}

impl ServoPosition {
    pub fn as_str(self) -> &'static str {
        match self {
            ServoPosition::Open => "open",
            ServoPosition::Closed => "closed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "open" => Some(ServoPosition::Open),
            "closed" => Some(ServoPosition::Closed),
            _ => None,
        }
    }
}

impl fmt::Display for ServoPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", content = "value", rename_all = "snake_case")]
pub enum Action {
    /// Heater or fan duty in `[0, 1]`.
    Duty(f64),
    /// Door or window target position.
    Position(ServoPosition),
    /// LED strip level in `[0, 1]`.
    Level(f64),
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::Duty(_) => "duty",
            Action::Position(_) => "position",
            Action::Level(_) => "level",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandSource {
    Mpc,
    Schedule,
    Lighting,
    User,
    Safety,
}

impl CommandSource {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandSource::Mpc => "mpc",
            CommandSource::Schedule => "schedule",
            CommandSource::Lighting => "lighting",
            CommandSource::User => "user",
            CommandSource::Safety => "safety",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mpc" => Some(CommandSource::Mpc),
            "schedule" => Some(CommandSource::Schedule),
            "lighting" => Some(CommandSource::Lighting),
            "user" => Some(CommandSource::User),
            "safety" => Some(CommandSource::Safety),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{action} {value} for {device_id} outside [0, 1]")]
pub struct RangeError {
    pub device_id: String,
    pub action: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorCommand {
    pub device_id: String,
    #[serde(flatten)]
    pub action: Action,
    pub issued_at: f64,
    pub source: CommandSource,
}

impl ActuatorCommand {
    /// Builds a command, refusing unsaturated duty or level values.
    pub fn new(
        device_id: impl Into<String>,
        action: Action,
        issued_at: f64,
        source: CommandSource,
    ) -> Result<Self, RangeError> {
        let device_id = device_id.into();
        if let Action::Duty(v) | Action::Level(v) = action {
            if !(0.0..=1.0).contains(&v) {
                return Err(RangeError { device_id, action: action.name(), value: v });
            }
        }
        Ok(Self { device_id, action, issued_at, source })
    }
}
