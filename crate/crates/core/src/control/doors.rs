use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::schedule::time_of_day;
use crate::command::{Action, ActuatorCommand, CommandSource, ServoPosition};
use crate::topology::{BuildingTopology, DeviceType};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DoorError {
    #[error("unknown device {0}")]
    UnknownDevice(String),
    #[error("device {device_id} is a {device_type}, not a door or window")]
    NotServo { device_id: String, device_type: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestOrigin {
    User,
    Automation,
}

/// Status change sent to residents whenever a door or window is commanded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoorNotification {
    pub device_id: String,
    pub zone_id: String,
    pub device_type: DeviceType,
    pub position: ServoPosition,
    pub source: CommandSource,
    pub timestamp: f64,
}

pub fn door_window_command(
    topology: &BuildingTopology,
    device_id: &str,
    position: ServoPosition,
    origin: RequestOrigin,
    now_s: f64,
) -> Result<(ActuatorCommand, DoorNotification), DoorError> {
    let device = topology.device(device_id).ok_or_else(|| DoorError::UnknownDevice(device_id.to_string()))?;
    if !device.device_type.is_servo() {
        return Err(DoorError::NotServo { device_id: device_id.to_string(), device_type: device.device_type.as_str() });
    }
    let source = match origin {
        RequestOrigin::User => CommandSource::User,
        RequestOrigin::Automation => CommandSource::Safety,
    };
    let command = ActuatorCommand::new(device_id, Action::Position(position), now_s, source)
        .expect("positions carry no range");
    let notification = DoorNotification {
        device_id: device_id.to_string(),
        zone_id: device.zone_id.clone(),
        device_type: device.device_type,
        position,
        source,
        timestamp: now_s,
    };
    Ok((command, notification))
}

/// Closes every door and window once a day at a fixed time of day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NightLockRule {
    pub time_of_day_s: f64,
}

impl NightLockRule {
    /// True on the tick whose interval `(tod - dt, tod]` contains the lock time.
    pub fn fires(&self, time_of_day_s: f64, dt_s: f64) -> bool {
        time_of_day(time_of_day_s - self.time_of_day_s) < dt_s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::default_topology;

    #[test]
    fn user_opens_front_door() {
        let topo = default_topology();
        let (cmd, note) = door_window_command(&topo, "front-door", ServoPosition::Open, RequestOrigin::User, 42.0).unwrap();
        assert_eq!(cmd.action, Action::Position(ServoPosition::Open));
        assert_eq!(cmd.source, CommandSource::User);
        assert_eq!(note.zone_id, "dining");
        assert_eq!(note.timestamp, 42.0);
    }

    #[test]
    fn rejects_non_servo_and_unknown() {
        let topo = default_topology();
        assert_eq!(
            door_window_command(&topo, "f1-kitchen-heater", ServoPosition::Open, RequestOrigin::User, 0.0),
            Err(DoorError::NotServo { device_id: "f1-kitchen-heater".into(), device_type: "heater" })
        );
        assert_eq!(
            door_window_command(&topo, "nope", ServoPosition::Open, RequestOrigin::User, 0.0),
            Err(DoorError::UnknownDevice("nope".into()))
        );
    }

    #[test]
    fn night_lock_fires_once_per_day() {
        let rule = NightLockRule { time_of_day_s: 23.0 * 3600.0 };
        let fired: Vec<u32> = (0..2 * 86_400u32).step_by(5).filter(|&t| rule.fires(t as f64, 5.0)).collect();
        assert_eq!(fired, vec![82_800, 82_800 + 86_400]);
        let topo = default_topology();
        let (cmd, _) =
            door_window_command(&topo, "f1-kitchen-window", ServoPosition::Closed, RequestOrigin::Automation, 82_800.0).unwrap();
        assert_eq!(cmd.source, CommandSource::Safety);
    }
}
