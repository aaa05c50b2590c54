//! Routing and validation of resident requests before they reach the broker.

use sb_core::control::{validate_request, ComfortBounds, ControlError, DoorError};
use sb_core::topology::BuildingTopology;
use sb_core::wire::{AwayRequest, ControlRequest, DoorRequest, LightRequest, SetpointRequest};
use thiserror::Error;

use crate::scenario::Request;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RequestError {
    #[error("{0}")]
    Malformed(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Rejected(String),
}

impl From<ControlError> for RequestError {
    fn from(e: ControlError) -> Self {
        match e {
            ControlError::UnknownZone(_) | ControlError::UnknownFloor(_) | ControlError::Door(DoorError::UnknownDevice(_)) => {
                RequestError::NotFound(e.to_string())
            }
            other => RequestError::Rejected(other.to_string()),
        }
    }
}

/// Resolves the floor(s) a request is addressed to and builds the wire
/// messages stamped with `now_s`. Nothing is checked beyond routing.
pub fn route(topology: &BuildingTopology, request: &Request, now_s: f64) -> Result<Vec<(u32, ControlRequest)>, RequestError> {
    let floor_exists = |f: u32| topology.floors.iter().any(|x| x.index == f);
    let device_floor = |id: &str| {
        topology.floor_of_device(id).ok_or_else(|| RequestError::NotFound(format!("unknown device {id}")))
    };
    Ok(match request {
        Request::Setpoint { floor, zone, temperature_c, humidity_pct, duration_s } => {
            let floor = match (floor, zone) {
                (_, Some(z)) => {
                    let zf = topology.floor_of_zone(z).ok_or_else(|| RequestError::NotFound(format!("unknown zone {z}")))?;
                    match floor {
                        Some(f) if *f != zf => {
                            return Err(RequestError::Rejected(format!("zone {z} is not on floor {f}")));
                        }
                        _ => zf,
                    }
                }
                (Some(f), None) if floor_exists(*f) => *f,
                (Some(f), None) => return Err(RequestError::NotFound(format!("floor {f} does not exist"))),
                (None, None) => return Err(RequestError::Malformed("setpoint needs a zone or a floor".into())),
            };
            vec![(
                floor,
                ControlRequest::Setpoint(SetpointRequest {
                    timestamp: now_s,
                    zone_id: zone.clone(),
                    temperature_c: *temperature_c,
                    humidity_pct: *humidity_pct,
                    duration_s: *duration_s,
                }),
            )]
        }
        Request::Light { device, level, mode } => vec![(
            device_floor(device)?,
            ControlRequest::Light(LightRequest { timestamp: now_s, device_id: device.clone(), level: *level, mode: *mode }),
        )],
        Request::Door { device, position } => vec![(
            device_floor(device)?,
            ControlRequest::Door(DoorRequest { timestamp: now_s, device_id: device.clone(), position: *position }),
        )],
        Request::Away { away } => topology
            .floors
            .iter()
            .map(|f| (f.index, ControlRequest::Away(AwayRequest { timestamp: now_s, away: *away })))
            .collect(),
    })
}

/// Routes and then applies the controllers' own acceptance rules, so a
/// caller learns about a rejection before anything is published.
pub fn check(
    topology: &BuildingTopology,
    comfort: &ComfortBounds,
    request: &Request,
    now_s: f64,
) -> Result<Vec<(u32, ControlRequest)>, RequestError> {
    let routed = route(topology, request, now_s)?;
    for (floor, req) in &routed {
        validate_request(topology, *floor, comfort, &req.clone().into_input())?;
    }
    Ok(routed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sb_core::command::ServoPosition;
    use sb_core::topology::default_topology;

    fn setpoint(floor: Option<u32>, zone: Option<&str>, t: f64) -> Request {
        Request::Setpoint { floor, zone: zone.map(String::from), temperature_c: t, humidity_pct: 45.0, duration_s: None }
    }

    #[test]
    fn routing_and_status_classes() {
        let topo = default_topology();
        let comfort = ComfortBounds::default();
        assert_eq!(check(&topo, &comfort, &setpoint(Some(1), None, 23.0), 0.0).unwrap()[0].0, 1);
        assert_eq!(check(&topo, &comfort, &setpoint(None, Some("bedroom"), 23.0), 0.0).unwrap()[0].0, 3);
        assert!(matches!(check(&topo, &comfort, &setpoint(None, None, 23.0), 0.0), Err(RequestError::Malformed(_))));
        assert!(matches!(check(&topo, &comfort, &setpoint(None, Some("cellar"), 23.0), 0.0), Err(RequestError::NotFound(_))));
        assert!(matches!(check(&topo, &comfort, &setpoint(Some(9), None, 23.0), 0.0), Err(RequestError::NotFound(_))));
        assert!(matches!(check(&topo, &comfort, &setpoint(Some(1), None, 45.0), 0.0), Err(RequestError::Rejected(_))));
        assert!(matches!(check(&topo, &comfort, &setpoint(None, Some("garage"), 22.0), 0.0), Err(RequestError::Rejected(_))));
        let door = Request::Door { device: "nope".into(), position: ServoPosition::Open };
        assert!(matches!(check(&topo, &comfort, &door, 0.0), Err(RequestError::NotFound(_))));
        let not_servo = Request::Door { device: "f1-kitchen-fan".into(), position: ServoPosition::Open };
        assert!(matches!(check(&topo, &comfort, &not_servo, 0.0), Err(RequestError::Rejected(_))));
        assert_eq!(check(&topo, &comfort, &Request::Away { away: true }, 0.0).unwrap().len(), 4);
    }
}
