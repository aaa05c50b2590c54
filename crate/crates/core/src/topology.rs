//! Declarative building description: floors, zones, adjacency and the device
//! inventory, loaded from a TOML file and validated.
//!
//! # File schema
//!
//! ```toml
//! name = "my_building"
//!
//! [[floors]]
//! index = 1                      # floors are numbered 1..=n in file order
//!
//! [[floors.zones]]
//! id = "kitchen"                 # globally unique
//! kind = "kitchen"               # kitchen|dining|living|sunroom|bedroom|bathroom|attic|garage
//! neighbors = ["dining"]         # must be symmetric
//! climate_controlled = true      # optional; defaults to false for garages, true otherwise
//!
//! [[floors.zones.devices]]
//! device_id = "f1-kitchen-led"   # globally unique
//! device_type = "led_strip"      # see `DeviceType`
//! params = { led_count = 5 }     # optional, type-specific
//! ```
//!
//! Recognised parameters (all optional):
//!
//! | device type    | key                   | default |
//! |----------------|-----------------------|---------|
//! | `led_strip`    | `led_count`           | 5       |
//! | `led_strip`    | `voltage_min_v`       | 1.4     |
//! | `led_strip`    | `voltage_max_v`       | 5.0     |
//! | `led_strip`    | `max_current_a`       | 0.29    |
//! | `fan`          | `rated_power_w`       | 3.0     |
//! | `servo_door`   | `servo_is_front_door` | false   |
//! | `servo_*`      | `transit_s`           | 2.0     |
//! | `camera`       | `record_s`            | 10.0    |

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The bundled four-story testbed configuration.
pub const DEFAULT_BUILDING: &str = include_str!("../config/default_building.toml");

pub const DEFAULT_LED_COUNT: u32 = 5;
pub const DEFAULT_LED_VOLTAGE_MIN_V: f64 = 1.4;
pub const DEFAULT_LED_VOLTAGE_MAX_V: f64 = 5.0;
pub const DEFAULT_LED_MAX_CURRENT_A: f64 = 0.29;
pub const DEFAULT_FAN_RATED_POWER_W: f64 = 3.0;
pub const DEFAULT_SERVO_TRANSIT_S: f64 = 2.0;
pub const DEFAULT_CAMERA_RECORD_S: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("topology parse error: {0}")]
    Parse(String),
    #[error("topology invalid [{rule}]: {subject}")]
    Invalid { rule: Rule, subject: String },
    #[error("floor {index} out of range (building has {count} floors)")]
    FloorOutOfRange { index: u32, count: usize },
}

/// Structural rules enforced by [`load_topology`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    NoFloors,
    FloorNumbering,
    EmptyFloor,
    DuplicateZone,
    DuplicateDevice,
    UnknownNeighbor,
    SelfNeighbor,
    AsymmetricAdjacency,
    GarageNotControlled,
    DeviceZoneMismatch,
    InvalidParam,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Rule::NoFloors => "at least one floor",
            Rule::FloorNumbering => "floors numbered 1..=n in order",
            Rule::EmptyFloor => "at least one zone per floor",
            Rule::DuplicateZone => "zone ids globally unique",
            Rule::DuplicateDevice => "device ids globally unique",
            Rule::UnknownNeighbor => "neighbor must exist",
            Rule::SelfNeighbor => "zone cannot neighbor itself",
            Rule::AsymmetricAdjacency => "adjacency symmetric",
            Rule::GarageNotControlled => "garage has no temperature control",
            Rule::DeviceZoneMismatch => "device zone matches containing zone",
            Rule::InvalidParam => "device parameter valid",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneKind {
    Kitchen,
    Dining,
    Living,
    Sunroom,
    Bedroom,
    Bathroom,
    Attic,
    Garage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceType {
    TempHumiditySensor,
    PirSensor,
    Heater,
    Fan,
    LedStrip,
    ServoDoor,
    ServoWindow,
    Camera,
}

impl DeviceType {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviceType::TempHumiditySensor => "temp_humidity_sensor",
            DeviceType::PirSensor => "pir_sensor",
            DeviceType::Heater => "heater",
            DeviceType::Fan => "fan",
            DeviceType::LedStrip => "led_strip",
            DeviceType::ServoDoor => "servo_door",
            DeviceType::ServoWindow => "servo_window",
            DeviceType::Camera => "camera",
        }
    }

    pub fn is_servo(self) -> bool {
        matches!(self, DeviceType::ServoDoor | DeviceType::ServoWindow)
    }
}

impl fmt::Display for DeviceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Device set every climate-controlled zone must carry.
pub const REQUIRED_CLIMATE_DEVICES: [DeviceType; 5] = [
    DeviceType::TempHumiditySensor,
    DeviceType::Heater,
    DeviceType::Fan,
    DeviceType::LedStrip,
    DeviceType::PirSensor,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Bool(bool),
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DevicePlacement {
    pub device_id: String,
    pub device_type: DeviceType,
    pub zone_id: String,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, ParamValue>,
}

impl DevicePlacement {
    fn number(&self, key: &str) -> Option<f64> {
        match self.params.get(key) {
            Some(ParamValue::Number(v)) => Some(*v),
            _ => None,
        }
    }

    fn flag(&self, key: &str) -> Option<bool> {
        match self.params.get(key) {
            Some(ParamValue::Bool(v)) => Some(*v),
            _ => None,
        }
    }

    pub fn led_count(&self) -> u32 {
        self.number("led_count").map_or(DEFAULT_LED_COUNT, |v| v as u32)
    }

    pub fn voltage_min_v(&self) -> f64 {
        self.number("voltage_min_v").unwrap_or(DEFAULT_LED_VOLTAGE_MIN_V)
    }

    pub fn voltage_max_v(&self) -> f64 {
        self.number("voltage_max_v").unwrap_or(DEFAULT_LED_VOLTAGE_MAX_V)
    }

    pub fn max_current_a(&self) -> f64 {
        self.number("max_current_a").unwrap_or(DEFAULT_LED_MAX_CURRENT_A)
    }

    pub fn rated_power_w(&self) -> f64 {
        self.number("rated_power_w").unwrap_or(DEFAULT_FAN_RATED_POWER_W)
    }

    pub fn is_front_door(&self) -> bool {
        self.flag("servo_is_front_door").unwrap_or(false)
    }

    pub fn transit_s(&self) -> f64 {
        self.number("transit_s").unwrap_or(DEFAULT_SERVO_TRANSIT_S)
    }

    pub fn record_s(&self) -> f64 {
        self.number("record_s").unwrap_or(DEFAULT_CAMERA_RECORD_S)
    }

    fn validate(&self) -> Result<(), TopologyError> {
        let bad = |what: &str| TopologyError::Invalid {
            rule: Rule::InvalidParam,
            subject: format!("device {}: {what}", self.device_id),
        };
        for (key, value) in &self.params {
            if let ParamValue::Number(v) = value {
                if !v.is_finite() || *v < 0.0 {
                    return Err(bad(&format!("{key} must be a finite non-negative number")));
                }
            }
        }
        match self.device_type {
            DeviceType::LedStrip => {
                let n = self.number("led_count").unwrap_or(DEFAULT_LED_COUNT as f64);
                if n < 1.0 || n.fract() != 0.0 {
                    return Err(bad("led_count must be a positive integer"));
                }
                if self.voltage_min_v() >= self.voltage_max_v() {
                    return Err(bad("voltage_min_v must be below voltage_max_v"));
                }
                if self.max_current_a() <= 0.0 {
                    return Err(bad("max_current_a must be positive"));
                }
            }
            DeviceType::Fan if self.rated_power_w() <= 0.0 => {
                return Err(bad("rated_power_w must be positive"));
            }
            DeviceType::ServoDoor | DeviceType::ServoWindow if self.transit_s() <= 0.0 => {
                return Err(bad("transit_s must be positive"));
            }
            DeviceType::Camera if self.record_s() <= 0.0 => {
                return Err(bad("record_s must be positive"));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Zone {
    pub id: String,
    pub kind: ZoneKind,
    pub climate_controlled: bool,
    pub neighbors: Vec<String>,
    pub devices: Vec<DevicePlacement>,
}

impl Zone {
    pub fn devices_of(&self, ty: DeviceType) -> impl Iterator<Item = &DevicePlacement> {
        self.devices.iter().filter(move |d| d.device_type == ty)
    }

    pub fn has_device(&self, ty: DeviceType) -> bool {
        self.devices_of(ty).next().is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Floor {
    pub index: u32,
    pub zones: Vec<Zone>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildingTopology {
    pub name: String,
    pub floors: Vec<Floor>,
}

/// One missing device in a climate-controlled zone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub zone_id: String,
    pub missing: DeviceType,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "zone {} is missing a {}", self.zone_id, self.missing)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyFile {
    name: String,
    floors: Vec<FloorFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FloorFile {
    index: u32,
    #[serde(default)]
    zones: Vec<ZoneFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ZoneFile {
    id: String,
    kind: ZoneKind,
    #[serde(default)]
    climate_controlled: Option<bool>,
    #[serde(default)]
    neighbors: Vec<String>,
    #[serde(default)]
    devices: Vec<DeviceFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviceFile {
    device_id: String,
    device_type: DeviceType,
    #[serde(default)]
    zone_id: Option<String>,
    #[serde(default)]
    params: BTreeMap<String, ParamValue>,
}

fn invalid(rule: Rule, subject: impl Into<String>) -> TopologyError {
    TopologyError::Invalid { rule, subject: subject.into() }
}

/// Parses and validates a topology file.
pub fn load_topology(source: &str) -> Result<BuildingTopology, TopologyError> {
    let file: TopologyFile =
        toml::from_str(source).map_err(|e| TopologyError::Parse(e.to_string()))?;

    let mut floors = Vec::with_capacity(file.floors.len());
    for floor in file.floors {
        let mut zones = Vec::with_capacity(floor.zones.len());
        for z in floor.zones {
            let climate_controlled = z.climate_controlled.unwrap_or(z.kind != ZoneKind::Garage);
            let mut devices = Vec::with_capacity(z.devices.len());
            for d in z.devices {
                if let Some(declared) = &d.zone_id {
                    if declared != &z.id {
                        return Err(invalid(
                            Rule::DeviceZoneMismatch,
                            format!("device {} declares zone {declared} but sits in {}", d.device_id, z.id),
                        ));
                    }
                }
                devices.push(DevicePlacement {
                    device_id: d.device_id,
                    device_type: d.device_type,
                    zone_id: z.id.clone(),
                    params: d.params,
                });
            }
            zones.push(Zone {
                id: z.id,
                kind: z.kind,
                climate_controlled,
                neighbors: z.neighbors,
                devices,
            });
        }
        floors.push(Floor { index: floor.index, zones });
    }

    let topology = BuildingTopology { name: file.name, floors };
    topology.validate()?;
    Ok(topology)
}

/// The bundled default building.
pub fn default_topology() -> BuildingTopology {
    load_topology(DEFAULT_BUILDING).expect("bundled default building is valid")
}

impl BuildingTopology {
    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.floors.is_empty() {
            return Err(invalid(Rule::NoFloors, self.name.clone()));
        }
        for (i, floor) in self.floors.iter().enumerate() {
            if floor.index as usize != i + 1 {
                return Err(invalid(
                    Rule::FloorNumbering,
                    format!("floor at position {} has index {}", i + 1, floor.index),
                ));
            }
            if floor.zones.is_empty() {
                return Err(invalid(Rule::EmptyFloor, format!("floor {}", floor.index)));
            }
        }

        let mut zone_ids = HashSet::new();
        let mut device_ids = HashSet::new();
        for zone in self.zones() {
            if !zone_ids.insert(zone.id.as_str()) {
                return Err(invalid(Rule::DuplicateZone, zone.id.clone()));
            }
            for d in &zone.devices {
                if !device_ids.insert(d.device_id.as_str()) {
                    return Err(invalid(Rule::DuplicateDevice, d.device_id.clone()));
                }
                d.validate()?;
            }
            if zone.kind == ZoneKind::Garage {
                if zone.climate_controlled {
                    return Err(invalid(
                        Rule::GarageNotControlled,
                        format!("zone {} is a garage marked climate_controlled", zone.id),
                    ));
                }
                if let Some(d) = zone
                    .devices
                    .iter()
                    .find(|d| matches!(d.device_type, DeviceType::Heater | DeviceType::Fan))
                {
                    return Err(invalid(
                        Rule::GarageNotControlled,
                        format!("zone {} is a garage with {} {}", zone.id, d.device_type, d.device_id),
                    ));
                }
            }
        }

        for zone in self.zones() {
            let mut seen = BTreeSet::new();
            for n in &zone.neighbors {
                if n == &zone.id {
                    return Err(invalid(Rule::SelfNeighbor, zone.id.clone()));
                }
                if !seen.insert(n) {
                    continue;
                }
                let Some(other) = self.zone(n) else {
                    return Err(invalid(Rule::UnknownNeighbor, format!("zone {} lists {n}", zone.id)));
                };
                if !other.neighbors.contains(&zone.id) {
                    return Err(invalid(
                        Rule::AsymmetricAdjacency,
                        format!("zone {} lists {n} but {n} does not list {}", zone.id, zone.id),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn zones(&self) -> impl Iterator<Item = &Zone> {
        self.floors.iter().flat_map(|f| f.zones.iter())
    }

    /// Zones paired with their floor index, in declaration order.
    pub fn zones_with_floor(&self) -> impl Iterator<Item = (u32, &Zone)> {
        self.floors.iter().flat_map(|f| f.zones.iter().map(move |z| (f.index, z)))
    }

    pub fn zone(&self, id: &str) -> Option<&Zone> {
        self.zones().find(|z| z.id == id)
    }

    pub fn zone_position(&self, id: &str) -> Option<usize> {
        self.zones().position(|z| z.id == id)
    }

    pub fn floor_of_zone(&self, id: &str) -> Option<u32> {
        self.zones_with_floor().find(|(_, z)| z.id == id).map(|(f, _)| f)
    }

    pub fn devices(&self) -> impl Iterator<Item = &DevicePlacement> {
        self.zones().flat_map(|z| z.devices.iter())
    }

    pub fn device(&self, id: &str) -> Option<&DevicePlacement> {
        self.devices().find(|d| d.device_id == id)
    }

    pub fn floor_of_device(&self, id: &str) -> Option<u32> {
        let device = self.device(id)?;
        self.floor_of_zone(&device.zone_id)
    }

    pub fn floor_count(&self) -> usize {
        self.floors.len()
    }

    pub fn zones_on_floor(&self, floor_index: u32) -> Result<&[Zone], TopologyError> {
        if floor_index == 0 || floor_index as usize > self.floors.len() {
            return Err(TopologyError::FloorOutOfRange { index: floor_index, count: self.floors.len() });
        }
        Ok(&self.floors[floor_index as usize - 1].zones)
    }

    /// Serializes back to the file schema accepted by [`load_topology`].
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("topology serializes to toml")
    }
}

pub fn zones_on_floor(topology: &BuildingTopology, floor_index: u32) -> Result<&[Zone], TopologyError> {
    topology.zones_on_floor(floor_index)
}

/// Lists every required device missing from a climate-controlled zone.
pub fn validate_controllability(topology: &BuildingTopology) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for zone in topology.zones().filter(|z| z.climate_controlled) {
        for ty in REQUIRED_CLIMATE_DEVICES {
            if !zone.has_device(ty) {
                out.push(Diagnostic { zone_id: zone.id.clone(), missing: ty });
            }
        }
    }
    out
}
