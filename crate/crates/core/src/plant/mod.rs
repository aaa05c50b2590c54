//! Discrete-time physics of the building.
//!
//! Each zone is one lumped thermal/moisture node. With heater duties `u_h`,
//! fan duties `u_f` and `n` occupants, one forward-Euler step is
//!
//! ```text
//! T' = T + dt/C * [ (T_amb - T)/R_env + sum_j (T_j - T)/R_adj + P_h*u_h
//!                   - k_fan*u_f*(T - T_amb) + q_occ*n ]
//! H' = clamp(H + dt * [ k_h*(H_amb - H) + g_occ*n - k_h_fan*u_f*(H - H_amb) ], 0, 100)
//! ```
//!
//! The heater only adds heat; cooling comes from the fan exchanging air with
//! the outside. Zones without climate control simply float.

mod occupancy;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::command::{Action, ActuatorCommand, ServoPosition};
use crate::topology::{BuildingTopology, DeviceType};

pub use occupancy::{
    OccupancyEvent, OccupancyEventFile, OccupancyEventKind, OccupancyModel, OccupancyScript, StochasticOccupancy,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("simulation fault: non-finite state in zone {zone}")]
    NonFinite { zone: String },
    #[error("invalid time step {0} s")]
    InvalidStep(f64),
    #[error("time step {dt} s violates stability limit (must be below {limit} s)")]
    UnstableStep { dt: f64, limit: f64 },
    #[error("invalid plant parameters: {0}")]
    InvalidParams(String),
    #[error("invalid ambient conditions: {0}")]
    InvalidAmbient(String),
    #[error("unknown device {0}")]
    UnknownDevice(String),
    #[error("unknown zone {0}")]
    UnknownZone(String),
    #[error("{action} {value} for {device} outside [0, 1]")]
    OutOfRange { device: String, action: &'static str, value: f64 },
    #[error("device {device} does not accept a {action} command")]
    WrongAction { device: String, action: &'static str },
}

/// Lumped parameters of one zone. All values strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZoneThermalParams {
    /// C, J/K.
    pub heat_capacity_j_per_k: f64,
    /// R_env to outside, K/W.
    pub envelope_resistance_k_per_w: f64,
    /// P_h per heater at full duty, W.
    pub heater_max_power_w: f64,
    /// k_fan at full duty, W/K.
    pub fan_exchange_gain_w_per_k: f64,
    /// k_h, 1/s.
    pub humidity_exchange_rate_per_s: f64,
    /// k_h_fan at full duty, 1/s.
    pub fan_humidity_rate_per_s: f64,
    /// g_occ, %RH/s per person.
    pub occupant_moisture_gain_pct_per_s: f64,
    /// q_occ, W per person.
    pub occupant_heat_gain_w: f64,
}

// Synthetic testbed-scale values: envelope time constant 10 min, a 40 W
// Peltier tile lifts a room by about 0.2 K per 5 s tick.
impl Default for ZoneThermalParams {
    fn default() -> Self {
        Self {
            heat_capacity_j_per_k: 1000.0,
            envelope_resistance_k_per_w: 0.6,
            heater_max_power_w: 40.0,
            fan_exchange_gain_w_per_k: 2.0,
            humidity_exchange_rate_per_s: 1.0 / 900.0,
            fan_humidity_rate_per_s: 1.0 / 300.0,
            occupant_moisture_gain_pct_per_s: 0.004,
            occupant_heat_gain_w: 5.0,
        }
    }
}

impl ZoneThermalParams {
    fn validate(&self, zone: &str) -> Result<(), PlantError> {
        let values = [
            ("heat_capacity_j_per_k", self.heat_capacity_j_per_k),
            ("envelope_resistance_k_per_w", self.envelope_resistance_k_per_w),
            ("heater_max_power_w", self.heater_max_power_w),
            ("fan_exchange_gain_w_per_k", self.fan_exchange_gain_w_per_k),
            ("humidity_exchange_rate_per_s", self.humidity_exchange_rate_per_s),
            ("fan_humidity_rate_per_s", self.fan_humidity_rate_per_s),
            ("occupant_moisture_gain_pct_per_s", self.occupant_moisture_gain_pct_per_s),
            ("occupant_heat_gain_w", self.occupant_heat_gain_w),
        ];
        for (name, v) in values {
            if !(v.is_finite() && v > 0.0) {
                return Err(PlantError::InvalidParams(format!("zone {zone}: {name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Inter-zone resistances, K/W. Same-floor divisions couple more strongly
/// than floor/ceiling slabs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CouplingParams {
    pub same_floor_resistance_k_per_w: f64,
    pub vertical_resistance_k_per_w: f64,
}

impl Default for CouplingParams {
    fn default() -> Self {
        Self { same_floor_resistance_k_per_w: 0.5, vertical_resistance_k_per_w: 2.0 }
    }
}

/// Half-width of the uniform additive sensor noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorNoise {
    pub temperature_c: f64,
    pub humidity_pct: f64,
}

impl Default for SensorNoise {
    fn default() -> Self {
        Self { temperature_c: 0.5, humidity_pct: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub zone_defaults: ZoneThermalParams,
    /// Full parameter replacement for individual zones.
    pub zone_overrides: BTreeMap<String, ZoneThermalParams>,
    pub coupling: CouplingParams,
    pub sensor_noise: SensorNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbientConditions {
    pub outdoor_temperature_c: f64,
    pub outdoor_humidity_pct: f64,
    pub time_of_day_s: f64,
}

impl AmbientConditions {
    fn validate(&self) -> Result<(), PlantError> {
        if !self.outdoor_temperature_c.is_finite() {
            return Err(PlantError::InvalidAmbient("outdoor temperature not finite".into()));
        }
        if !(0.0..=100.0).contains(&self.outdoor_humidity_pct) {
            return Err(PlantError::InvalidAmbient(format!(
                "outdoor humidity {} outside [0, 100]",
                self.outdoor_humidity_pct
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneState {
    pub zone_id: String,
    pub temperature_c: f64,
    pub humidity_pct: f64,
    pub occupants: u32,
    /// Occupant count at the end of the previous tick; PIR edges compare against it.
    pub previous_occupants: u32,
    /// Scripted motion seen this tick.
    pub motion_pulse: bool,
}

impl ZoneState {
    pub fn motion(&self) -> bool {
        self.motion_pulse || self.occupants != self.previous_occupants
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DeviceState {
    Heater { duty: f64 },
    Fan { duty: f64 },
    Led { level: f64 },
    Servo { target: ServoPosition, open_fraction: f64 },
    Camera { recording_until: Option<f64> },
    Sensor,
}

impl DeviceState {
    fn initial(ty: DeviceType) -> Self {
        match ty {
            DeviceType::Heater => DeviceState::Heater { duty: 0.0 },
            DeviceType::Fan => DeviceState::Fan { duty: 0.0 },
            DeviceType::LedStrip => DeviceState::Led { level: 0.0 },
            DeviceType::ServoDoor | DeviceType::ServoWindow => {
                DeviceState::Servo { target: ServoPosition::Closed, open_fraction: 0.0 }
            }
            DeviceType::Camera => DeviceState::Camera { recording_until: None },
            DeviceType::TempHumiditySensor | DeviceType::PirSensor => DeviceState::Sensor,
        }
    }
}

/// Reported servo state: settled at either end, or moving.
pub fn servo_status(target: ServoPosition, open_fraction: f64) -> &'static str {
    match (target, open_fraction) {
        (ServoPosition::Open, f) if f >= 1.0 => "open",
        (ServoPosition::Closed, f) if f <= 0.0 => "closed",
        (ServoPosition::Open, _) => "opening",
        (ServoPosition::Closed, _) => "closing",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub time_s: f64,
    /// Aligned with `BuildingTopology::zones()` order.
    pub zones: Vec<ZoneState>,
    pub devices: BTreeMap<String, DeviceState>,
}

impl PlantState {
    pub fn zone(&self, id: &str) -> Option<&ZoneState> {
        self.zones.iter().find(|z| z.zone_id == id)
    }

    pub fn zone_mut(&mut self, id: &str) -> Option<&mut ZoneState> {
        self.zones.iter_mut().find(|z| z.zone_id == id)
    }

    pub fn device(&self, id: &str) -> Option<&DeviceState> {
        self.devices.get(id)
    }

    pub fn duty(&self, id: &str) -> Option<f64> {
        match self.devices.get(id)? {
            DeviceState::Heater { duty } | DeviceState::Fan { duty } => Some(*duty),
            DeviceState::Led { level } => Some(*level),
            _ => None,
        }
    }

    pub fn camera_recording(&self, id: &str) -> bool {
        match self.devices.get(id) {
            Some(DeviceState::Camera { recording_until: Some(until) }) => *until > self.time_s,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadingKind {
    Temperature,
    Humidity,
    Motion,
    DoorState,
    WindowState,
}

impl ReadingKind {
    pub fn metric(self) -> &'static str {
        match self {
            ReadingKind::Temperature => "temperature",
            ReadingKind::Humidity => "humidity",
            ReadingKind::Motion => "motion",
            ReadingKind::DoorState => "door_state",
            ReadingKind::WindowState => "window_state",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReadingValue {
    Bool(bool),
    Number(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub device_id: String,
    pub zone_id: String,
    pub kind: ReadingKind,
    pub value: ReadingValue,
    pub timestamp: f64,
}

/// Reported state of an actuator (duty, level, recording flag).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActuatorStatus {
    pub device_id: String,
    pub zone_id: String,
    pub metric: &'static str,
    pub value: ReadingValue,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CameraTrigger {
    Motion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraEvent {
    pub device_id: String,
    pub zone_id: String,
    pub timestamp: f64,
    pub trigger: CameraTrigger,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PowerBreakdown {
    pub per_device_w: BTreeMap<String, f64>,
    pub per_floor_w: BTreeMap<u32, f64>,
    /// Heaters plus fans.
    pub actuators_w: f64,
    pub lighting_w: f64,
    pub total_w: f64,
}

#[derive(Debug, Clone)]
struct ZoneDynamics {
    params: ZoneThermalParams,
    climate_controlled: bool,
    /// (zone position, resistance K/W)
    neighbors: Vec<(usize, f64)>,
    heaters: Vec<String>,
    fans: Vec<String>,
}

/// The simulated building. Immutable; all state lives in [`PlantState`].
#[derive(Debug, Clone)]
pub struct Plant {
    topology: Arc<BuildingTopology>,
    config: PlantConfig,
    zones: Vec<ZoneDynamics>,
}

impl Plant {
    pub fn new(topology: Arc<BuildingTopology>, config: PlantConfig) -> Result<Self, PlantError> {
        for id in config.zone_overrides.keys() {
            if topology.zone(id).is_none() {
                return Err(PlantError::UnknownZone(id.clone()));
            }
        }
        let coupling = config.coupling;
        for (name, v) in [
            ("same_floor_resistance_k_per_w", coupling.same_floor_resistance_k_per_w),
            ("vertical_resistance_k_per_w", coupling.vertical_resistance_k_per_w),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(PlantError::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        let noise = config.sensor_noise;
        if !(noise.temperature_c >= 0.0 && noise.humidity_pct >= 0.0) {
            return Err(PlantError::InvalidParams("sensor noise must be >= 0".into()));
        }

        let mut zones = Vec::new();
        for (floor, zone) in topology.zones_with_floor() {
            let params = config.zone_overrides.get(&zone.id).copied().unwrap_or(config.zone_defaults);
            params.validate(&zone.id)?;
            let neighbors = zone
                .neighbors
                .iter()
                .map(|n| {
                    let pos = topology.zone_position(n).expect("validated topology");
                    let r = if topology.floor_of_zone(n) == Some(floor) {
                        coupling.same_floor_resistance_k_per_w
                    } else {
                        coupling.vertical_resistance_k_per_w
                    };
                    (pos, r)
                })
                .collect();
            zones.push(ZoneDynamics {
                params,
                climate_controlled: zone.climate_controlled,
                neighbors,
                heaters: zone.devices_of(DeviceType::Heater).map(|d| d.device_id.clone()).collect(),
                fans: zone.devices_of(DeviceType::Fan).map(|d| d.device_id.clone()).collect(),
            });
        }
        Ok(Self { topology, config, zones })
    }

    pub fn topology(&self) -> &Arc<BuildingTopology> {
        &self.topology
    }

    pub fn config(&self) -> &PlantConfig {
        &self.config
    }

    pub fn zone_params(&self, zone_id: &str) -> Option<&ZoneThermalParams> {
        self.topology.zone_position(zone_id).map(|i| &self.zones[i].params)
    }

    /// Resistances to each neighbor of a zone, K/W.
    pub fn neighbor_resistances(&self, zone_id: &str) -> Vec<(String, f64)> {
        let Some(i) = self.topology.zone_position(zone_id) else { return Vec::new() };
        let ids: Vec<_> = self.topology.zones().map(|z| z.id.clone()).collect();
        self.zones[i].neighbors.iter().map(|(j, r)| (ids[*j].clone(), *r)).collect()
    }

    /// Smallest time constant over all zones with every conductance
    /// (envelope, neighbors, fan at full duty) engaged.
    pub fn min_time_constant_s(&self) -> f64 {
        self.zones
            .iter()
            .map(|z| {
                let p = &z.params;
                let mut g = 1.0 / p.envelope_resistance_k_per_w;
                g += z.neighbors.iter().map(|(_, r)| 1.0 / r).sum::<f64>();
                if z.climate_controlled {
                    g += p.fan_exchange_gain_w_per_k * z.fans.len() as f64;
                }
                p.heat_capacity_j_per_k / g
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Rejects steps at or above half the smallest time constant.
    pub fn validate_dt(&self, dt: f64) -> Result<(), PlantError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(PlantError::InvalidStep(dt));
        }
        let limit = 0.5 * self.min_time_constant_s();
        if dt >= limit {
            return Err(PlantError::UnstableStep { dt, limit });
        }
        Ok(())
    }

    pub fn initial_state(&self, temperature_c: f64, humidity_pct: f64) -> PlantState {
        let zones = self
            .topology
            .zones()
            .map(|z| ZoneState {
                zone_id: z.id.clone(),
                temperature_c,
                humidity_pct: humidity_pct.clamp(0.0, 100.0),
                occupants: 0,
                previous_occupants: 0,
                motion_pulse: false,
            })
            .collect();
        let devices = self
            .topology
            .devices()
            .map(|d| (d.device_id.clone(), DeviceState::initial(d.device_type)))
            .collect();
        PlantState { time_s: 0.0, zones, devices }
    }

    fn zone_inputs(&self, state: &PlantState, i: usize) -> (f64, f64) {
        let z = &self.zones[i];
        if !z.climate_controlled {
            return (0.0, 0.0);
        }
        let heat = z.heaters.iter().filter_map(|id| state.duty(id)).sum();
        let fan = z.fans.iter().filter_map(|id| state.duty(id)).sum();
        (heat, fan)
    }

    /// One forward-Euler step of the zone equations.
    pub fn step(&self, state: &PlantState, ambient: &AmbientConditions, dt: f64) -> Result<PlantState, PlantError> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(PlantError::InvalidStep(dt));
        }
        ambient.validate()?;
        let t_amb = ambient.outdoor_temperature_c;
        let h_amb = ambient.outdoor_humidity_pct;

        let mut next = state.clone();
        for (i, dynamics) in self.zones.iter().enumerate() {
            let zone = &state.zones[i];
            let p = &dynamics.params;
            let (u_h, u_f) = self.zone_inputs(state, i);
            let t = zone.temperature_c;
            let h = zone.humidity_pct;
            let n = zone.occupants as f64;

            let mut heat_flow = (t_amb - t) / p.envelope_resistance_k_per_w;
            for (j, r) in &dynamics.neighbors {
                heat_flow += (state.zones[*j].temperature_c - t) / r;
            }
            heat_flow += p.heater_max_power_w * u_h;
            heat_flow -= p.fan_exchange_gain_w_per_k * u_f * (t - t_amb);
            heat_flow += p.occupant_heat_gain_w * n;
            let t_next = t + dt / p.heat_capacity_j_per_k * heat_flow;

            let moisture = p.humidity_exchange_rate_per_s * (h_amb - h)
                + p.occupant_moisture_gain_pct_per_s * n
                - p.fan_humidity_rate_per_s * u_f * (h - h_amb);
            let h_next = h + dt * moisture;

            if !t_next.is_finite() || !h_next.is_finite() {
                return Err(PlantError::NonFinite { zone: zone.zone_id.clone() });
            }
            let out = &mut next.zones[i];
            out.temperature_c = t_next;
            out.humidity_pct = h_next.clamp(0.0, 100.0);
            out.previous_occupants = zone.occupants;
            out.motion_pulse = false;
        }

        for device in self.topology.devices() {
            if let Some(DeviceState::Servo { target, open_fraction }) = next.devices.get_mut(&device.device_id) {
                let rate = dt / device.transit_s();
                *open_fraction = match target {
                    ServoPosition::Open => (*open_fraction + rate).min(1.0),
                    ServoPosition::Closed => (*open_fraction - rate).max(0.0),
                };
            }
        }
        next.time_s = state.time_s + dt;
        Ok(next)
    }

    /// One reading per sensor channel. Noise is uniform within the configured
    /// accuracy and fully determined by `rng_seed`.
    pub fn read_sensors(&self, state: &PlantState, rng_seed: u64) -> Vec<SensorReading> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let noise = self.config.sensor_noise;
        let mut draw = |amplitude: f64| {
            if amplitude > 0.0 {
                rng.random_range(-amplitude..=amplitude)
            } else {
                0.0
            }
        };
        let mut out = Vec::new();
        for device in self.topology.devices() {
            let zone = state.zone(&device.zone_id).expect("state aligned with topology");
            let reading = |kind, value| SensorReading {
                device_id: device.device_id.clone(),
                zone_id: device.zone_id.clone(),
                kind,
                value,
                timestamp: state.time_s,
            };
            match device.device_type {
                DeviceType::TempHumiditySensor => {
                    let t = zone.temperature_c + draw(noise.temperature_c);
                    let h = (zone.humidity_pct + draw(noise.humidity_pct)).clamp(0.0, 100.0);
                    out.push(reading(ReadingKind::Temperature, ReadingValue::Number(t)));
                    out.push(reading(ReadingKind::Humidity, ReadingValue::Number(h)));
                }
                DeviceType::PirSensor => {
                    out.push(reading(ReadingKind::Motion, ReadingValue::Bool(zone.motion())));
                }
                DeviceType::ServoDoor | DeviceType::ServoWindow => {
                    let Some(DeviceState::Servo { target, open_fraction }) = state.device(&device.device_id) else {
                        continue;
                    };
                    let kind = if device.device_type == DeviceType::ServoDoor {
                        ReadingKind::DoorState
                    } else {
                        ReadingKind::WindowState
                    };
                    let status = servo_status(*target, *open_fraction);
                    out.push(reading(kind, ReadingValue::Text(status.to_string())));
                }
                _ => {}
            }
        }
        out
    }

    /// Current duty/level/recording state of every actuator.
    pub fn actuator_status(&self, state: &PlantState) -> Vec<ActuatorStatus> {
        let mut out = Vec::new();
        for device in self.topology.devices() {
            let (metric, value) = match state.device(&device.device_id) {
                Some(DeviceState::Heater { duty } | DeviceState::Fan { duty }) => ("duty", ReadingValue::Number(*duty)),
                Some(DeviceState::Led { level }) => ("level", ReadingValue::Number(*level)),
                Some(DeviceState::Camera { .. }) => {
                    ("recording", ReadingValue::Bool(state.camera_recording(&device.device_id)))
                }
                _ => continue,
            };
            out.push(ActuatorStatus {
                device_id: device.device_id.clone(),
                zone_id: device.zone_id.clone(),
                metric,
                value,
                timestamp: state.time_s,
            });
        }
        out
    }

    /// Applies a controller command. Duties are never clamped here.
    pub fn apply_actuation(&self, state: &PlantState, command: &ActuatorCommand) -> Result<PlantState, PlantError> {
        let device = self
            .topology
            .device(&command.device_id)
            .ok_or_else(|| PlantError::UnknownDevice(command.device_id.clone()))?;
        let wrong = || PlantError::WrongAction { device: command.device_id.clone(), action: command.action.name() };
        let check = |v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(v)
            } else {
                Err(PlantError::OutOfRange { device: command.device_id.clone(), action: command.action.name(), value: v })
            }
        };

        let new_state = match (device.device_type, command.action) {
            (DeviceType::Heater, Action::Duty(v)) => DeviceState::Heater { duty: check(v)? },
            (DeviceType::Fan, Action::Duty(v)) => DeviceState::Fan { duty: check(v)? },
            (DeviceType::LedStrip, Action::Level(v)) => DeviceState::Led { level: check(v)? },
            (DeviceType::ServoDoor | DeviceType::ServoWindow, Action::Position(p)) => {
                let open_fraction = match state.device(&command.device_id) {
                    Some(DeviceState::Servo { open_fraction, .. }) => *open_fraction,
                    _ => 0.0,
                };
                DeviceState::Servo { target: p, open_fraction }
            }
            _ => return Err(wrong()),
        };
        let mut next = state.clone();
        next.devices.insert(command.device_id.clone(), new_state);
        Ok(next)
    }

    pub fn advance_occupancy(
        &self,
        state: &PlantState,
        model: &mut OccupancyModel,
        dt: f64,
    ) -> Result<PlantState, PlantError> {
        let mut next = state.clone();
        model.advance(&self.topology, &mut next, dt)?;
        Ok(next)
    }

    /// Camera events for every camera whose zone has a PIR that fired this tick.
    pub fn camera_events(&self, state: &PlantState) -> Vec<CameraEvent> {
        let mut out = Vec::new();
        for zone in self.topology.zones() {
            if !zone.has_device(DeviceType::PirSensor) {
                continue;
            }
            let fired = state.zone(&zone.id).is_some_and(ZoneState::motion);
            if !fired {
                continue;
            }
            for camera in zone.devices_of(DeviceType::Camera) {
                out.push(CameraEvent {
                    device_id: camera.device_id.clone(),
                    zone_id: zone.id.clone(),
                    timestamp: state.time_s,
                    trigger: CameraTrigger::Motion,
                });
            }
        }
        out
    }

    /// Starts a recording window on each camera that produced an event.
    pub fn start_recording(&self, state: &PlantState, events: &[CameraEvent]) -> PlantState {
        let mut next = state.clone();
        for event in events {
            let Some(device) = self.topology.device(&event.device_id) else { continue };
            let until = event.timestamp + device.record_s();
            next.devices.insert(event.device_id.clone(), DeviceState::Camera { recording_until: Some(until) });
        }
        next
    }

    /// Linear electrical model: LED `level * V_max * I_max`, heater
    /// `duty * P_h`, fan `duty * rated power`.
    pub fn electrical_power(&self, state: &PlantState) -> PowerBreakdown {
        let mut out = PowerBreakdown::default();
        for floor in &self.topology.floors {
            out.per_floor_w.insert(floor.index, 0.0);
        }
        for (floor, zone) in self.topology.zones_with_floor() {
            let pos = self.topology.zone_position(&zone.id).expect("zone exists");
            let p_h = self.zones[pos].params.heater_max_power_w;
            for device in &zone.devices {
                let (watts, lighting) = match (device.device_type, state.device(&device.device_id)) {
                    (DeviceType::Heater, Some(DeviceState::Heater { duty })) => (duty * p_h, false),
                    (DeviceType::Fan, Some(DeviceState::Fan { duty })) => (duty * device.rated_power_w(), false),
                    (DeviceType::LedStrip, Some(DeviceState::Led { level })) => {
                        (level * device.voltage_max_v() * device.max_current_a(), true)
                    }
                    _ => continue,
                };
                out.per_device_w.insert(device.device_id.clone(), watts);
                *out.per_floor_w.entry(floor).or_default() += watts;
                if lighting {
                    out.lighting_w += watts;
                } else {
                    out.actuators_w += watts;
                }
            }
        }
        out.total_w = out.actuators_w + out.lighting_w;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::command::CommandSource;
    use crate::topology::{default_topology, load_topology};

    fn single_zone(rc: Option<(f64, f64)>) -> Plant {
        let topo = load_topology(
            r#"
name = "one"
[[floors]]
index = 1
[[floors.zones]]
id = "z"
kind = "living"
devices = [
  { device_id = "th", device_type = "temp_humidity_sensor" },
  { device_id = "pir", device_type = "pir_sensor" },
  { device_id = "h", device_type = "heater" },
  { device_id = "f", device_type = "fan" },
  { device_id = "led", device_type = "led_strip" },
  { device_id = "door", device_type = "servo_door", params = { transit_s = 2.0 } },
]
"#,
        )
        .unwrap();
        let mut config = PlantConfig::default();
        if let Some((r, c)) = rc {
            config.zone_defaults.envelope_resistance_k_per_w = r;
            config.zone_defaults.heat_capacity_j_per_k = c;
        }
        Plant::new(Arc::new(topo), config).unwrap()
    }

    fn ambient(t: f64) -> AmbientConditions {
        AmbientConditions { outdoor_temperature_c: t, outdoor_humidity_pct: 40.0, time_of_day_s: 0.0 }
    }

    #[test]
    fn equilibrium_fixed_point() {
        let plant = single_zone(None);
        let s0 = plant.initial_state(12.0, 40.0);
        let s1 = plant.step(&s0, &ambient(12.0), 5.0).unwrap();
        assert_eq!(s1.zones[0].temperature_c, 12.0);
        assert_eq!(s1.zones[0].humidity_pct, 40.0);
        assert_eq!(s1.time_s, 5.0);
    }

    #[test]
    fn hand_computed_euler_step() {
        // R_env * C = 1000 s; T' = 20 + 5 * (10 - 20) / 1000
        let plant = single_zone(Some((0.5, 2000.0)));
        let s0 = plant.initial_state(20.0, 40.0);
        let s1 = plant.step(&s0, &ambient(10.0), 5.0).unwrap();
        assert!((s1.zones[0].temperature_c - 19.95).abs() < 1e-12);
    }

    #[test]
    fn equal_neighbors_exchange_nothing() {
        let topo = Arc::new(default_topology());
        let plant = Plant::new(topo, PlantConfig::default()).unwrap();
        let s0 = plant.initial_state(18.0, 40.0);
        let s1 = plant.step(&s0, &ambient(18.0), 5.0).unwrap();
        for z in &s1.zones {
            assert_eq!(z.temperature_c, 18.0, "{}", z.zone_id);
        }
    }

    #[test]
    fn non_finite_state_is_a_fault() {
        let plant = single_zone(None);
        let mut s0 = plant.initial_state(20.0, 40.0);
        s0.zones[0].temperature_c = f64::NAN;
        assert_eq!(plant.step(&s0, &ambient(10.0), 5.0), Err(PlantError::NonFinite { zone: "z".into() }));
        assert!(plant.step(&plant.initial_state(20.0, 40.0), &ambient(10.0), 0.0).is_err());
    }

    #[test]
    fn stability_guard() {
        let plant = Plant::new(Arc::new(default_topology()), PlantConfig::default()).unwrap();
        plant.validate_dt(5.0).unwrap();
        let limit = 0.5 * plant.min_time_constant_s();
        assert!(matches!(plant.validate_dt(limit), Err(PlantError::UnstableStep { .. })));
        assert!(plant.validate_dt(-1.0).is_err());
    }

    #[test]
    fn zero_noise_readings_are_exact_and_seeded_readings_repeat() {
        let topo = Arc::new(default_topology());
        let mut config = PlantConfig::default();
        config.sensor_noise = SensorNoise { temperature_c: 0.0, humidity_pct: 0.0 };
        let plant = Plant::new(topo.clone(), config).unwrap();
        let s = plant.initial_state(21.3, 47.0);
        for r in plant.read_sensors(&s, 9) {
            match r.kind {
                ReadingKind::Temperature => assert_eq!(r.value, ReadingValue::Number(21.3)),
                ReadingKind::Humidity => assert_eq!(r.value, ReadingValue::Number(47.0)),
                _ => {}
            }
        }

        let noisy = Plant::new(topo, PlantConfig::default()).unwrap();
        let a = noisy.read_sensors(&s, 77);
        let b = noisy.read_sensors(&s, 77);
        assert_eq!(a, b);
        for r in &a {
            if let (ReadingKind::Temperature, ReadingValue::Number(v)) = (r.kind, &r.value) {
                assert!((v - 21.3).abs() <= 0.5);
            }
        }
        assert_ne!(a, noisy.read_sensors(&s, 78));
    }

    #[test]
    fn actuation_rules() {
        let plant = single_zone(None);
        let s = plant.initial_state(20.0, 40.0);
        let cmd = |id: &str, action| ActuatorCommand {
            device_id: id.into(),
            action,
            issued_at: 0.0,
            source: CommandSource::Mpc,
        };
        let s1 = plant.apply_actuation(&s, &cmd("h", Action::Duty(0.5))).unwrap();
        assert_eq!(s1.duty("h"), Some(0.5));
        assert!(matches!(
            plant.apply_actuation(&s, &cmd("f", Action::Duty(1.7))),
            Err(PlantError::OutOfRange { .. })
        ));
        assert!(matches!(
            plant.apply_actuation(&s, &cmd("nope", Action::Duty(0.1))),
            Err(PlantError::UnknownDevice(_))
        ));
        assert!(matches!(
            plant.apply_actuation(&s, &cmd("led", Action::Duty(0.1))),
            Err(PlantError::WrongAction { .. })
        ));
    }

    #[test]
    fn door_transit_is_gradual_and_monotone() {
        let plant = single_zone(None);
        let mut s = plant.initial_state(20.0, 40.0);
        let open = ActuatorCommand {
            device_id: "door".into(),
            action: Action::Position(ServoPosition::Open),
            issued_at: 0.0,
            source: CommandSource::User,
        };
        s = plant.apply_actuation(&s, &open).unwrap();
        let fraction = |s: &PlantState| match s.device("door") {
            Some(DeviceState::Servo { open_fraction, .. }) => *open_fraction,
            _ => unreachable!(),
        };
        let mut trace = vec![fraction(&s)];
        let mut statuses = Vec::new();
        for _ in 0..6 {
            s = plant.step(&s, &ambient(20.0), 0.5).unwrap();
            trace.push(fraction(&s));
            let door = plant.read_sensors(&s, 0).into_iter().find(|r| r.device_id == "door").unwrap();
            statuses.push(door.value);
        }
        assert!(trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(trace[1] > 0.0 && trace[1] < 1.0);
        assert_eq!(trace[4], 1.0); // 2 s transit at 0.5 s per step
        assert_eq!(statuses[0], ReadingValue::Text("opening".into()));
        assert_eq!(statuses[3], ReadingValue::Text("open".into()));
    }

    #[test]
    fn power_examples() {
        let plant = single_zone(None);
        let s = plant.initial_state(20.0, 40.0);
        assert_eq!(plant.electrical_power(&s).total_w, 0.0);

        let cmd = |id: &str, action| ActuatorCommand {
            device_id: id.into(),
            action,
            issued_at: 0.0,
            source: CommandSource::Lighting,
        };
        let lit = plant.apply_actuation(&s, &cmd("led", Action::Level(1.0))).unwrap();
        assert!((plant.electrical_power(&lit).total_w - 1.45).abs() < 1e-12);

        let heated = plant.apply_actuation(&s, &cmd("h", Action::Duty(0.5))).unwrap();
        let p = plant.electrical_power(&heated);
        assert_eq!(p.per_device_w["h"], 20.0);
        assert_eq!(p.actuators_w, 20.0);
    }

    #[test]
    fn camera_follows_colocated_pir() {
        let topo = Arc::new(default_topology());
        let plant = Plant::new(topo, PlantConfig::default()).unwrap();
        let mut s = plant.initial_state(20.0, 40.0);
        assert!(plant.camera_events(&s).is_empty());

        s.zone_mut("kitchen").unwrap().occupants = 1;
        assert!(plant.camera_events(&s).is_empty(), "kitchen has no camera");

        s.zone_mut("dining").unwrap().motion_pulse = true;
        let events = plant.camera_events(&s);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].device_id, "front-door-camera");

        let s = plant.start_recording(&s, &events);
        assert!(s.camera_recording("front-door-camera"));
    }
}
