//! Per-floor controller. Owns only its floor's zones and devices and sees the rest
//! of the building exclusively through the inputs it is handed each tick.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::baseline::baseline_thermostat;
use super::doors::{door_window_command, DoorError, DoorNotification, NightLockRule, RequestOrigin};
use super::ident::ZoneModel;
use super::lighting::{lighting_decision, LightingContext, LightingMode, LightingPolicy, ZoneLighting};
use super::mpc::{mpc_step, MpcConfig, MpcInput, SolveStatus};
use super::schedule::{
    resolve_setpoint, time_of_day, ComfortBounds, ScheduleError, SetpointSchedule, DEFAULT_OVERRIDE_EXPIRY_S,
    SECONDS_PER_DAY,
};
use crate::command::{Action, ActuatorCommand, CommandSource, ServoPosition};
use crate::topology::{BuildingTopology, DeviceType, Zone};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("floor {0} does not exist")]
    UnknownFloor(u32),
    #[error("zone {zone} is not on floor {floor}")]
    ForeignZone { zone: String, floor: u32 },
    #[error("device {device} is not on floor {floor}")]
    ForeignDevice { device: String, floor: u32 },
    #[error("unknown zone {0}")]
    UnknownZone(String),
    #[error("zone {0} has no identified model")]
    MissingModel(String),
    #[error("zone {0} is not climate controlled")]
    NotControlled(String),
    #[error("invalid controller configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Setpoint(#[from] ScheduleError),
    #[error(transparent)]
    Door(#[from] DoorError),
    #[error("device {0} is not an LED strip")]
    NotLight(String),
    #[error("light level {0} outside [0, 1]")]
    Level(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlStrategy {
    #[default]
    Mpc,
    Baseline,
}

impl ControlStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            ControlStrategy::Mpc => "mpc",
            ControlStrategy::Baseline => "baseline",
        }
    }
}

/// Gains of the output-offset observer run alongside the MPC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObserverGains {
    pub state: f64,
    pub offset: f64,
}

impl Default for ObserverGains {
    fn default() -> Self {
        Self { state: 0.3, offset: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloorControllerConfig {
    pub strategy: ControlStrategy,
    pub mpc: MpcConfig,
    pub baseline_hysteresis_c: f64,
    pub schedule: SetpointSchedule,
    pub comfort: ComfortBounds,
    pub lighting: LightingPolicy,
    pub night_lock: Option<NightLockRule>,
    pub stale_after_ticks: u64,
    pub observer: ObserverGains,
    pub dt_s: f64,
    /// Time of day at simulation time zero.
    pub start_time_of_day_s: f64,
    pub seed: u64,
    pub override_expiry_s: f64,
}

impl FloorControllerConfig {
    pub fn new(schedule: SetpointSchedule) -> Self {
        Self {
            strategy: ControlStrategy::Mpc,
            mpc: MpcConfig::default(),
            baseline_hysteresis_c: 0.5,
            schedule,
            comfort: ComfortBounds::default(),
            lighting: LightingPolicy::default(),
            night_lock: None,
            stale_after_ticks: 3,
            observer: ObserverGains::default(),
            dt_s: 5.0,
            start_time_of_day_s: 0.0,
            seed: 0,
            override_expiry_s: DEFAULT_OVERRIDE_EXPIRY_S,
        }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |m: String| Err(ControlError::Config(m));
        if !(self.dt_s.is_finite() && self.dt_s > 0.0) {
            return bad(format!("dt {}", self.dt_s));
        }
        if self.strategy == ControlStrategy::Mpc {
            self.mpc.validate(self.dt_s).map_err(|e| ControlError::Config(e.to_string()))?;
        }
        if !(self.baseline_hysteresis_c > 0.0) {
            return bad(format!("hysteresis {} must be positive", self.baseline_hysteresis_c));
        }
        self.lighting.validate().map_err(|e| ControlError::Config(e.to_string()))?;
        if self.stale_after_ticks == 0 {
            return bad("stale_after_ticks must be at least 1".into());
        }
        if !(self.override_expiry_s > 0.0) {
            return bad(format!("override expiry {}", self.override_expiry_s));
        }
        for e in self.schedule.entries() {
            self.comfort.check(e.temperature_c, e.humidity_pct)?;
        }
        Ok(())
    }
}

/// Everything a floor controller can be told.
#[derive(Debug, Clone, PartialEq)]
pub enum FloorInput {
    Temperature { zone_id: String, value: f64 },
    Humidity { zone_id: String, value: f64 },
    Motion { zone_id: String, detected: bool },
    AmbientTemperature(f64),
    AmbientHumidity(f64),
    /// Manual setpoint for one zone or, with `zone_id = None`, the whole floor.
    Setpoint { zone_id: Option<String>, temperature_c: f64, humidity_pct: f64, duration_s: Option<f64> },
    Light { device_id: String, level: Option<f64>, mode: Option<LightingMode> },
    Door { device_id: String, position: ServoPosition },
    Away(bool),
}

/// Checks a resident request against the floor's devices and comfort bounds
/// without touching any controller state.
pub fn validate_request(
    topology: &BuildingTopology,
    floor: u32,
    comfort: &ComfortBounds,
    input: &FloorInput,
) -> Result<(), ControlError> {
    let device_on_floor = |id: &str| -> Result<DeviceType, ControlError> {
        let dev = topology.device(id).ok_or_else(|| ControlError::Door(DoorError::UnknownDevice(id.into())))?;
        if topology.floor_of_device(id) != Some(floor) {
            return Err(ControlError::ForeignDevice { device: id.into(), floor });
        }
        Ok(dev.device_type)
    };
    match input {
        FloorInput::Setpoint { zone_id, temperature_c, humidity_pct, duration_s } => {
            if let Some(z) = zone_id {
                let zone = topology.zone(z).ok_or_else(|| ControlError::UnknownZone(z.clone()))?;
                if topology.floor_of_zone(z) != Some(floor) {
                    return Err(ControlError::ForeignZone { zone: z.clone(), floor });
                }
                if !zone.climate_controlled {
                    return Err(ControlError::NotControlled(z.clone()));
                }
            }
            comfort.check(*temperature_c, *humidity_pct)?;
            if let Some(d) = duration_s {
                if !(d.is_finite() && *d > 0.0) {
                    return Err(ScheduleError::Expiry(*d).into());
                }
            }
            Ok(())
        }
        FloorInput::Light { device_id, level, .. } => {
            if device_on_floor(device_id)? != DeviceType::LedStrip {
                return Err(ControlError::NotLight(device_id.clone()));
            }
            match level {
                Some(l) if !(0.0..=1.0).contains(l) => Err(ControlError::Level(*l)),
                _ => Ok(()),
            }
        }
        FloorInput::Door { device_id, .. } => {
            let ty = device_on_floor(device_id)?;
            if !ty.is_servo() {
                return Err(DoorError::NotServo { device_id: device_id.clone(), device_type: ty.as_str() }.into());
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoneSetpoint {
    pub zone_id: String,
    pub temperature_c: f64,
    pub humidity_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoneReport {
    pub zone_id: String,
    pub t_ref: f64,
    pub h_ref: f64,
    pub temperature_c: Option<f64>,
    pub humidity_pct: Option<f64>,
    pub heater: f64,
    pub fan: f64,
    pub cost: Option<f64>,
    pub status: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TickOutput {
    pub floor: u32,
    pub tick: u64,
    pub time_s: f64,
    pub commands: Vec<ActuatorCommand>,
    pub notifications: Vec<DoorNotification>,
    pub setpoints: Vec<ZoneSetpoint>,
    pub zones: Vec<ZoneReport>,
    pub diagnostics: Vec<String>,
    pub rejected: Vec<String>,
}

fn opt(v: Option<f64>, precision: usize) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.precision$}"))
}

impl TickOutput {
    /// One-line summary for the diagnostics log.
    pub fn log_line(&self) -> String {
        let mut line = format!("t={:.1} floor={}", self.time_s, self.floor);
        for z in &self.zones {
            let _ = write!(
                line,
                " {}[Tref={:.2} Href={:.1} T={} H={} uh={:.3} uf={:.3} cost={} {}]",
                z.zone_id,
                z.t_ref,
                z.h_ref,
                opt(z.temperature_c, 2),
                opt(z.humidity_pct, 1),
                z.heater,
                z.fan,
                opt(z.cost, 4),
                z.status
            );
        }
        if self.diagnostics.is_empty() {
            line.push_str(" diag=none");
        } else {
            let _ = write!(line, " diag={}", self.diagnostics.join("; "));
        }
        line
    }
}

#[derive(Debug, Clone, Default)]
struct Observer {
    estimate: Option<(f64, f64)>,
    offset: (f64, f64),
}

#[derive(Debug, Clone)]
struct ZoneLoop {
    zone_id: String,
    climate_controlled: bool,
    heaters: Vec<String>,
    fans: Vec<String>,
    leds: Vec<String>,
    model: Option<ZoneModel>,
    schedule: SetpointSchedule,
    lighting_mode: LightingMode,
    lighting: ZoneLighting,
    latest_t: Option<f64>,
    latest_h: Option<f64>,
    fresh_t: Option<f64>,
    fresh_h: Option<f64>,
    last_update_tick: Option<u64>,
    motion: bool,
    last_u: (f64, f64),
    observer: Observer,
}

impl ZoneLoop {
    fn new(zone: &Zone, schedule: SetpointSchedule, mode: LightingMode, model: Option<ZoneModel>) -> Self {
        let ids = |ty| zone.devices_of(ty).map(|d| d.device_id.clone()).collect::<Vec<_>>();
        Self {
            zone_id: zone.id.clone(),
            climate_controlled: zone.climate_controlled,
            heaters: ids(DeviceType::Heater),
            fans: ids(DeviceType::Fan),
            leds: ids(DeviceType::LedStrip),
            model,
            schedule,
            lighting_mode: mode,
            lighting: ZoneLighting::default(),
            latest_t: None,
            latest_h: None,
            fresh_t: None,
            fresh_h: None,
            last_update_tick: None,
            motion: false,
            last_u: (0.0, 0.0),
            observer: Observer::default(),
        }
    }
}

pub struct FloorController {
    floor: u32,
    config: FloorControllerConfig,
    zones: Vec<ZoneLoop>,
    /// Servo devices on this floor, for the night-lock rule.
    servos: Vec<String>,
    topology: BuildingTopology,
    ambient: (Option<f64>, Option<f64>),
    ambient_prev: (Option<f64>, Option<f64>),
    away: bool,
    tick: u64,
}

impl FloorController {
    /// `models` must hold an identified model for every climate-controlled zone
    /// of the floor when the strategy is MPC.
    pub fn new(
        topology: &BuildingTopology,
        floor: u32,
        config: FloorControllerConfig,
        models: &BTreeMap<String, ZoneModel>,
    ) -> Result<Self, ControlError> {
        config.validate()?;
        let floor_zones = topology.zones_on_floor(floor).map_err(|_| ControlError::UnknownFloor(floor))?;
        let mut zones = Vec::with_capacity(floor_zones.len());
        for z in floor_zones {
            let model = models.get(&z.id).copied();
            if z.climate_controlled && config.strategy == ControlStrategy::Mpc && model.is_none() {
                return Err(ControlError::MissingModel(z.id.clone()));
            }
            zones.push(ZoneLoop::new(z, config.schedule.clone(), config.lighting.mode, model));
        }
        let servos = floor_zones
            .iter()
            .flat_map(|z| z.devices.iter())
            .filter(|d| d.device_type.is_servo())
            .map(|d| d.device_id.clone())
            .collect();
        // keep a private copy restricted to this floor
        let mut own = topology.clone();
        own.floors.retain(|f| f.index == floor);
        Ok(Self {
            floor,
            config,
            zones,
            servos,
            topology: own,
            ambient: (None, None),
            ambient_prev: (None, None),
            away: false,
            tick: 0,
        })
    }

    pub fn floor(&self) -> u32 {
        self.floor
    }

    pub fn config(&self) -> &FloorControllerConfig {
        &self.config
    }

    pub fn zone_ids(&self) -> impl Iterator<Item = &str> {
        self.zones.iter().map(|z| z.zone_id.as_str())
    }

    pub fn away(&self) -> bool {
        self.away
    }

    pub fn setpoint(&self, zone_id: &str, now_s: f64) -> Option<(f64, f64)> {
        let z = self.zones.iter().find(|z| z.zone_id == zone_id)?;
        Some(resolve_setpoint(&z.schedule, now_s, self.time_of_day(now_s)))
    }

    fn time_of_day(&self, now_s: f64) -> f64 {
        time_of_day(self.config.start_time_of_day_s + now_s)
    }

    fn zone_mut(&mut self, zone_id: &str) -> Option<&mut ZoneLoop> {
        self.zones.iter_mut().find(|z| z.zone_id == zone_id)
    }

    fn apply_input(&mut self, input: FloorInput, now_s: f64, out: &mut TickOutput) {
        if let Err(e) = validate_request(&self.topology, self.floor, &self.config.comfort, &input) {
            out.rejected.push(e.to_string());
            return;
        }
        let tick = self.tick;
        let floor = self.floor;
        let unknown = |zone: &str, out: &mut TickOutput| {
            out.diagnostics.push(format!("ignored reading for zone {zone} outside floor {floor}"));
        };
        match input {
            FloorInput::Temperature { zone_id, value } => match self.zone_mut(&zone_id) {
                Some(z) if value.is_finite() => {
                    z.latest_t = Some(value);
                    z.fresh_t = Some(value);
                    z.last_update_tick = Some(tick);
                }
                Some(_) => out.diagnostics.push(format!("zone {zone_id}: non-finite temperature reading")),
                None => unknown(&zone_id, out),
            },
            FloorInput::Humidity { zone_id, value } => match self.zone_mut(&zone_id) {
                Some(z) if value.is_finite() => {
                    z.latest_h = Some(value);
                    z.fresh_h = Some(value);
                    z.last_update_tick = Some(tick);
                }
                Some(_) => out.diagnostics.push(format!("zone {zone_id}: non-finite humidity reading")),
                None => unknown(&zone_id, out),
            },
            FloorInput::Motion { zone_id, detected } => match self.zone_mut(&zone_id) {
                Some(z) => z.motion |= detected,
                None => unknown(&zone_id, out),
            },
            FloorInput::AmbientTemperature(v) if v.is_finite() => self.ambient.0 = Some(v),
            FloorInput::AmbientHumidity(v) if v.is_finite() => self.ambient.1 = Some(v),
            FloorInput::AmbientTemperature(_) | FloorInput::AmbientHumidity(_) => {
                out.diagnostics.push("non-finite ambient reading".into())
            }
            FloorInput::Setpoint { zone_id, temperature_c, humidity_pct, duration_s } => {
                let duration = duration_s.unwrap_or(self.config.override_expiry_s);
                let comfort = self.config.comfort;
                for z in self.zones.iter_mut().filter(|z| z.climate_controlled) {
                    if zone_id.as_deref().is_none_or(|id| id == z.zone_id) {
                        if let Err(e) = z.schedule.set_override(temperature_c, humidity_pct, now_s, duration, &comfort) {
                            out.rejected.push(e.to_string());
                        }
                    }
                }
            }
            FloorInput::Light { device_id, level, mode } => {
                let zone_id = self.topology.device(&device_id).map(|d| d.zone_id.clone()).unwrap_or_default();
                let z = self.zone_mut(&zone_id).expect("validated");
                if let Some(m) = mode {
                    z.lighting_mode = m;
                }
                if let Some(l) = level {
                    z.lighting.level = l;
                    let cmd = ActuatorCommand::new(device_id, Action::Level(l), now_s, CommandSource::User)
                        .expect("validated level");
                    out.commands.push(cmd);
                }
            }
            FloorInput::Door { device_id, position } => {
                match door_window_command(&self.topology, &device_id, position, RequestOrigin::User, now_s) {
                    Ok((cmd, note)) => {
                        out.commands.push(cmd);
                        out.notifications.push(note);
                    }
                    Err(e) => out.rejected.push(e.to_string()),
                }
            }
            FloorInput::Away(away) => self.away = away,
        }
    }

    /// Runs one control period and returns this floor's command batch.
    pub fn tick(&mut self, now_s: f64, inputs: Vec<FloorInput>) -> TickOutput {
        let mut out = TickOutput {
            floor: self.floor,
            tick: self.tick,
            time_s: now_s,
            commands: Vec::new(),
            notifications: Vec::new(),
            setpoints: Vec::new(),
            zones: Vec::new(),
            diagnostics: Vec::new(),
            rejected: Vec::new(),
        };
        for input in inputs {
            self.apply_input(input, now_s, &mut out);
        }
        let dt = self.config.dt_s;
        let tod = self.time_of_day(now_s);

        if let Some(rule) = self.config.night_lock {
            if rule.fires(tod, dt) {
                for id in &self.servos {
                    if let Ok((cmd, note)) =
                        door_window_command(&self.topology, id, ServoPosition::Closed, RequestOrigin::Automation, now_s)
                    {
                        out.commands.push(cmd);
                        out.notifications.push(note);
                    }
                }
            }
        }

        let ambient_t = self.ambient.0;
        let ambient_h = self.ambient.1;
        if ambient_t.is_none() || ambient_h.is_none() {
            out.diagnostics.push("no ambient data".into());
        }
        let day = ((self.config.start_time_of_day_s + now_s) / SECONDS_PER_DAY).floor().max(0.0) as u64;
        let strategy = self.config.strategy;
        let gains = self.config.observer;
        let seed = self.config.seed ^ (self.floor as u64).wrapping_mul(0x9E37_79B9);
        let tick = self.tick;
        for z in self.zones.iter_mut() {
            if z.climate_controlled {
                let (t_ref, h_ref) = resolve_setpoint(&z.schedule, now_s, tod);
                out.setpoints.push(ZoneSetpoint { zone_id: z.zone_id.clone(), temperature_c: t_ref, humidity_pct: h_ref });
                let mut cost = None;
                let status;
                let (u_h, u_f) = match z.last_update_tick {
                    None => {
                        out.diagnostics.push(format!("zone {}: no readings received, duties held at 0", z.zone_id));
                        status = "no-data";
                        (0.0, 0.0)
                    }
                    Some(last) if tick - last > self.config.stale_after_ticks => {
                        out.diagnostics.push(format!(
                            "zone {}: readings stale for {} ticks, holding last command",
                            z.zone_id,
                            tick - last
                        ));
                        status = "stale";
                        z.last_u
                    }
                    Some(_) => match strategy {
                        ControlStrategy::Baseline => {
                            status = "baseline";
                            match z.latest_t {
                                Some(t) => baseline_thermostat(t, t_ref, self.config.baseline_hysteresis_c),
                                None => (0.0, 0.0),
                            }
                        }
                        ControlStrategy::Mpc => {
                            let model = z.model.expect("checked at construction");
                            let (Some(t_meas), Some(h_meas)) = (z.latest_t, z.latest_h) else {
                                out.diagnostics.push(format!("zone {}: incomplete readings, duties held at 0", z.zone_id));
                                z.last_u = (0.0, 0.0);
                                out.zones.push(ZoneReport {
                                    zone_id: z.zone_id.clone(),
                                    t_ref,
                                    h_ref,
                                    temperature_c: z.latest_t,
                                    humidity_pct: z.latest_h,
                                    heater: 0.0,
                                    fan: 0.0,
                                    cost: None,
                                    status: "incomplete",
                                });
                                emit_duties(&mut out, z, 0.0, 0.0, now_s, CommandSource::Mpc);
                                continue;
                            };
                            let amb_t = ambient_t.unwrap_or(t_meas);
                            let amb_h = ambient_h.unwrap_or(h_meas);
                            let prev_amb = (
                                self.ambient_prev.0.unwrap_or(amb_t),
                                self.ambient_prev.1.unwrap_or(amb_h),
                            );
                            update_observer(&mut z.observer, &model, gains, z.fresh_t, z.fresh_h, (t_meas, h_meas), z.last_u, prev_amb);
                            let (t_est, h_est) = z.observer.estimate.expect("set by update");
                            let references = (1..=self.config.mpc.horizon)
                                .map(|k| {
                                    let when = now_s + k as f64 * dt;
                                    resolve_setpoint(&z.schedule, when, tod + k as f64 * dt)
                                })
                                .collect();
                            let input = MpcInput {
                                temperature_c: t_est,
                                humidity_pct: h_est,
                                ambient_temperature_c: amb_t,
                                ambient_humidity_pct: amb_h,
                                temperature_offset: z.observer.offset.0,
                                humidity_offset: z.observer.offset.1,
                                references,
                            };
                            let sol = mpc_step(&model, &input, &self.config.mpc);
                            match &sol.status {
                                SolveStatus::Fallback(reason) => {
                                    out.diagnostics.push(format!("zone {}: solver fallback ({reason})", z.zone_id));
                                    status = "fallback";
                                }
                                SolveStatus::IterationLimit => {
                                    out.diagnostics.push(format!("zone {}: solver hit iteration limit", z.zone_id));
                                    status = "iteration-limit";
                                }
                                SolveStatus::Converged => status = "ok",
                            }
                            cost = sol.cost.is_finite().then_some(sol.cost);
                            (sol.heater, sol.fan)
                        }
                    },
                };
                z.last_u = (u_h, u_f);
                let source = match strategy {
                    ControlStrategy::Mpc => CommandSource::Mpc,
                    ControlStrategy::Baseline => CommandSource::Schedule,
                };
                emit_duties(&mut out, z, u_h, u_f, now_s, source);
                out.zones.push(ZoneReport {
                    zone_id: z.zone_id.clone(),
                    t_ref,
                    h_ref,
                    temperature_c: z.latest_t,
                    humidity_pct: z.latest_h,
                    heater: u_h,
                    fan: u_f,
                    cost,
                    status,
                });
            }

            if !z.leds.is_empty() {
                let ctx = LightingContext {
                    zone_id: &z.zone_id,
                    occupied: z.motion,
                    now_s,
                    time_of_day_s: tod,
                    day,
                    dt_s: dt,
                    away: self.away,
                    seed,
                };
                if let Some(level) = lighting_decision(&self.config.lighting, z.lighting_mode, &mut z.lighting, &ctx) {
                    for led in &z.leds {
                        let cmd = ActuatorCommand::new(led.clone(), Action::Level(level), now_s, CommandSource::Lighting)
                            .expect("policy levels are validated");
                        out.commands.push(cmd);
                    }
                }
            }
            z.motion = false;
            z.fresh_t = None;
            z.fresh_h = None;
        }
        self.ambient_prev = self.ambient;
        self.tick += 1;
        out
    }
}

fn emit_duties(out: &mut TickOutput, z: &ZoneLoop, u_h: f64, u_f: f64, now_s: f64, source: CommandSource) {
    for (ids, duty) in [(&z.heaters, u_h), (&z.fans, u_f)] {
        for id in ids {
            let cmd = ActuatorCommand::new(id.clone(), Action::Duty(duty), now_s, source).expect("duties are saturated");
            out.commands.push(cmd);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update_observer(
    obs: &mut Observer,
    model: &ZoneModel,
    gains: ObserverGains,
    fresh_t: Option<f64>,
    fresh_h: Option<f64>,
    latest: (f64, f64),
    u_prev: (f64, f64),
    ambient_prev: (f64, f64),
) {
    let Some((t, h)) = obs.estimate else {
        obs.estimate = Some(latest);
        return;
    };
    let mut pt = model.next_temperature(t, u_prev.0, u_prev.1, ambient_prev.0) + obs.offset.0;
    let mut ph = model.next_humidity(h, u_prev.1, ambient_prev.1) + obs.offset.1;
    if let Some(y) = fresh_t {
        let e = y - pt;
        pt += gains.state * e;
        obs.offset.0 += gains.offset * e;
    }
    if let Some(y) = fresh_h {
        let e = y - ph;
        ph += gains.state * e;
        obs.offset.1 += gains.offset * e;
    }
    obs.estimate = Some((pt, ph));
}
