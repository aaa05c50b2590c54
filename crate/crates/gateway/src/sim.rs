//! The scenario runner: plant, per-floor controllers, broker and telemetry
//! wired together and advanced one tick at a time.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use sb_broker::BrokerConfig;
use sb_core::command::Action;
use sb_core::control::{
    time_of_day, ControlError, ControlStrategy, FloorController, FloorControllerConfig, ScheduleError,
    SetpointSchedule, TickOutput,
};
use sb_core::plant::{
    OccupancyModel, OccupancyScript, Plant, PlantError, PlantState, ReadingKind, ReadingValue,
};
use sb_core::topology::{BuildingTopology, DeviceType};
use sb_core::wire::{
    command_topic, control_topic, decode_floor_input, energy_topic, event_topic, reading_topic,
    setpoint_topic, to_json, CommandPayload, EventKind, EventPayload, ReadingPayload, AMBIENT_DEVICE,
    AMBIENT_TOPIC, METRIC_HUMIDITY_SETPOINT, METRIC_OUTDOOR_HUMIDITY, METRIC_OUTDOOR_TEMPERATURE, METRIC_POWER,
    METRIC_TEMPERATURE_SETPOINT,
};
use sb_telemetry::{export_archive, StoreError, TelemetryStore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bus::{Bus, BusError, Endpoint, Transport};
use crate::identify::{bootstrap_models, BootstrapError};
use crate::report::{
    building_errors, floor_errors, plot_series, write_trajectory, zone_errors, EnergySummary, KilledController,
    RunReport, TelemetrySummary, TrajectoryRow,
};
use crate::requests::{route, RequestError};
use crate::scenario::{Fault, Scenario, ScenarioError};
use crate::shared::{RunControl, RunStatus, Shared};

pub const METRIC_ACTUATOR_POWER: &str = "actuator_power_w";
pub const METRIC_LIGHTING_POWER: &str = "lighting_power_w";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Fast,
    /// Sleeps so that one tick takes `dt / speed` wall seconds.
    Realtime,
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("identification: {0}")]
    Bootstrap(#[from] BootstrapError),
    #[error("controller: {0}")]
    Control(#[from] ControlError),
    #[error("setpoint schedule: {0}")]
    Schedule(#[from] ScheduleError),
    #[error("bus: {0}")]
    Bus(#[from] BusError),
    #[error("telemetry: {0}")]
    Store(#[from] StoreError),
    #[error("scripted request at t={t}: {source}")]
    Request { t: f64, source: RequestError },
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
    #[error("invalid run options: {0}")]
    Options(String),
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> RunError {
    let context = context.into();
    move |source| RunError::Io { context, source }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Replaces the scenario's strategy.
    pub strategy: Option<ControlStrategy>,
    pub transport: Transport,
    pub mode: Mode,
    pub speed: f64,
    /// Added to the scenario's faults.
    pub faults: Vec<Fault>,
    /// Replaces the scenario's building.
    pub topology: Option<BuildingTopology>,
    /// File-backed telemetry log; in memory when absent.
    pub store_path: Option<PathBuf>,
    pub broker: BrokerConfig,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            strategy: None,
            transport: Transport::InProcess,
            mode: Mode::Fast,
            speed: 1.0,
            faults: Vec::new(),
            topology: None,
            store_path: None,
            broker: BrokerConfig::default(),
        }
    }
}

struct FloorNode {
    floor: u32,
    controller: FloorController,
    endpoint: Box<dyn Endpoint>,
}

#[derive(Debug, Clone, Default)]
struct EnergyTotals {
    actuator_j: f64,
    lighting_j: f64,
    per_floor_j: BTreeMap<u32, f64>,
}

/// Everything a finished run produced.
pub struct RunOutcome {
    pub report: RunReport,
    pub trajectory: Vec<TrajectoryRow>,
    pub diagnostics: Vec<String>,
    /// Messages published per category over the whole run.
    pub publish_counts: BTreeMap<&'static str, u64>,
    pub archive: Vec<u8>,
    pub shared: Arc<Shared>,
}

impl RunOutcome {
    /// Writes the report, trajectory, plot series, diagnostics log and archive.
    pub fn write_outputs(&self, dir: &Path) -> Result<(), RunError> {
        std::fs::create_dir_all(dir.join("plots")).map_err(io_err(format!("create {}", dir.display())))?;
        let write = |name: &str, bytes: &[u8]| {
            std::fs::write(dir.join(name), bytes).map_err(io_err(format!("write {name}")))
        };
        let mut report = serde_json::to_vec_pretty(&self.report).expect("report serializes");
        report.push(b'\n');
        write("report.json", &report)?;
        let mut traj = Vec::new();
        write_trajectory(&self.trajectory, &mut traj).map_err(|e| RunError::Io {
            context: "trajectory.csv".into(),
            source: std::io::Error::other(e),
        })?;
        write("trajectory.csv", &traj)?;
        let mut log = self.diagnostics.join("\n");
        log.push('\n');
        write("diagnostics.log", log.as_bytes())?;
        write("telemetry.archive", &self.archive)?;
        write_plots(&self.trajectory, 1, &dir.join("plots"))
    }
}

/// Writes `fig7_temperature.csv`, `fig8_humidity.csv` and `fig9_actuators.csv` for one floor.
pub fn write_plots(rows: &[TrajectoryRow], floor: u32, dir: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(dir).map_err(io_err(format!("create {}", dir.display())))?;
    let p = plot_series(rows, floor);
    for (name, body) in
        [("fig7_temperature.csv", &p.temperature), ("fig8_humidity.csv", &p.humidity), ("fig9_actuators.csv", &p.actuators)]
    {
        std::fs::write(dir.join(name), body).map_err(io_err(format!("write {name}")))?;
    }
    Ok(())
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub struct Simulation {
    scenario: Scenario,
    topology: Arc<BuildingTopology>,
    plant: Plant,
    state: PlantState,
    occupancy: OccupancyModel,
    strategy: ControlStrategy,
    transport: Transport,
    mode: Mode,
    speed: f64,
    faults: Vec<Fault>,
    floors: Vec<FloorNode>,
    devices: Box<dyn Endpoint>,
    gateway: Box<dyn Endpoint>,
    ingester: Box<dyn Endpoint>,
    script_cursor: usize,
    tick: u64,
    ticks: u64,
    trajectory: Vec<TrajectoryRow>,
    diagnostics: Vec<String>,
    publish_counts: BTreeMap<&'static str, u64>,
    energy: EnergyTotals,
    duplicates: usize,
    rejected: usize,
    killed: Vec<KilledController>,
    shared: Arc<Shared>,
    control: Arc<RunControl>,
    // last: endpoints must disconnect before the broker shuts down
    _bus: Bus,
}

impl Simulation {
    pub fn new(scenario: Scenario, opts: RunOptions) -> Result<Self, RunError> {
        scenario.validate()?;
        if !(opts.speed.is_finite() && opts.speed > 0.0) {
            return Err(RunError::Options(format!("speed {} must be positive", opts.speed)));
        }
        let topology = Arc::new(match opts.topology {
            Some(t) => t,
            None => scenario.load_topology()?,
        });
        let plant = Plant::new(topology.clone(), scenario.plant.clone())?;
        plant.validate_dt(scenario.dt_s)?;
        let script = OccupancyScript::from_file_events(&scenario.occupancy)?;
        script.validate(&topology)?;
        for r in &scenario.requests {
            route(&topology, &r.request, r.t).map_err(|source| RunError::Request { t: r.t, source })?;
        }
        let strategy = opts.strategy.unwrap_or(scenario.controller.strategy);
        let models = match strategy {
            ControlStrategy::Mpc => bootstrap_models(&plant, &scenario)?,
            ControlStrategy::Baseline => BTreeMap::new(),
        };

        let c = &scenario.controller;
        let mut cfg = FloorControllerConfig::new(SetpointSchedule::new(scenario.schedule.clone(), &c.comfort)?);
        cfg.strategy = strategy;
        cfg.mpc = c.mpc.clone();
        cfg.mpc.sample_period_s = scenario.dt_s;
        cfg.baseline_hysteresis_c = c.baseline_hysteresis_c;
        cfg.comfort = c.comfort;
        cfg.lighting = c.lighting.clone();
        cfg.night_lock = c.night_lock;
        cfg.stale_after_ticks = c.stale_after_ticks;
        cfg.observer = c.observer;
        cfg.dt_s = scenario.dt_s;
        cfg.start_time_of_day_s = scenario.start_time_of_day_s;
        cfg.seed = scenario.seed;
        if let Some(e) = c.override_expiry_s {
            cfg.override_expiry_s = e;
        }

        let bus = Bus::start(opts.transport, opts.broker)?;
        let mut floors = Vec::new();
        for f in &topology.floors {
            let controller = FloorController::new(&topology, f.index, cfg.clone(), &models)?;
            let mut endpoint = bus.connect(&format!("controller-floor{}", f.index))?;
            let filters = sb_core::wire::controller_filters(f.index);
            endpoint.subscribe(&filters.iter().map(String::as_str).collect::<Vec<_>>())?;
            floors.push(FloorNode { floor: f.index, controller, endpoint });
        }
        let mut devices = bus.connect("plant")?;
        devices.subscribe(&["sb/+/+/+/cmd"])?;
        let gateway = bus.connect("gateway")?;
        let mut ingester = bus.connect("ingester")?;
        ingester.subscribe(&["sb/#"])?;

        let store = match &opts.store_path {
            Some(p) => TelemetryStore::open(p)?,
            None => TelemetryStore::in_memory(),
        };
        let control = Arc::new(RunControl::default());
        let shared = Arc::new(Shared::new(topology.clone(), c.comfort, scenario.dt_s, store, Some(control.clone())));
        let ticks = scenario.ticks();
        *shared.status.lock().expect("status lock") =
            RunStatus { scenario: scenario.name.clone(), ticks_total: ticks, ..RunStatus::default() };

        let mut faults = scenario.faults.clone();
        faults.extend(opts.faults);
        let state = plant.initial_state(scenario.initial.temperature_c, scenario.initial.humidity_pct);
        let mut requests = scenario.requests.clone();
        requests.sort_by(|a, b| a.t.total_cmp(&b.t));
        let scenario = Scenario { requests, ..scenario };

        Ok(Self {
            topology,
            plant,
            state,
            occupancy: OccupancyModel::scripted(script),
            strategy,
            transport: opts.transport,
            mode: opts.mode,
            speed: opts.speed,
            faults,
            floors,
            devices,
            gateway,
            ingester,
            script_cursor: 0,
            tick: 0,
            ticks,
            trajectory: Vec::new(),
            diagnostics: Vec::new(),
            publish_counts: BTreeMap::new(),
            energy: EnergyTotals::default(),
            duplicates: 0,
            rejected: 0,
            killed: Vec::new(),
            shared,
            control,
            scenario,
            _bus: bus,
        })
    }

    pub fn shared(&self) -> Arc<Shared> {
        self.shared.clone()
    }

    pub fn control(&self) -> Arc<RunControl> {
        self.control.clone()
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn is_done(&self) -> bool {
        self.tick >= self.ticks
    }

    fn log(&mut self, line: String) {
        self.shared.push_diagnostic(line.clone());
        self.diagnostics.push(line);
    }

    fn count(&mut self, category: &'static str) {
        *self.publish_counts.entry(category).or_default() += 1;
    }

    fn floor_of_zone(&self, zone: &str) -> u32 {
        self.topology.floor_of_zone(zone).expect("zone from topology")
    }

    /// Advances one tick.
    pub fn step(&mut self) -> Result<(), RunError> {
        let k = self.tick;
        let dt = self.scenario.dt_s;
        let now = k as f64 * dt;
        let tod = time_of_day(self.scenario.start_time_of_day_s + now);

        let dying: Vec<u32> = self.faults.iter().filter(|f| f.at_tick == k).map(|f| f.floor).collect();
        for floor in dying {
            if let Some(pos) = self.floors.iter().position(|n| n.floor == floor) {
                drop(self.floors.remove(pos));
                self.killed.push(KilledController { floor, at_tick: k });
                self.log(format!("t={now:.1} floor={floor} controller stopped"));
            }
        }

        // environment and sensors
        let ambient = self.scenario.ambient.at(now, tod);
        for (metric, value) in [
            (METRIC_OUTDOOR_TEMPERATURE, ambient.outdoor_temperature_c),
            (METRIC_OUTDOOR_HUMIDITY, ambient.outdoor_humidity_pct),
        ] {
            let p = ReadingPayload {
                timestamp: now,
                device_id: AMBIENT_DEVICE.into(),
                metric: metric.into(),
                value: ReadingValue::Number(value),
            };
            self.devices.publish(AMBIENT_TOPIC, to_json(&p))?;
            self.count("ambient");
        }
        self.state = self.plant.advance_occupancy(&self.state, &mut self.occupancy, dt)?;
        let cameras = self.plant.camera_events(&self.state);
        self.state = self.plant.start_recording(&self.state, &cameras);
        for e in &cameras {
            let p = EventPayload {
                timestamp: now,
                device_id: e.device_id.clone(),
                zone_id: Some(e.zone_id.clone()),
                floor: self.topology.floor_of_zone(&e.zone_id),
                detail: "recording started on motion".into(),
            };
            self.devices.publish(&event_topic(EventKind::Camera), to_json(&p))?;
            self.count("camera");
        }
        let mut measured: BTreeMap<String, (Option<f64>, Option<f64>)> = BTreeMap::new();
        for r in self.plant.read_sensors(&self.state, splitmix(self.scenario.seed ^ splitmix(k))) {
            let floor = self.floor_of_zone(&r.zone_id);
            match (r.kind, &r.value) {
                (ReadingKind::Temperature, ReadingValue::Number(v)) => measured.entry(r.zone_id.clone()).or_default().0 = Some(*v),
                (ReadingKind::Humidity, ReadingValue::Number(v)) => measured.entry(r.zone_id.clone()).or_default().1 = Some(*v),
                _ => {}
            }
            let p = ReadingPayload { timestamp: now, device_id: r.device_id.clone(), metric: r.kind.metric().into(), value: r.value };
            self.devices.publish(&reading_topic(floor, &r.zone_id, &r.device_id), to_json(&p))?;
            self.count("reading");
        }
        for s in self.plant.actuator_status(&self.state) {
            let floor = self.floor_of_zone(&s.zone_id);
            let p = ReadingPayload { timestamp: now, device_id: s.device_id.clone(), metric: s.metric.into(), value: s.value };
            self.devices.publish(&reading_topic(floor, &s.zone_id, &s.device_id), to_json(&p))?;
            self.count("status");
        }
        self.devices.flush()?;

        // resident requests
        let mut due = Vec::new();
        while let Some(r) = self.scenario.requests.get(self.script_cursor) {
            if r.t > now {
                break;
            }
            due.push(r.request.clone());
            self.script_cursor += 1;
        }
        due.extend(self.control.take_requests());
        for r in due {
            match route(&self.topology, &r, now) {
                Ok(routed) => {
                    for (floor, req) in routed {
                        self.gateway.publish(&control_topic(floor, req.kind()), req.to_json())?;
                        self.count("control");
                    }
                }
                Err(e) => self.log(format!("t={now:.1} request dropped: {e}")),
            }
        }
        self.gateway.flush()?;

        // controllers
        let mut refs: BTreeMap<String, (f64, f64)> = BTreeMap::new();
        let mut floors = std::mem::take(&mut self.floors);
        let mut result = Ok(());
        for node in floors.iter_mut() {
            match self.run_controller(node, now) {
                Ok(out) => {
                    for z in &out.zones {
                        refs.insert(z.zone_id.clone(), (z.t_ref, z.h_ref));
                    }
                    self.log(out.log_line());
                }
                Err(e) => {
                    result = Err(e);
                    break;
                }
            }
        }
        self.floors = floors;
        result?;

        // actuation
        for m in self.devices.drain()? {
            let applied = serde_json::from_slice::<CommandPayload>(&m.payload)
                .map_err(|e| e.to_string())
                .and_then(|c| c.into_command().map_err(|e| e.to_string()))
                .and_then(|cmd| self.plant.apply_actuation(&self.state, &cmd).map_err(|e| e.to_string()));
            match applied {
                Ok(s) => self.state = s,
                Err(e) => self.log(format!("t={now:.1} plant rejected {}: {e}", m.topic)),
            }
        }

        // metering
        let power = self.plant.electrical_power(&self.state);
        let mut per_floor: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
        for (floor, zone) in self.topology.zones_with_floor() {
            let e = per_floor.entry(floor).or_default();
            for d in &zone.devices {
                let w = power.per_device_w.get(&d.device_id).copied().unwrap_or(0.0);
                match d.device_type {
                    DeviceType::LedStrip => e.1 += w,
                    _ => e.0 += w,
                }
            }
        }
        for (floor, (act, light)) in per_floor {
            for (metric, w) in [(METRIC_POWER, act + light), (METRIC_ACTUATOR_POWER, act), (METRIC_LIGHTING_POWER, light)] {
                let p = ReadingPayload {
                    timestamp: now,
                    device_id: format!("floor{floor}-meter"),
                    metric: metric.into(),
                    value: ReadingValue::Number(w),
                };
                self.devices.publish(&energy_topic(floor), to_json(&p))?;
                self.count("energy");
            }
            *self.energy.per_floor_j.entry(floor).or_default() += (act + light) * dt;
        }
        self.energy.actuator_j += power.actuators_w * dt;
        self.energy.lighting_j += power.lighting_w * dt;
        self.devices.flush()?;

        // telemetry
        let msgs = self.ingester.drain()?;
        let report = {
            let mut store = self.shared.store.write().expect("store lock");
            store.ingest_batch(msgs.iter().map(|m| (m.topic.as_str(), &m.payload[..])))?
        };
        self.duplicates += report.duplicates;
        self.rejected += report.rejected.len();
        for (topic, e) in &report.rejected {
            self.log(format!("t={now:.1} telemetry rejected {topic}: {e}"));
        }
        if !report.accepted.is_empty() {
            // no receivers is fine
            let _ = self.shared.stream.send(report.accepted.into());
        }

        // trajectory
        for (floor, zone) in self.topology.zones_with_floor() {
            let z = self.state.zone(&zone.id).expect("state aligned with topology");
            let duty = |ty| zone.devices_of(ty).filter_map(|d| self.state.duty(&d.device_id)).sum::<f64>();
            let (mt, mh) = measured.get(&zone.id).copied().unwrap_or_default();
            let r = refs.get(&zone.id);
            self.trajectory.push(TrajectoryRow {
                time_s: now,
                floor,
                zone: zone.id.clone(),
                temperature_c: z.temperature_c,
                humidity_pct: z.humidity_pct,
                measured_temperature_c: mt,
                measured_humidity_pct: mh,
                t_ref: r.map(|r| r.0),
                h_ref: r.map(|r| r.1),
                heater: duty(DeviceType::Heater),
                fan: duty(DeviceType::Fan),
                occupants: z.occupants,
            });
        }

        self.state = self.plant.step(&self.state, &ambient, dt)?;
        self.tick += 1;
        let mut status = self.shared.status.lock().expect("status lock");
        status.tick = self.tick;
        status.time_s = self.tick as f64 * dt;
        Ok(())
    }

    fn run_controller(&mut self, node: &mut FloorNode, now: f64) -> Result<TickOutput, RunError> {
        let mut inputs = Vec::new();
        let mut problems = Vec::new();
        for m in node.endpoint.drain()? {
            match decode_floor_input(&m.topic, &m.payload) {
                Ok(i) => inputs.extend(i),
                Err(e) => problems.push(e.to_string()),
            }
        }
        let mut out = node.controller.tick(now, inputs);
        out.diagnostics.extend(problems);
        let floor = node.floor;
        let ep = &mut node.endpoint;

        for sp in &out.setpoints {
            for (metric, v) in [(METRIC_TEMPERATURE_SETPOINT, sp.temperature_c), (METRIC_HUMIDITY_SETPOINT, sp.humidity_pct)] {
                let p = ReadingPayload { timestamp: now, device_id: sp.zone_id.clone(), metric: metric.into(), value: ReadingValue::Number(v) };
                ep.publish(&setpoint_topic(floor, &sp.zone_id), to_json(&p))?;
                *self.publish_counts.entry("setpoint").or_default() += 1;
            }
        }
        for cmd in &out.commands {
            let zone = self.topology.device(&cmd.device_id).map(|d| d.zone_id.clone()).unwrap_or_default();
            ep.publish(&command_topic(floor, &zone, &cmd.device_id), to_json(&CommandPayload::from(cmd)))?;
            let category = match cmd.action {
                Action::Duty(_) => "duty",
                Action::Level(_) => "level",
                Action::Position(_) => "position",
            };
            *self.publish_counts.entry(category).or_default() += 1;
        }
        for n in &out.notifications {
            let p = EventPayload {
                timestamp: now,
                device_id: n.device_id.clone(),
                zone_id: Some(n.zone_id.clone()),
                floor: Some(floor),
                detail: format!("{} {} by {}", n.device_type, n.position, n.source.as_str()),
            };
            ep.publish(&event_topic(EventKind::Door), to_json(&p))?;
            *self.publish_counts.entry("door").or_default() += 1;
        }
        for (kind, lines, category) in [
            (EventKind::Diagnostic, &out.diagnostics, "diagnostic"),
            (EventKind::CommandRejected, &out.rejected, "command_rejected"),
        ] {
            if lines.is_empty() {
                continue;
            }
            let p = EventPayload {
                timestamp: now,
                device_id: format!("controller-floor{floor}"),
                zone_id: None,
                floor: Some(floor),
                detail: lines.join("; "),
            };
            ep.publish(&event_topic(kind), to_json(&p))?;
            *self.publish_counts.entry(category).or_default() += 1;
        }
        ep.flush()?;
        Ok(out)
    }

    /// Runs to the end, honoring pause/step requests and realtime pacing.
    pub fn run(mut self) -> Result<RunOutcome, RunError> {
        let mut origin = (Instant::now(), self.tick);
        while !self.is_done() {
            let was_paused = self.control.is_paused();
            if !self.control.wait_turn() {
                break;
            }
            self.shared.status.lock().expect("status lock").paused = self.control.is_paused();
            if self.mode == Mode::Realtime {
                if was_paused {
                    origin = (Instant::now(), self.tick);
                }
                let wall = (self.tick - origin.1) as f64 * self.scenario.dt_s / self.speed;
                let due = origin.0 + Duration::from_secs_f64(wall);
                let now = Instant::now();
                if due > now {
                    std::thread::sleep(due - now);
                }
            }
            self.step()?;
        }
        self.finish()
    }

    /// Runs the remaining ticks without pacing.
    pub fn run_fast(mut self) -> Result<RunOutcome, RunError> {
        while !self.is_done() {
            self.step()?;
        }
        self.finish()
    }

    pub fn finish(self) -> Result<RunOutcome, RunError> {
        let end = self.ticks as f64 * self.scenario.dt_s;
        let mut archive = Vec::new();
        let records = {
            let store = self.shared.store.read().expect("store lock");
            export_archive(&store, 0.0, end, &mut archive)?;
            store.len()
        };
        let zones = zone_errors(&self.trajectory);
        let to_wh = |j: f64| j / 3600.0;
        let report = RunReport {
            scenario: self.scenario.name.clone(),
            seed: self.scenario.seed,
            strategy: self.strategy,
            transport: self.transport,
            dt_s: self.scenario.dt_s,
            ticks: self.tick,
            floors: floor_errors(&zones),
            building: building_errors(&zones),
            zones,
            energy: EnergySummary {
                actuator_wh: to_wh(self.energy.actuator_j),
                lighting_wh: to_wh(self.energy.lighting_j),
                total_wh: to_wh(self.energy.actuator_j + self.energy.lighting_j),
                per_floor_wh: self.energy.per_floor_j.iter().map(|(f, j)| (*f, to_wh(*j))).collect(),
            },
            telemetry: TelemetrySummary {
                records,
                duplicates: self.duplicates,
                rejected: self.rejected,
                archive_sha256: sha256_hex(&archive),
            },
            killed: self.killed.clone(),
        };
        self.shared.set_finished();
        Ok(RunOutcome {
            report,
            trajectory: self.trajectory,
            diagnostics: self.diagnostics,
            publish_counts: self.publish_counts,
            archive,
            shared: self.shared,
        })
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Runs a scenario to completion in fast mode.
pub fn run_scenario(scenario: Scenario, opts: RunOptions) -> Result<RunOutcome, RunError> {
    Simulation::new(scenario, opts)?.run_fast()
}

/// Runs the scenario once per strategy with identical seeds.
pub fn compare_controllers(
    scenario: &Scenario,
    strategies: &[ControlStrategy],
    opts: &RunOptions,
) -> Result<Vec<crate::report::ComparisonRow>, RunError> {
    strategies
        .iter()
        .map(|s| {
            let o = RunOptions { strategy: Some(*s), store_path: None, ..opts.clone() };
            run_scenario(scenario.clone(), o).map(|out| crate::report::ComparisonRow::from_report(&out.report))
        })
        .collect()
}

/// Writes a diagnostics line stream to a file as the run goes.
pub fn append_lines(path: &Path, lines: &[String]) -> Result<(), RunError> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(format!("open {}", path.display())))?;
    for l in lines {
        writeln!(f, "{l}").map_err(io_err(format!("write {}", path.display())))?;
    }
    Ok(())
}
