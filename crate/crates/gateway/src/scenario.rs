//! Scenario files: everything needed to reproduce one run.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use sb_core::command::ServoPosition;
use sb_core::control::{
    ComfortBounds, ControlStrategy, LightingMode, LightingPolicy, MpcConfig, NightLockRule, ObserverGains,
    SetpointEntry,
};
use sb_core::plant::{AmbientConditions, OccupancyEventFile, PlantConfig};
use sb_core::topology::{default_topology, load_topology, BuildingTopology};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const REFERENCE_SCENARIO: &str = include_str!("../scenarios/reference.toml");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Topology(#[from] sb_core::topology::TopologyError),
}

/// Sinusoidal outdoor weather. Humidity moves against temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbientProfile {
    pub temperature_mean_c: f64,
    pub temperature_amplitude_c: f64,
    pub humidity_mean_pct: f64,
    pub humidity_amplitude_pct: f64,
    pub period_s: f64,
    #[serde(default)]
    pub phase_s: f64,
}

impl AmbientProfile {
    pub fn at(&self, t: f64, time_of_day_s: f64) -> AmbientConditions {
        let s = (TAU * (t + self.phase_s) / self.period_s).sin();
        AmbientConditions {
            outdoor_temperature_c: self.temperature_mean_c + self.temperature_amplitude_c * s,
            outdoor_humidity_pct: (self.humidity_mean_pct - self.humidity_amplitude_pct * s).clamp(0.0, 100.0),
            time_of_day_s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditions {
    pub temperature_c: f64,
    pub humidity_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub strategy: ControlStrategy,
    pub mpc: MpcConfig,
    pub baseline_hysteresis_c: f64,
    pub observer: ObserverGains,
    pub stale_after_ticks: u64,
    pub comfort: ComfortBounds,
    pub lighting: LightingPolicy,
    pub night_lock: Option<NightLockRule>,
    pub override_expiry_s: Option<f64>,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            strategy: ControlStrategy::Mpc,
            mpc: MpcConfig::default(),
            baseline_hysteresis_c: 0.5,
            observer: ObserverGains::default(),
            stale_after_ticks: 3,
            comfort: ComfortBounds::default(),
            lighting: LightingPolicy::default(),
            night_lock: None,
            override_expiry_s: None,
        }
    }
}

/// Open-loop excitation run before time zero to identify zone models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentificationSection {
    pub ticks: u64,
    pub heater_levels: [f64; 2],
    pub fan_levels: [f64; 2],
}

impl Default for IdentificationSection {
    fn default() -> Self {
        Self { ticks: 720, heater_levels: [0.2, 0.5], fan_levels: [0.0, 0.3] }
    }
}

/// A resident action, shared by scenario scripts and the HTTP API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Setpoint {
        #[serde(default)]
        floor: Option<u32>,
        #[serde(default)]
        zone: Option<String>,
        temperature_c: f64,
        humidity_pct: f64,
        #[serde(default)]
        duration_s: Option<f64>,
    },
    Light {
        device: String,
        #[serde(default)]
        level: Option<f64>,
        #[serde(default)]
        mode: Option<LightingMode>,
    },
    Door {
        device: String,
        position: ServoPosition,
    },
    Away {
        away: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedRequest {
    pub t: f64,
    #[serde(flatten)]
    pub request: Request,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fault {
    pub floor: u32,
    /// First tick the controller no longer runs.
    pub at_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub dt_s: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub start_time_of_day_s: f64,
    /// Topology file relative to the scenario file; the default building when absent.
    #[serde(default)]
    pub topology: Option<PathBuf>,
    pub initial: InitialConditions,
    pub ambient: AmbientProfile,
    pub schedule: Vec<SetpointEntry>,
    #[serde(default)]
    pub plant: PlantConfig,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub identification: IdentificationSection,
    #[serde(default)]
    pub occupancy: Vec<OccupancyEventFile>,
    #[serde(default)]
    pub requests: Vec<ScriptedRequest>,
    #[serde(default)]
    pub faults: Vec<Fault>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Scenario {
    pub fn reference() -> Self {
        Self::parse(REFERENCE_SCENARIO).expect("bundled reference scenario is valid")
    }

    pub fn parse(source: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(source).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let source =
            std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
        let mut s = Self::parse(&source)?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    pub fn ticks(&self) -> u64 {
        (self.duration_s / self.dt_s + 1e-9).floor() as u64
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.dt_s.is_finite() && self.dt_s > 0.0) {
            return bad(format!("dt_s {}", self.dt_s));
        }
        if !(self.duration_s.is_finite() && self.duration_s >= 0.0) {
            return bad(format!("duration_s {}", self.duration_s));
        }
        let a = &self.ambient;
        if !(a.period_s.is_finite() && a.period_s > 0.0) {
            return bad(format!("ambient period_s {}", a.period_s));
        }
        if self.schedule.is_empty() {
            return bad("schedule needs at least one entry".into());
        }
        if self.requests.iter().any(|r| !(r.t.is_finite() && r.t >= 0.0)) {
            return bad("request times must be finite and non-negative".into());
        }
        Ok(())
    }

    pub fn load_topology(&self) -> Result<BuildingTopology, ScenarioError> {
        match &self.topology {
            None => Ok(default_topology()),
            Some(p) => {
                let path = match &self.base_dir {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p.clone(),
                };
                let source =
                    std::fs::read_to_string(&path).map_err(|source| ScenarioError::Io { path: path.clone(), source })?;
                Ok(load_topology(&source)?)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_parses() {
        let s = Scenario::reference();
        assert_eq!(s.dt_s, 5.0);
        assert_eq!(s.ticks(), 720);
        let hot = s.ambient.at(s.ambient.period_s / 4.0 - s.ambient.phase_s, 0.0);
        assert!((hot.outdoor_temperature_c - 20.0).abs() < 1e-9);
    }

    #[test]
    fn request_shapes() {
        let r: ScriptedRequest = toml::from_str("t = 60\nkind = \"door\"\ndevice = \"front-door\"\nposition = \"open\"").unwrap();
        assert_eq!(r.request, Request::Door { device: "front-door".into(), position: ServoPosition::Open });
        assert!(toml::from_str::<ScriptedRequest>("t = 1\nkind = \"away\"").is_err());
    }
}
