use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PlantError, PlantState};
use crate::topology::{BuildingTopology, DeviceType};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccupancyEventKind {
    /// Occupants entering (positive) or leaving (negative).
    Delta(i32),
    /// A motion pulse without a change in head count.
    Motion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyEvent {
    pub time_s: f64,
    pub zone_id: String,
    pub kind: OccupancyEventKind,
}

/// File form of one event: `{ t = 60, zone = "kitchen", delta = 1 }` or
/// `{ t = 90, zone = "dining", motion = true }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancyEventFile {
    pub t: f64,
    pub zone: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OccupancyScript {
    events: Vec<OccupancyEvent>,
}

impl OccupancyScript {
    pub fn new(mut events: Vec<OccupancyEvent>) -> Self {
        events.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        Self { events }
    }

    pub fn from_file_events(events: &[OccupancyEventFile]) -> Result<Self, PlantError> {
        let mut out = Vec::with_capacity(events.len());
        for e in events {
            let kind = match (e.delta, e.motion) {
                (Some(d), None | Some(false)) => OccupancyEventKind::Delta(d),
                (None, Some(true)) => OccupancyEventKind::Motion,
                _ => {
                    return Err(PlantError::InvalidParams(format!(
                        "occupancy event at t={} in {} needs exactly one of delta or motion",
                        e.t, e.zone
                    )))
                }
            };
            if !(e.t.is_finite() && e.t >= 0.0) {
                return Err(PlantError::InvalidParams(format!("occupancy event time {}", e.t)));
            }
            out.push(OccupancyEvent { time_s: e.t, zone_id: e.zone.clone(), kind });
        }
        Ok(Self::new(out))
    }

    pub fn events(&self) -> &[OccupancyEvent] {
        &self.events
    }

    pub fn validate(&self, topology: &BuildingTopology) -> Result<(), PlantError> {
        match self.events.iter().find(|e| topology.zone(&e.zone_id).is_none()) {
            Some(e) => Err(PlantError::UnknownZone(e.zone_id.clone())),
            None => Ok(()),
        }
    }
}

/// Home/away occupants that wander between adjacent zones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StochasticOccupancy {
    pub occupants: usize,
    pub seed: u64,
    /// Per-second probability that an away occupant comes home.
    pub arrive_rate_per_s: f64,
    /// Per-second probability that a home occupant leaves.
    pub leave_rate_per_s: f64,
    /// Per-second probability that a home occupant moves to a neighboring zone.
    pub move_rate_per_s: f64,
}

impl Default for StochasticOccupancy {
    fn default() -> Self {
        Self {
            occupants: 2,
            seed: 0,
            arrive_rate_per_s: 1.0 / 1800.0,
            leave_rate_per_s: 1.0 / 7200.0,
            move_rate_per_s: 1.0 / 600.0,
        }
    }
}

#[derive(Debug, Clone)]
pub enum OccupancyModel {
    Script { script: OccupancyScript, cursor: usize },
    Stochastic { params: StochasticOccupancy, rng: ChaCha8Rng, positions: Vec<Option<usize>> },
}

impl OccupancyModel {
    pub fn scripted(script: OccupancyScript) -> Self {
        OccupancyModel::Script { script, cursor: 0 }
    }

    pub fn stochastic(params: StochasticOccupancy) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(params.seed);
        let positions = vec![None; params.occupants];
        OccupancyModel::Stochastic { params, rng, positions }
    }

    pub(super) fn advance(
        &mut self,
        topology: &BuildingTopology,
        state: &mut PlantState,
        dt: f64,
    ) -> Result<(), PlantError> {
        match self {
            OccupancyModel::Script { script, cursor } => {
                while let Some(event) = script.events.get(*cursor) {
                    if event.time_s > state.time_s {
                        break;
                    }
                    let zone = state
                        .zone_mut(&event.zone_id)
                        .ok_or_else(|| PlantError::UnknownZone(event.zone_id.clone()))?;
                    match event.kind {
                        OccupancyEventKind::Delta(d) => {
                            zone.occupants = (zone.occupants as i64 + d as i64).max(0) as u32;
                        }
                        OccupancyEventKind::Motion => zone.motion_pulse = true,
                    }
                    *cursor += 1;
                }
                Ok(())
            }
            OccupancyModel::Stochastic { params, rng, positions } => {
                let zone_ids: Vec<&str> = topology.zones().map(|z| z.id.as_str()).collect();
                let entry = topology
                    .devices()
                    .find(|d| d.device_type == DeviceType::ServoDoor && d.is_front_door())
                    .and_then(|d| topology.zone_position(&d.zone_id))
                    .unwrap_or(0);
                let p_arrive = (params.arrive_rate_per_s * dt).min(1.0);
                let p_leave = (params.leave_rate_per_s * dt).min(1.0);
                let p_move = (params.move_rate_per_s * dt).min(1.0);
                for pos in positions.iter_mut() {
                    let u: f64 = rng.random();
                    *pos = match *pos {
                        None if u < p_arrive => Some(entry),
                        None => None,
                        Some(_) if u < p_leave => None,
                        Some(z) if u < p_leave + p_move => {
                            let neighbors = &topology.zones().nth(z).expect("position in range").neighbors;
                            if neighbors.is_empty() {
                                Some(z)
                            } else {
                                let pick = rng.random_range(0..neighbors.len());
                                topology.zone_position(&neighbors[pick]).or(Some(z))
                            }
                        }
                        Some(z) => Some(z),
                    };
                }
                for (i, zone) in state.zones.iter_mut().enumerate() {
                    debug_assert_eq!(zone.zone_id, zone_ids[i]);
                    zone.occupants = positions.iter().filter(|p| **p == Some(i)).count() as u32;
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::plant::{AmbientConditions, Plant, PlantConfig};
    use crate::topology::default_topology;

    fn plant() -> Plant {
        Plant::new(Arc::new(default_topology()), PlantConfig::default()).unwrap()
    }

    fn run(plant: &Plant, model: &mut OccupancyModel, ticks: usize) -> Vec<Vec<u32>> {
        let ambient = AmbientConditions { outdoor_temperature_c: 15.0, outdoor_humidity_pct: 40.0, time_of_day_s: 0.0 };
        let mut s = plant.initial_state(20.0, 40.0);
        let mut trace = Vec::new();
        for _ in 0..ticks {
            s = plant.advance_occupancy(&s, model, 5.0).unwrap();
            trace.push(s.zones.iter().map(|z| z.occupants).collect());
            s = plant.step(&s, &ambient, 5.0).unwrap();
        }
        trace
    }

    #[test]
    fn scripted_entry_lands_on_first_tick_at_or_after_event() {
        let plant = plant();
        let script = OccupancyScript::new(vec![OccupancyEvent {
            time_s: 58.0,
            zone_id: "kitchen".into(),
            kind: OccupancyEventKind::Delta(1),
        }]);
        let kitchen = plant.topology().zone_position("kitchen").unwrap();
        let trace = run(&plant, &mut OccupancyModel::scripted(script), 20);
        // ticks at t = 0, 5, ..., 55 precede the event; t = 60 is tick 12
        assert_eq!(trace[11][kitchen], 0);
        assert_eq!(trace[12][kitchen], 1);
    }

    #[test]
    fn pir_fires_on_the_entry_tick_only() {
        let plant = plant();
        let script = OccupancyScript::new(vec![OccupancyEvent {
            time_s: 60.0,
            zone_id: "kitchen".into(),
            kind: OccupancyEventKind::Delta(1),
        }]);
        let mut model = OccupancyModel::scripted(script);
        let ambient = AmbientConditions { outdoor_temperature_c: 15.0, outdoor_humidity_pct: 40.0, time_of_day_s: 0.0 };
        let mut s = plant.initial_state(20.0, 40.0);
        let mut fired_at = Vec::new();
        for _ in 0..20 {
            s = plant.advance_occupancy(&s, &mut model, 5.0).unwrap();
            let pir = plant.read_sensors(&s, 1).into_iter().find(|r| r.device_id == "f1-kitchen-pir").unwrap();
            if pir.value == crate::plant::ReadingValue::Bool(true) {
                fired_at.push(s.time_s);
            }
            s = plant.step(&s, &ambient, 5.0).unwrap();
        }
        assert_eq!(fired_at, vec![60.0]);
    }

    #[test]
    fn empty_script_keeps_counts() {
        let plant = plant();
        let trace = run(&plant, &mut OccupancyModel::scripted(OccupancyScript::default()), 10);
        assert!(trace.iter().all(|t| t.iter().all(|&n| n == 0)));
    }

    #[test]
    fn unknown_zone_is_an_error() {
        let plant = plant();
        let script = OccupancyScript::new(vec![OccupancyEvent {
            time_s: 0.0,
            zone_id: "ballroom".into(),
            kind: OccupancyEventKind::Motion,
        }]);
        assert!(script.validate(plant.topology()).is_err());
        let s = plant.initial_state(20.0, 40.0);
        assert_eq!(
            plant.advance_occupancy(&s, &mut OccupancyModel::scripted(script), 5.0),
            Err(PlantError::UnknownZone("ballroom".into()))
        );
    }

    #[test]
    fn stochastic_is_seed_deterministic() {
        let plant = plant();
        let params = StochasticOccupancy { occupants: 3, seed: 11, arrive_rate_per_s: 0.01, ..Default::default() };
        let a = run(&plant, &mut OccupancyModel::stochastic(params.clone()), 400);
        let b = run(&plant, &mut OccupancyModel::stochastic(params.clone()), 400);
        assert_eq!(a, b);
        assert!(a.iter().any(|t| t.iter().sum::<u32>() > 0));
        assert!(a.iter().all(|t| t.iter().sum::<u32>() <= 3));
        let c = run(&plant, &mut OccupancyModel::stochastic(StochasticOccupancy { seed: 12, ..params }), 400);
        assert_ne!(a, c);
    }

    #[test]
    fn file_events_parse() {
        let ok = OccupancyScript::from_file_events(&[
            OccupancyEventFile { t: 5.0, zone: "kitchen".into(), delta: Some(2), motion: None },
            OccupancyEventFile { t: 1.0, zone: "dining".into(), delta: None, motion: Some(true) },
        ])
        .unwrap();
        assert_eq!(ok.events()[0].kind, OccupancyEventKind::Motion);
        assert!(OccupancyScript::from_file_events(&[OccupancyEventFile {
            t: 5.0,
            zone: "kitchen".into(),
            delta: None,
            motion: None
        }])
        .is_err());
    }
}
