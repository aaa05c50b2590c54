//! Open-loop excitation of the plant to identify each controlled zone.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sb_core::command::{Action, ActuatorCommand, CommandSource};
use sb_core::control::{identify_model, IdentError, IdentSample, ZoneModel};
use sb_core::plant::{Plant, PlantError};
use sb_core::topology::DeviceType;
use thiserror::Error;

use crate::scenario::Scenario;

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("zone {zone}: {source}")]
    Ident { zone: String, source: IdentError },
}

/// Drives every heater and fan with an independent random binary sequence
/// for `identification.ticks` ticks before the scenario starts, then fits
/// one model per climate-controlled zone from the recorded trajectory.
pub fn bootstrap_models(plant: &Plant, scenario: &Scenario) -> Result<BTreeMap<String, ZoneModel>, BootstrapError> {
    let cfg = &scenario.identification;
    let topo = plant.topology().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 0x1D_E4_7F_00);
    let mut state = plant.initial_state(scenario.initial.temperature_c, scenario.initial.humidity_pct);
    let controlled: Vec<_> = topo.zones().filter(|z| z.climate_controlled).collect();
    let mut history: BTreeMap<String, Vec<IdentSample>> = BTreeMap::new();
    let dt = scenario.dt_s;
    let start = -(cfg.ticks as f64) * dt;

    for k in 0..cfg.ticks {
        let t = start + k as f64 * dt;
        let ambient = scenario.ambient.at(t, scenario.start_time_of_day_s + t);
        for zone in &controlled {
            let u_h = cfg.heater_levels[rng.random_range(0..2)];
            let u_f = cfg.fan_levels[rng.random_range(0..2)];
            for (ty, u) in [(DeviceType::Heater, u_h), (DeviceType::Fan, u_f)] {
                for d in zone.devices_of(ty) {
                    let cmd = ActuatorCommand::new(d.device_id.clone(), Action::Duty(u), t, CommandSource::Mpc)
                        .expect("identification levels lie in [0, 1]");
                    state = plant.apply_actuation(&state, &cmd)?;
                }
            }
            let z = state.zone(&zone.id).expect("state aligned with topology");
            history.entry(zone.id.clone()).or_default().push(IdentSample {
                temperature_c: z.temperature_c,
                humidity_pct: z.humidity_pct,
                heater: u_h,
                fan: u_f,
                ambient_temperature_c: ambient.outdoor_temperature_c,
                ambient_humidity_pct: ambient.outdoor_humidity_pct,
            });
        }
        state = plant.step(&state, &ambient, dt)?;
    }

    history
        .into_iter()
        .map(|(zone, samples)| match identify_model(&samples) {
            Ok(m) => Ok((zone, m)),
            Err(source) => Err(BootstrapError::Ident { zone, source }),
        })
        .collect()
}
