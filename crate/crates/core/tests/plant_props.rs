use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use sb_core::command::{Action, ActuatorCommand, CommandSource};
use sb_core::plant::{AmbientConditions, Plant, PlantConfig, PlantState};
use sb_core::topology::{default_topology, load_topology, DeviceType};

fn default_plant() -> Plant {
    Plant::new(Arc::new(default_topology()), PlantConfig::default()).unwrap()
}

const ISOLATED: &str = r#"
name = "isolated"
[[floors]]
index = 1
[[floors.zones]]
id = "a"
kind = "kitchen"
devices = [
  { device_id = "a-heater", device_type = "heater" },
  { device_id = "a-fan", device_type = "fan" },
]
[[floors.zones]]
id = "b"
kind = "bedroom"
devices = [
  { device_id = "b-heater", device_type = "heater" },
  { device_id = "b-fan", device_type = "fan" },
]
"#;

fn ambient(t: f64, h: f64) -> AmbientConditions {
    AmbientConditions { outdoor_temperature_c: t, outdoor_humidity_pct: h, time_of_day_s: 0.0 }
}

fn set_duty(plant: &Plant, state: PlantState, id: &str, v: f64) -> PlantState {
    let action = match plant.topology().device(id).unwrap().device_type {
        DeviceType::LedStrip => Action::Level(v),
        _ => Action::Duty(v),
    };
    plant.apply_actuation(&state, &ActuatorCommand::new(id, action, 0.0, CommandSource::Mpc).unwrap()).unwrap()
}

fn actuators(plant: &Plant) -> Vec<String> {
    plant
        .topology()
        .devices()
        .filter(|d| matches!(d.device_type, DeviceType::Heater | DeviceType::Fan | DeviceType::LedStrip))
        .map(|d| d.device_id.clone())
        .collect()
}

/// Steady state of the temperature equations for fixed inputs, from a direct linear solve.
fn analytic_steady_state(plant: &Plant, state: &PlantState, t_amb: f64) -> Vec<f64> {
    let topo = plant.topology();
    let zones: Vec<_> = topo.zones().collect();
    let n = zones.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for (i, z) in zones.iter().enumerate() {
        let p = plant.zone_params(&z.id).unwrap();
        let heat: f64 = z.devices_of(DeviceType::Heater).map(|d| state.duty(&d.device_id).unwrap()).sum();
        let fan: f64 = z.devices_of(DeviceType::Fan).map(|d| state.duty(&d.device_id).unwrap()).sum();
        let g_env = 1.0 / p.envelope_resistance_k_per_w + p.fan_exchange_gain_w_per_k * fan;
        a[(i, i)] += g_env;
        b[i] += g_env * t_amb + p.heater_max_power_w * heat + p.occupant_heat_gain_w * state.zones[i].occupants as f64;
        for (neighbor, r) in plant.neighbor_resistances(&z.id) {
            let j = topo.zone_position(&neighbor).unwrap();
            a[(i, i)] += 1.0 / r;
            a[(i, j)] -= 1.0 / r;
        }
    }
    a.lu().solve(&b).unwrap().iter().copied().collect()
}

#[test]
fn long_run_matches_analytic_equilibrium() {
    let plant = default_plant();
    let mut s = plant.initial_state(20.0, 50.0);
    for (k, id) in actuators(&plant).iter().enumerate() {
        s = set_duty(&plant, s, id, ((k * 37) % 10) as f64 / 10.0);
    }
    s.zones[0].occupants = 2;
    s.zones[3].occupants = 1;
    let expected = analytic_steady_state(&plant, &s, 12.0);
    let amb = ambient(12.0, 40.0);
    let mut steps = 0;
    loop {
        let next = plant.step(&s, &amb, 5.0).unwrap();
        let change = next.zones.iter().zip(&s.zones).map(|(a, b)| (a.temperature_c - b.temperature_c).abs()).fold(0.0, f64::max);
        s = next;
        steps += 1;
        if change < 1e-13 || steps > 1_000_000 {
            break;
        }
    }
    for (z, want) in s.zones.iter().zip(&expected) {
        assert!((z.temperature_c - want).abs() < 1e-6, "{}: {} vs {want}", z.zone_id, z.temperature_c);
    }
}

#[test]
fn bit_identical_trajectories() {
    let plant = default_plant();
    let run = || {
        let mut s = plant.initial_state(18.0, 55.0);
        s = set_duty(&plant, s, "f1-kitchen-heater", 0.7);
        let mut trace = Vec::new();
        for k in 0..500 {
            s = plant.step(&s, &ambient(15.0 + (k as f64 / 50.0).sin(), 40.0), 5.0).unwrap();
            trace.extend(s.zones.iter().map(|z| (z.temperature_c.to_bits(), z.humidity_pct.to_bits())));
        }
        trace
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn humidity_stays_in_bounds(
        h0 in 0.0..100.0f64,
        h_amb in 0.0..100.0f64,
        actions in prop::collection::vec((0.0..=1.0f64, 0.0..=1.0f64, 0u32..30), 1..150),
    ) {
        let plant = default_plant();
        let mut s = plant.initial_state(20.0, h0);
        for (u_h, u_f, occupants) in actions {
            s = set_duty(&plant, s, "f2-living-heater", u_h);
            s = set_duty(&plant, s, "f2-living-fan", u_f);
            s.zones[3].occupants = occupants;
            s = plant.step(&s, &ambient(10.0, h_amb), 5.0).unwrap();
            for z in &s.zones {
                prop_assert!((0.0..=100.0).contains(&z.humidity_pct));
            }
        }
    }

    #[test]
    fn isolated_zones_relax_monotonically(t_a in -10.0..40.0f64, t_b in -10.0..40.0f64, t_amb in -5.0..35.0f64) {
        let plant = Plant::new(Arc::new(load_topology(ISOLATED).unwrap()), PlantConfig::default()).unwrap();
        let mut s = plant.initial_state(0.0, 50.0);
        s.zones[0].temperature_c = t_a;
        s.zones[1].temperature_c = t_b;
        let amb = ambient(t_amb, 50.0);
        for _ in 0..300 {
            let next = plant.step(&s, &amb, 5.0).unwrap();
            for (a, b) in s.zones.iter().zip(&next.zones) {
                prop_assert!((b.temperature_c - t_amb).abs() <= (a.temperature_c - t_amb).abs());
                // never overshoots the ambient temperature
                prop_assert!((b.temperature_c - t_amb) * (a.temperature_c - t_amb) >= 0.0);
            }
            s = next;
        }
    }

    #[test]
    fn coupled_building_relaxes_in_max_norm(temps in prop::collection::vec(-10.0..40.0f64, 8), t_amb in -5.0..35.0f64) {
        let plant = default_plant();
        let mut s = plant.initial_state(0.0, 50.0);
        for (z, t) in s.zones.iter_mut().zip(&temps) {
            z.temperature_c = *t;
        }
        let amb = ambient(t_amb, 50.0);
        let dev = |s: &PlantState| s.zones.iter().map(|z| (z.temperature_c - t_amb).abs()).fold(0.0, f64::max);
        for _ in 0..300 {
            let next = plant.step(&s, &amb, 5.0).unwrap();
            prop_assert!(dev(&next) <= dev(&s) + 1e-12);
            s = next;
        }
    }

    #[test]
    fn power_is_monotone_in_every_duty(duties in prop::collection::vec(0.0..=1.0f64, 32), which in 0usize..32, bump in 0.0..=1.0f64) {
        let plant = default_plant();
        let ids = actuators(&plant);
        let mut s = plant.initial_state(20.0, 50.0);
        for (id, d) in ids.iter().zip(&duties) {
            s = set_duty(&plant, s, id, *d);
        }
        let id = &ids[which % ids.len()];
        let current = s.duty(id).unwrap();
        let raised = set_duty(&plant, s.clone(), id, (current + bump).min(1.0));
        prop_assert!(plant.electrical_power(&raised).total_w >= plant.electrical_power(&s).total_w);
    }
}
