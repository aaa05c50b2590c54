//! Run reports, per-tick trajectory and plot series.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use sb_core::control::ControlStrategy;
use serde::{Deserialize, Serialize};

use crate::bus::Transport;

/// One zone at one tick, before the plant advances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub time_s: f64,
    pub floor: u32,
    pub zone: String,
    pub temperature_c: f64,
    pub humidity_pct: f64,
    pub measured_temperature_c: Option<f64>,
    pub measured_humidity_pct: Option<f64>,
    pub t_ref: Option<f64>,
    pub h_ref: Option<f64>,
    pub heater: f64,
    pub fan: f64,
    pub occupants: u32,
}

/// Mean absolute errors in percent of setpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneErrors {
    pub zone: String,
    pub floor: u32,
    pub samples: usize,
    pub temperature_pct: f64,
    pub humidity_pct: f64,
    /// Same errors computed from the noisy sensor readings.
    pub measured_temperature_pct: f64,
    pub measured_humidity_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorErrors {
    pub floor: u32,
    pub temperature_pct: f64,
    pub humidity_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergySummary {
    /// Heaters and fans.
    pub actuator_wh: f64,
    pub lighting_wh: f64,
    pub total_wh: f64,
    pub per_floor_wh: BTreeMap<u32, f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TelemetrySummary {
    pub records: usize,
    pub duplicates: usize,
    pub rejected: usize,
    pub archive_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KilledController {
    pub floor: u32,
    pub at_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub strategy: ControlStrategy,
    pub transport: Transport,
    pub dt_s: f64,
    pub ticks: u64,
    pub zones: Vec<ZoneErrors>,
    pub floors: Vec<FloorErrors>,
    /// Mean over every controlled zone.
    pub building: FloorErrors,
    pub energy: EnergySummary,
    pub telemetry: TelemetrySummary,
    pub killed: Vec<KilledController>,
}

impl RunReport {
    pub fn floor(&self, floor: u32) -> Option<&FloorErrors> {
        self.floors.iter().find(|f| f.floor == floor)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn pct(value: f64, reference: f64) -> f64 {
    100.0 * (value - reference).abs() / reference.abs()
}

/// Per-zone errors over every row that has a setpoint, in first-seen zone order.
pub fn zone_errors(rows: &[TrajectoryRow]) -> Vec<ZoneErrors> {
    let mut order: Vec<(String, u32)> = Vec::new();
    let mut by_zone: BTreeMap<&str, Vec<&TrajectoryRow>> = BTreeMap::new();
    for r in rows {
        if r.t_ref.is_none() {
            continue;
        }
        if !by_zone.contains_key(r.zone.as_str()) {
            order.push((r.zone.clone(), r.floor));
        }
        by_zone.entry(&r.zone).or_default().push(r);
    }
    order
        .into_iter()
        .map(|(zone, floor)| {
            let rs = &by_zone[zone.as_str()];
            let t = |r: &&TrajectoryRow| r.t_ref.expect("filtered");
            let h = |r: &&TrajectoryRow| r.h_ref.expect("set with t_ref");
            ZoneErrors {
                samples: rs.len(),
                temperature_pct: mean(rs.iter().map(|r| pct(r.temperature_c, t(r)))),
                humidity_pct: mean(rs.iter().map(|r| pct(r.humidity_pct, h(r)))),
                measured_temperature_pct: mean(
                    rs.iter().filter_map(|r| r.measured_temperature_c.map(|m| pct(m, t(r)))),
                ),
                measured_humidity_pct: mean(rs.iter().filter_map(|r| r.measured_humidity_pct.map(|m| pct(m, h(r))))),
                zone,
                floor,
            }
        })
        .collect()
}

/// Sample-weighted floor means.
pub fn floor_errors(zones: &[ZoneErrors]) -> Vec<FloorErrors> {
    let mut floors: BTreeMap<u32, Vec<&ZoneErrors>> = BTreeMap::new();
    for z in zones {
        floors.entry(z.floor).or_default().push(z);
    }
    floors.into_iter().map(|(floor, zs)| weighted(floor, &zs)).collect()
}

pub fn building_errors(zones: &[ZoneErrors]) -> FloorErrors {
    weighted(0, &zones.iter().collect::<Vec<_>>())
}

fn weighted(floor: u32, zs: &[&ZoneErrors]) -> FloorErrors {
    let n: usize = zs.iter().map(|z| z.samples).sum();
    if n == 0 {
        return FloorErrors { floor, temperature_pct: 0.0, humidity_pct: 0.0 };
    }
    let w = |f: fn(&ZoneErrors) -> f64| zs.iter().map(|z| f(z) * z.samples as f64).sum::<f64>() / n as f64;
    FloorErrors { floor, temperature_pct: w(|z| z.temperature_pct), humidity_pct: w(|z| z.humidity_pct) }
}

pub fn write_trajectory(rows: &[TrajectoryRow], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory(input: impl Read) -> csv::Result<Vec<TrajectoryRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// The three first-floor figures: measured vs desired temperature,
/// measured vs desired humidity, and heater/fan inputs. One column group
/// per controlled zone of `floor`.
pub struct PlotSeries {
    pub temperature: String,
    pub humidity: String,
    pub actuators: String,
}

fn fmt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_default()
}

pub fn plot_series(rows: &[TrajectoryRow], floor: u32) -> PlotSeries {
    let mut zones: Vec<&str> = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    let mut cells: BTreeMap<(u64, &str), &TrajectoryRow> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.floor == floor && r.t_ref.is_some()) {
        if !zones.contains(&r.zone.as_str()) {
            zones.push(&r.zone);
        }
        if times.last() != Some(&r.time_s) {
            times.push(r.time_s);
        }
        cells.insert((r.time_s.to_bits(), r.zone.as_str()), r);
    }
    let table = |cols: &[(&str, fn(&TrajectoryRow) -> Option<f64>)]| {
        let mut s = String::from("time_s");
        for z in &zones {
            for (name, _) in cols {
                s.push_str(&format!(",{z}_{name}"));
            }
        }
        s.push('\n');
        for t in &times {
            s.push_str(&format!("{t}"));
            for z in &zones {
                let row = cells.get(&(t.to_bits(), *z));
                for (_, get) in cols {
                    s.push(',');
                    s.push_str(&fmt(row.and_then(|r| get(r))));
                }
            }
            s.push('\n');
        }
        s
    };
    PlotSeries {
        temperature: table(&[("measured_c", |r| r.measured_temperature_c), ("desired_c", |r| r.t_ref)]),
        humidity: table(&[("measured_pct", |r| r.measured_humidity_pct), ("desired_pct", |r| r.h_ref)]),
        actuators: table(&[("heater", |r| Some(r.heater)), ("fan", |r| Some(r.fan))]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub controller: ControlStrategy,
    pub actuator_energy_wh: f64,
    pub total_energy_wh: f64,
    pub temperature_error_pct: f64,
    pub humidity_error_pct: f64,
    pub floor1_temperature_error_pct: f64,
    pub floor1_humidity_error_pct: f64,
}

impl ComparisonRow {
    pub fn from_report(r: &RunReport) -> Self {
        let f1 = r.floor(1).cloned().unwrap_or(FloorErrors { floor: 1, temperature_pct: 0.0, humidity_pct: 0.0 });
        Self {
            controller: r.strategy,
            actuator_energy_wh: r.energy.actuator_wh,
            total_energy_wh: r.energy.total_wh,
            temperature_error_pct: r.building.temperature_pct,
            humidity_error_pct: r.building.humidity_pct,
            floor1_temperature_error_pct: f1.temperature_pct,
            floor1_humidity_error_pct: f1.humidity_pct,
        }
    }
}

pub fn write_comparison(rows: &[ComparisonRow], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, zone: &str, temp: f64, t_ref: Option<f64>) -> TrajectoryRow {
        TrajectoryRow {
            time_s: t,
            floor: 1,
            zone: zone.into(),
            temperature_c: temp,
            humidity_pct: 45.0,
            measured_temperature_c: Some(temp),
            measured_humidity_pct: None,
            t_ref,
            h_ref: t_ref.map(|_| 50.0),
            heater: 0.5,
            fan: 0.0,
            occupants: 0,
        }
    }

    #[test]
    fn errors_by_hand() {
        let rows = vec![
            row(0.0, "a", 20.0, Some(20.0)),
            row(0.0, "b", 0.0, None),
            row(5.0, "a", 21.0, Some(20.0)),
            row(10.0, "a", 18.0, Some(20.0)),
        ];
        let z = zone_errors(&rows);
        assert_eq!(z.len(), 1);
        // (0 + 5 + 10) / 3
        assert!((z[0].temperature_pct - 5.0).abs() < 1e-12);
        assert!((z[0].humidity_pct - 10.0).abs() < 1e-12);
        assert_eq!(z[0].measured_humidity_pct, 0.0);
        assert_eq!(floor_errors(&z)[0].temperature_pct, z[0].temperature_pct);
    }

    #[test]
    fn trajectory_csv_round_trip() {
        let rows = vec![row(0.0, "a", 20.5, Some(22.0)), row(5.0, "garage", 19.0, None)];
        let mut buf = Vec::new();
        write_trajectory(&rows, &mut buf).unwrap();
        assert_eq!(read_trajectory(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn plot_layout() {
        let rows = vec![row(0.0, "a", 20.0, Some(22.0)), row(0.0, "b", 21.0, Some(22.0)), row(5.0, "a", 20.5, Some(22.0))];
        let p = plot_series(&rows, 1);
        let lines: Vec<&str> = p.temperature.lines().collect();
        assert_eq!(lines[0], "time_s,a_measured_c,a_desired_c,b_measured_c,b_desired_c");
        assert_eq!(lines[1], "0,20.0000,22.0000,21.0000,22.0000");
        assert_eq!(lines[2], "5,20.5000,22.0000,,");
        assert_eq!(p.actuators.lines().next().unwrap(), "time_s,a_heater,a_fan,b_heater,b_fan");
    }
}
