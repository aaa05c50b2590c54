use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SECONDS_PER_DAY: f64 = 86_400.0;
/// Lifetime of a manual override when the request does not give one.
pub const DEFAULT_OVERRIDE_EXPIRY_S: f64 = 2.0 * 3600.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("schedule has no entries")]
    Empty,
    #[error("entry times must be strictly increasing within [0, 86400): {0} s")]
    Ordering(f64),
    #[error("temperature setpoint {0} °C outside comfort bounds")]
    Temperature(f64),
    #[error("humidity setpoint {0} % outside comfort bounds")]
    Humidity(f64),
    #[error("override expiry must be a positive duration, got {0} s")]
    Expiry(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComfortBounds {
    pub temperature_c: [f64; 2],
    pub humidity_pct: [f64; 2],
}

impl Default for ComfortBounds {
    fn default() -> Self {
        Self { temperature_c: [10.0, 30.0], humidity_pct: [20.0, 80.0] }
    }
}

impl ComfortBounds {
    pub fn check(&self, temperature_c: f64, humidity_pct: f64) -> Result<(), ScheduleError> {
        let [tl, th] = self.temperature_c;
        let [hl, hh] = self.humidity_pct;
        if !(tl..=th).contains(&temperature_c) {
            return Err(ScheduleError::Temperature(temperature_c));
        }
        if !(hl..=hh).contains(&humidity_pct) {
            return Err(ScheduleError::Humidity(humidity_pct));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetpointEntry {
    pub time_of_day_s: f64,
    pub temperature_c: f64,
    pub humidity_pct: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManualOverride {
    pub temperature_c: f64,
    pub humidity_pct: f64,
    /// Simulation time after which the override no longer applies.
    pub expires_at_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetpointSchedule {
    entries: Vec<SetpointEntry>,
    manual: Option<ManualOverride>,
}

impl SetpointSchedule {
    pub fn new(entries: Vec<SetpointEntry>, bounds: &ComfortBounds) -> Result<Self, ScheduleError> {
        if entries.is_empty() {
            return Err(ScheduleError::Empty);
        }
        let mut previous = f64::NEG_INFINITY;
        for e in &entries {
            if !(e.time_of_day_s >= 0.0 && e.time_of_day_s < SECONDS_PER_DAY && e.time_of_day_s > previous) {
                return Err(ScheduleError::Ordering(e.time_of_day_s));
            }
            previous = e.time_of_day_s;
            bounds.check(e.temperature_c, e.humidity_pct)?;
        }
        Ok(Self { entries, manual: None })
    }

    /// Single all-day setpoint.
    pub fn constant(temperature_c: f64, humidity_pct: f64, bounds: &ComfortBounds) -> Result<Self, ScheduleError> {
        Self::new(vec![SetpointEntry { time_of_day_s: 0.0, temperature_c, humidity_pct }], bounds)
    }

    pub fn entries(&self) -> &[SetpointEntry] {
        &self.entries
    }

    pub fn manual_override(&self) -> Option<&ManualOverride> {
        self.manual.as_ref()
    }

    /// Installs a manual setpoint valid from `now_s` for `duration_s`.
    pub fn set_override(
        &mut self,
        temperature_c: f64,
        humidity_pct: f64,
        now_s: f64,
        duration_s: f64,
        bounds: &ComfortBounds,
    ) -> Result<ManualOverride, ScheduleError> {
        bounds.check(temperature_c, humidity_pct)?;
        if !(duration_s.is_finite() && duration_s > 0.0) {
            return Err(ScheduleError::Expiry(duration_s));
        }
        let manual = ManualOverride { temperature_c, humidity_pct, expires_at_s: now_s + duration_s };
        self.manual = Some(manual);
        Ok(manual)
    }

    pub fn clear_override(&mut self) {
        self.manual = None;
    }
}

pub fn time_of_day(seconds: f64) -> f64 {
    seconds.rem_euclid(SECONDS_PER_DAY)
}

/// Active setpoint at simulation time `now_s` and wall-clock `time_of_day_s`.
pub fn resolve_setpoint(schedule: &SetpointSchedule, now_s: f64, time_of_day_s: f64) -> (f64, f64) {
    if let Some(m) = schedule.manual {
        if now_s < m.expires_at_s {
            return (m.temperature_c, m.humidity_pct);
        }
    }
    let tod = time_of_day(time_of_day_s);
    let entry = schedule
        .entries
        .iter()
        .rev()
        .find(|e| e.time_of_day_s <= tod)
        .or(schedule.entries.last())
        .expect("schedule is never empty");
    (entry.temperature_c, entry.humidity_pct)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hours(h: f64) -> f64 {
        h * 3600.0
    }

    fn day_night() -> SetpointSchedule {
        SetpointSchedule::new(
            vec![
                SetpointEntry { time_of_day_s: hours(6.0), temperature_c: 22.0, humidity_pct: 45.0 },
                SetpointEntry { time_of_day_s: hours(22.0), temperature_c: 18.0, humidity_pct: 50.0 },
            ],
            &ComfortBounds::default(),
        )
        .unwrap()
    }

    #[test]
    fn step_semantics_and_wrap() {
        let s = day_night();
        assert_eq!(resolve_setpoint(&s, 0.0, hours(23.0)).0, 18.0);
        assert_eq!(resolve_setpoint(&s, 0.0, hours(5.0)).0, 18.0);
        assert_eq!(resolve_setpoint(&s, 0.0, hours(6.0)).0, 22.0);
        assert_eq!(resolve_setpoint(&s, 0.0, hours(21.99)).0, 22.0);
        assert_eq!(resolve_setpoint(&s, 0.0, hours(30.0)).0, 22.0);
    }

    #[test]
    fn override_precedence_and_expiry() {
        let mut s = day_night();
        s.set_override(25.0, 40.0, 100.0, DEFAULT_OVERRIDE_EXPIRY_S, &ComfortBounds::default()).unwrap();
        assert_eq!(resolve_setpoint(&s, 100.0, hours(23.0)), (25.0, 40.0));
        assert_eq!(resolve_setpoint(&s, 100.0 + hours(2.0) - 1.0, hours(3.0)), (25.0, 40.0));
        assert_eq!(resolve_setpoint(&s, 100.0 + hours(2.0), hours(23.0)), (18.0, 50.0));
    }

    #[test]
    fn invalid_schedules() {
        let b = ComfortBounds::default();
        assert_eq!(SetpointSchedule::new(vec![], &b), Err(ScheduleError::Empty));
        let e = |t: f64, c: f64| SetpointEntry { time_of_day_s: t, temperature_c: c, humidity_pct: 45.0 };
        assert!(matches!(SetpointSchedule::new(vec![e(10.0, 20.0), e(10.0, 21.0)], &b), Err(ScheduleError::Ordering(_))));
        assert!(matches!(SetpointSchedule::new(vec![e(SECONDS_PER_DAY, 20.0)], &b), Err(ScheduleError::Ordering(_))));
        assert_eq!(SetpointSchedule::new(vec![e(0.0, 40.0)], &b), Err(ScheduleError::Temperature(40.0)));
        let mut s = day_night();
        assert!(s.set_override(45.0, 40.0, 0.0, 10.0, &b).is_err());
        assert!(s.set_override(21.0, 40.0, 0.0, 0.0, &b).is_err());
        assert!(s.manual_override().is_none());
    }
}
