use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::schedule::SECONDS_PER_DAY;

pub const DEFAULT_HOLD_S: f64 = 120.0;
/// Events of the same kind closer than this (in time of day) are merged when learning.
pub const DEFAULT_CLUSTER_WINDOW_S: f64 = 30.0 * 60.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LightingError {
    #[error("light level {0} outside [0, 1]")]
    Level(f64),
    #[error("learned events for zone {0} are not time-sorted")]
    Unsorted(String),
    #[error("{0} must be finite and non-negative")]
    Negative(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightingMode {
    #[default]
    Presence,
    Manual,
    AwayMimic,
}

impl LightingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LightingMode::Presence => "presence",
            LightingMode::Manual => "manual",
            LightingMode::AwayMimic => "away_mimic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnedEvent {
    pub time_of_day_s: f64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LightingPolicy {
    pub mode: LightingMode,
    pub learned_events: BTreeMap<String, Vec<LearnedEvent>>,
    pub mimic_jitter_s: f64,
    pub on_level: f64,
    pub hold_s: f64,
}

impl Default for LightingPolicy {
    fn default() -> Self {
        Self {
            mode: LightingMode::Presence,
            learned_events: BTreeMap::new(),
            mimic_jitter_s: 600.0,
            on_level: 1.0,
            hold_s: DEFAULT_HOLD_S,
        }
    }
}

impl LightingPolicy {
    pub fn validate(&self) -> Result<(), LightingError> {
        if !(0.0..=1.0).contains(&self.on_level) {
            return Err(LightingError::Level(self.on_level));
        }
        if !(self.mimic_jitter_s.is_finite() && self.mimic_jitter_s >= 0.0) {
            return Err(LightingError::Negative("mimic_jitter_s"));
        }
        if !(self.hold_s.is_finite() && self.hold_s >= 0.0) {
            return Err(LightingError::Negative("hold_s"));
        }
        for (zone, events) in &self.learned_events {
            if let Some(e) = events.iter().find(|e| !(0.0..=1.0).contains(&e.level)) {
                return Err(LightingError::Level(e.level));
            }
            if events.windows(2).any(|w| w[0].time_of_day_s > w[1].time_of_day_s) {
                return Err(LightingError::Unsorted(zone.clone()));
            }
        }
        Ok(())
    }
}

/// What the controller remembers about one zone's lights between ticks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ZoneLighting {
    pub level: f64,
    pub last_motion_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LightingContext<'a> {
    pub zone_id: &'a str,
    pub occupied: bool,
    pub now_s: f64,
    pub time_of_day_s: f64,
    /// Days elapsed since the epoch of the time-of-day clock.
    pub day: u64,
    pub dt_s: f64,
    pub away: bool,
    pub seed: u64,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Jitter applied to learned event `index` of `zone` on `day`.
pub fn mimic_jitter(seed: u64, day: u64, zone: &str, index: usize, jitter_s: f64) -> f64 {
    if jitter_s == 0.0 {
        return 0.0;
    }
    let mut h = splitmix(seed);
    for b in zone.bytes() {
        h = splitmix(h ^ b as u64);
    }
    h = splitmix(h ^ day);
    h = splitmix(h ^ index as u64);
    ChaCha8Rng::seed_from_u64(h).random_range(-jitter_s..=jitter_s)
}

fn crossed(event_s: f64, tod: f64, dt: f64) -> bool {
    // was `event_s` passed in the interval (tod - dt, tod], modulo one day?
    let since = (tod - event_s).rem_euclid(SECONDS_PER_DAY);
    since < dt
}

/// Decides the light level for one zone this tick; `None` leaves the lights alone.
/// While residents are away the learned routine is replayed whatever `mode` says.
pub fn lighting_decision(
    policy: &LightingPolicy,
    mode: LightingMode,
    state: &mut ZoneLighting,
    ctx: &LightingContext<'_>,
) -> Option<f64> {
    let mode = if ctx.away { LightingMode::AwayMimic } else { mode };
    let decision = match mode {
        LightingMode::Manual => None,
        LightingMode::Presence => {
            if ctx.occupied {
                state.last_motion_s = Some(ctx.now_s);
                (state.level != policy.on_level).then_some(policy.on_level)
            } else {
                match state.last_motion_s {
                    Some(t) if state.level > 0.0 && ctx.now_s - t >= policy.hold_s => Some(0.0),
                    _ => None,
                }
            }
        }
        LightingMode::AwayMimic => {
            let events = policy.learned_events.get(ctx.zone_id).map(Vec::as_slice).unwrap_or(&[]);
            let mut fired = None;
            for (i, e) in events.iter().enumerate() {
                let shifted = e.time_of_day_s + mimic_jitter(ctx.seed, ctx.day, ctx.zone_id, i, policy.mimic_jitter_s);
                if crossed(shifted, ctx.time_of_day_s, ctx.dt_s) {
                    fired = Some(e.level);
                }
            }
            fired
        }
    };
    if let Some(level) = decision {
        state.level = level;
    }
    decision
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserLightEvent {
    pub zone_id: String,
    pub time_of_day_s: f64,
    pub level: f64,
}

fn cluster(mut times: Vec<(f64, f64)>, window_s: f64) -> Vec<LearnedEvent> {
    times.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::new();
    let mut group: Vec<(f64, f64)> = Vec::new();
    let flush = |group: &mut Vec<(f64, f64)>, out: &mut Vec<LearnedEvent>| {
        if group.is_empty() {
            return;
        }
        let n = group.len() as f64;
        out.push(LearnedEvent {
            time_of_day_s: group.iter().map(|g| g.0).sum::<f64>() / n,
            level: group.iter().map(|g| g.1).sum::<f64>() / n,
        });
        group.clear();
    };
    for t in times {
        if let Some(first) = group.first() {
            if t.0 - first.0 > window_s {
                flush(&mut group, &mut out);
            }
        }
        group.push(t);
    }
    flush(&mut group, &mut out);
    out
}

/// Clusters user on/off events per zone by time of day.
pub fn learn_lighting_routine(log: &[UserLightEvent], window_s: f64) -> BTreeMap<String, Vec<LearnedEvent>> {
    let mut per_zone: BTreeMap<String, (Vec<(f64, f64)>, Vec<(f64, f64)>)> = BTreeMap::new();
    for e in log {
        let entry = per_zone.entry(e.zone_id.clone()).or_default();
        let sample = (e.time_of_day_s.rem_euclid(SECONDS_PER_DAY), e.level);
        if e.level > 0.0 {
            entry.0.push(sample);
        } else {
            entry.1.push(sample);
        }
    }
    per_zone
        .into_iter()
        .map(|(zone, (on, off))| {
            let mut events = cluster(on, window_s);
            events.extend(cluster(off, window_s));
            events.sort_by(|a, b| a.time_of_day_s.total_cmp(&b.time_of_day_s));
            (zone, events)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(zone: &str, occupied: bool, now: f64) -> LightingContext<'_> {
        LightingContext { zone_id: zone, occupied, now_s: now, time_of_day_s: now, day: 0, dt_s: 5.0, away: false, seed: 7 }
    }

    #[test]
    fn presence_on_then_off_after_hold() {
        let policy = LightingPolicy::default();
        let mut z = ZoneLighting::default();
        assert_eq!(lighting_decision(&policy, LightingMode::Presence, &mut z, &ctx("k", false, 0.0)), None);
        assert_eq!(lighting_decision(&policy, LightingMode::Presence, &mut z, &ctx("k", true, 5.0)), Some(1.0));
        assert_eq!(lighting_decision(&policy, LightingMode::Presence, &mut z, &ctx("k", true, 10.0)), None);
        assert_eq!(lighting_decision(&policy, LightingMode::Presence, &mut z, &ctx("k", false, 125.0)), None);
        assert_eq!(lighting_decision(&policy, LightingMode::Presence, &mut z, &ctx("k", false, 130.0)), Some(0.0));
        assert_eq!(lighting_decision(&policy, LightingMode::Presence, &mut z, &ctx("k", false, 135.0)), None);
    }

    #[test]
    fn manual_never_commands() {
        let policy = LightingPolicy::default();
        let mut z = ZoneLighting::default();
        assert_eq!(lighting_decision(&policy, LightingMode::Manual, &mut z, &ctx("k", true, 5.0)), None);
    }

    #[test]
    fn away_mimic_replays() {
        let mut policy = LightingPolicy { mimic_jitter_s: 0.0, ..Default::default() };
        let mut z = ZoneLighting::default();
        for t in (0..86_400).step_by(5) {
            assert_eq!(lighting_decision(&policy, LightingMode::AwayMimic, &mut z, &ctx("k", false, t as f64)), None);
        }
        policy.learned_events.insert("k".into(), vec![LearnedEvent { time_of_day_s: 72_000.0, level: 1.0 }]);
        let fired: Vec<u32> = (0..86_400u32)
            .step_by(5)
            .filter(|&t| lighting_decision(&policy, LightingMode::AwayMimic, &mut z, &ctx("k", false, t as f64)).is_some())
            .collect();
        assert_eq!(fired, vec![72_000]);
    }

    #[test]
    fn jitter_is_bounded_and_seeded() {
        for day in 0..50 {
            let j = mimic_jitter(3, day, "kitchen", 0, 600.0);
            assert!(j.abs() <= 600.0);
            assert_eq!(j, mimic_jitter(3, day, "kitchen", 0, 600.0));
        }
        assert_ne!(mimic_jitter(3, 0, "kitchen", 0, 600.0), mimic_jitter(4, 0, "kitchen", 0, 600.0));
    }

    #[test]
    fn learning() {
        assert!(learn_lighting_routine(&[], DEFAULT_CLUSTER_WINDOW_S).is_empty());
        let one = [UserLightEvent { zone_id: "k".into(), time_of_day_s: 1234.0, level: 0.8 }];
        let learned = learn_lighting_routine(&one, DEFAULT_CLUSTER_WINDOW_S);
        assert_eq!(learned["k"], vec![LearnedEvent { time_of_day_s: 1234.0, level: 0.8 }]);
    }

    #[test]
    fn policy_validation() {
        let mut p = LightingPolicy::default();
        assert!(p.validate().is_ok());
        p.learned_events.insert(
            "k".into(),
            vec![LearnedEvent { time_of_day_s: 10.0, level: 1.0 }, LearnedEvent { time_of_day_s: 5.0, level: 0.0 }],
        );
        assert_eq!(p.validate(), Err(LightingError::Unsorted("k".into())));
        p.learned_events.clear();
        p.on_level = 1.5;
        assert!(p.validate().is_err());
    }
}
