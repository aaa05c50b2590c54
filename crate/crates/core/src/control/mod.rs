//! Decentralized per-floor control: model identification, MPC, setpoint
//! schedules, lighting, doors and the bang-bang comparison baseline.

mod baseline;
mod doors;
mod floor;
mod ident;
mod lighting;
mod mpc;
mod schedule;

pub use baseline::baseline_thermostat;
pub use doors::{door_window_command, DoorError, DoorNotification, NightLockRule, RequestOrigin};
pub use floor::{
    validate_request, ControlError, ControlStrategy, FloorController, FloorControllerConfig, FloorInput,
    ObserverGains, TickOutput, ZoneReport, ZoneSetpoint,
};
pub use ident::{identify_model, FitResidual, IdentError, IdentSample, ZoneModel, MIN_SAMPLES_PER_COEFFICIENT};
pub use lighting::{
    learn_lighting_routine, lighting_decision, mimic_jitter, LearnedEvent, LightingContext, LightingError,
    LightingMode, LightingPolicy, UserLightEvent, ZoneLighting, DEFAULT_CLUSTER_WINDOW_S, DEFAULT_HOLD_S,
};
pub use mpc::{mpc_step, sequence_cost, MpcConfig, MpcConfigError, MpcInput, MpcSolution, SolveStatus};
pub use schedule::{
    resolve_setpoint, time_of_day, ComfortBounds, ManualOverride, ScheduleError, SetpointEntry, SetpointSchedule,
    DEFAULT_OVERRIDE_EXPIRY_S, SECONDS_PER_DAY,
};
