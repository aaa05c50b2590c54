//! Building model, plant simulator and per-floor controllers.

pub mod command;
pub mod control;
pub mod plant;
pub mod topology;
pub mod wire;
