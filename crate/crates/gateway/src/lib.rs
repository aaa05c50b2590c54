//! Runs the smart-building twin: plant, floor controllers, broker and
//! telemetry, plus the HTTP/WebSocket API used by the dashboard.

pub mod api;
pub mod bus;
pub mod identify;
pub mod report;
pub mod requests;
pub mod scenario;
pub mod shared;
pub mod sim;
