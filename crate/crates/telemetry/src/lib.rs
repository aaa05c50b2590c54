//! Telemetry parser and append-only record store.

pub mod archive;
mod record;
mod store;

pub use archive::{export_archive, import_archive, read_archive, ARCHIVE_VERSION};
pub use record::{parse_message, ParseError, RecordClass, RecordValue, TelemetryRecord};
pub use store::{
    downsample_indices, BatchReport, IngestError, QueryError, QueryRange, RecordFilter, StoreError, TelemetryStore,
};
