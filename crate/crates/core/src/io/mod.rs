//! File formats: key = value configuration, CSV diagnostics and binary
//! snapshots.

pub mod config;
pub mod csv;
pub mod snapshot;

pub use config::Config;
pub use csv::{write_diagnostics_csv, CsvWriter, RunFiles};
pub use snapshot::{decode_snapshot, encode_snapshot, read_snapshot, write_snapshot};
