//! Command-line front end: configuration ingestion, CSV/SVG serialization,
//! and the subcommand surface of the `crypt-sim` binary.

pub mod app;
pub mod config;
pub mod csv;
pub mod svg;
