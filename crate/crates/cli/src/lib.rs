//! The `deephys` command line: batch reports, the HTTP API and fixture synthesis.

pub mod api;
pub mod cli;
