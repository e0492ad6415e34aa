//! Orchestration shared by the `graph-teaching` binary: experiment setup
//! and analysis reports.

pub mod experiment;
pub mod report;
