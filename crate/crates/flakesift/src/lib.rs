//! Std companion to `flakesift-core`: file formats, experiment
//! orchestration, report emission, a synthetic corpus generator, and the
//! CLI glue.

pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod runner;
pub mod synth;
