//! Pipeline front end for the commuting network library: data ingestion,
//! generation/calibration/comparison orchestration, report emission, and
//! synthetic fixture generation.

pub mod commands;
pub mod config;
pub mod synth;
