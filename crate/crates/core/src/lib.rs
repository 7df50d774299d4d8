//! Synthesis of municipality-level commuting origin-destination networks
//! from aggregate in/out-commuter counts.
//!
//! The library builds a full commuter flow matrix by assigning a workplace to
//! every out-commuter of a study region, one commuter at a time. Each
//! assignment draws a destination with probability proportional to the
//! destination's remaining job capacity weighted by a distance-decay
//! ("deterrence") function. Regions that are not closed labour markets are
//! handled by extending the candidate workplace set with the municipalities
//! surrounding the region ("outside"), and the aggregated outside row of the
//! origin-destination table is then recovered by difference against each
//! municipality's total in-commuter count.
//!
//! The distance-decay exponent is either supplied directly, taken from the
//! built-in calibrated constant ([`calibration::constant_beta`]), or fitted by
//! minimizing the Kolmogorov-Smirnov distance between the simulated and the
//! observed commuting distance distributions ([`calibration::calibrate`]).
//! Simulated and observed networks are compared through the common part of
//! commuters index ([`metrics::cpc`]).
//!
//! All distances are planar Euclidean distances in meters over projected
//! coordinates; the built-in calibration constant is only meaningful on that
//! scale.

pub mod calibration;
pub mod generator;
pub mod geodata;
pub mod metrics;
pub mod od;

pub use calibration::{calibrate, constant_beta, objective, CalibrationConfig, CalibrationReport};
pub use generator::{
    choice_probabilities, deterrence, generate, generate_regional, DeterrenceShape, DeterrenceSpec,
    GenerateOptions, GenerationInputs,
};
pub use geodata::{
    build_distance_provider, euclidean_distance, DistanceProvider, DistanceStrategy, Municipality,
    MunicipalityRegistry,
};
pub use metrics::{cpc, distance_distribution, ks_distance, nc, ncc, DistanceScope};
pub use od::{
    assemble_with_outside_inputs, collapse_to_region_plus_outside, marginals_from_od, Marginals,
    ODMatrix, RegionPlusOutsideOD,
};
