//! Finite-difference micromagnetic simulator for nanoscale spin-wave logic.
//!
//! The crate models a fork-shaped majority gate built from perpendicular-anisotropy
//! spin-wave buses with magneto-electric (ME) cells acting as transmitters,
//! detectors and non-volatile storage. Modules follow the data flow of a run:
//!
//! - [`geometry`] rasterizes the device into a labeled mesh and damping map.
//! - [`materials`] holds per-region constants and the strain-to-anisotropy model.
//! - [`fields`] evaluates exchange, anisotropy and demagnetizing fields and energy.
//! - [`dynamics`] integrates the Landau-Lifshitz-Gilbert equation.
//! - [`transducers`] implements logic encoding, clocking and detection.
//! - [`analysis`] turns recordings into amplitude maps, spectra and ratios.
//! - [`runner`] parses configs, orchestrates scenarios and writes artifacts.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod materials;
pub mod runner;
pub mod transducers;
pub mod vec3;

pub use error::{Error, Result};

/// Vacuum permeability (T·m/A).
pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;

/// Gyromagnetic ratio used with fields in A/m, m/(A·s).
pub const GAMMA_DEFAULT: f64 = 2.211e5;
