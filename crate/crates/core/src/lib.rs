//! Steady-state absorption of inhomogeneously broadened multilevel media.
//!
//! The crate simulates weak-probe absorption of an ensemble of absorbers
//! whose transition frequencies are shifted by a common Gaussian variable,
//! and evaluates how far auxiliary light shifts can recover the homogeneous
//! absorption cross-section.
//!
//! * [`scheme`]: level schemes and presets
//! * [`liouville`]: single-absorber Lindblad steady state
//! * [`ensemble`]: Gaussian averaging, spectra, peaks
//! * [`recovery`]: closed-form limits, compensation plans, enhancement
//! * [`optimize`]: sweeps, maximization of the enhancement, figure datasets
//! * [`acceptance`]: the numerical acceptance criteria, shared by the test
//!   suite and the command-line `selftest`

pub mod acceptance;
pub mod ensemble;
pub mod error;
pub mod format;
mod linalg;
pub mod liouville;
pub mod optimize;
pub mod recovery;
pub mod scheme;
pub mod voigt;

pub use error::{Error, Result};
