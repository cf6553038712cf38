//! Simulation and analysis toolkit for a Sagnac-loop source of
//! polarisation-entangled photon pairs.
//!
//! The crate is organised bottom-up:
//!
//! - [`state`]: the two-photon polarisation state, electro-optic phase
//!   settings and diagonal-basis coincidence probabilities.
//! - [`spectral`]: filtered biphoton spectra, the coherence factor as a
//!   function of signal/idler delay, and fibre-induced delays.
//! - [`detection`]: Monte Carlo time-tag generation and coincidence histograms.
//! - [`analysis`]: fringe fitting, correlation coefficients, CHSH and
//!   accidental subtraction.
//! - [`dispersion`]: visibility ruler, scaling-factor fit and dispersion
//!   coefficient.
//! - [`performance`]: brightness, pairs per coherence time, heralding.
//! - [`pipeline`]: end-to-end measurement drivers built from the above.
//! - [`io`]: CSV and JSON file formats.

pub mod analysis;
pub mod constants;
pub mod detection;
pub mod dispersion;
pub mod error;
pub mod io;
pub mod performance;
pub mod pipeline;
pub mod spectral;
pub mod state;

pub use error::{Error, Result};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
