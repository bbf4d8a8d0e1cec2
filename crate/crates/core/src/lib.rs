//! Simulation and analysis of an on-demand single-photon source
//! feeding an off-resonant Raman quantum memory.
//!
//! The crate is organized along the physical chain:
//!
//! - [`source`]: operating point, photon-number law and temporal envelope.
//! - [`raman`]: coupled-mode write/read solver, storage decay, sweeps and
//!   read-out pulse shaping.
//! - [`detection`]: loss chain, HBT splitting, noise and dark counts, and the
//!   Monte-Carlo experiment runner producing time-tag datasets.
//! - [`timetag`]: the `QTT1` binary time-tag format and its CSV mirror.
//! - [`analysis`]: windowed probabilities, `g²(n)`, memory figures of merit,
//!   the noise-mixing model and the lifetime / waveshape fits.
//! - [`config`] and [`reproduce`]: experiment configuration and the
//!   figure-reproduction pipelines used by the `photonlab` binary.
//!
//! Runnable walkthroughs for each capability live in `examples/`.

pub mod analysis;
pub mod config;
pub mod detection;
pub mod raman;
pub mod reproduce;
pub mod rng;
pub mod signal;
pub mod source;
pub mod timetag;
