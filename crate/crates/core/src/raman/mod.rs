//! One-dimensional coupled-mode model of an off-resonant Raman memory in a
//! Λ-system.
//!
//! The excited state is adiabatically eliminated, leaving two coupled fields
//! on a normalized medium coordinate `z ∈ [0, 1]` in the co-moving frame:
//!
//! ```text
//! ∂z E = −(d·Γ₀·E + √(d·Γ₀)·Ω(t)·S) / (γ + iΔ)
//! ∂t S = −(γs + iδ₂)·S − (√(d·Γ₀)·Ω*(t)·E + |Ω(t)|²·S) / (γ + iΔ)
//! ```
//!
//! `Γ₀` is the linewidth that defines the optical depth `d`; with `γ = Γ₀`
//! these are the usual equations written in units of the excited-state
//! half linewidth. `E` is normalized as photon flux and `S` so that
//! `∫|S|² dz` is the stored excitation number.

mod pulse;
mod shaping;
mod solver;
mod sweep;

pub use pulse::{ControlPulse, PulseShape};
pub use shaping::{normalized_mismatch, shape_readout, ShapingOutcome, ShapingOptions};
pub use solver::{
    apply_storage_decay, run_memory, solve_read, solve_write, storage_factor, MemoryRun,
    NormLedger, ReadOutcome, SpinWave, WriteOutcome,
};
pub use sweep::{
    sweep_detuning, sweep_read_power, sweep_write_power, write_csv, ReadPowerPoint, SpectrumPoint,
    SplitterPoint, SweepRow,
};

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("grid does not resolve the dynamics: {0}")]
    GridResolution(String),
    #[error("invalid memory configuration: {0}")]
    Config(String),
    #[error("input envelope must carry unit energy, found {0:.9}")]
    NotNormalized(f64),
    #[error("spin wave is empty; nothing to retrieve")]
    EmptySpinWave,
    #[error("invalid control pulse: {0}")]
    Pulse(String),
    #[error("target energy {requested:.4} exceeds the achievable retrieval {achievable:.4}")]
    Unreachable { requested: f64, achievable: f64 },
    #[error("empty sweep list")]
    EmptySweep,
}

/// Oscillation term of the storage-time decay, `1 − A + A·cos(ωt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Oscillation {
    pub amplitude: f64,
    /// Angular frequency, rad/s.
    pub omega: f64,
}

impl Default for Oscillation {
    fn default() -> Self {
        Self { amplitude: 0.0, omega: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverGrid {
    /// Number of nodes along the medium, including both faces.
    pub nz: usize,
    /// Time step, s.
    pub dt: f64,
}

impl Default for SolverGrid {
    fn default() -> Self {
        Self { nz: 64, dt: 0.25e-9 }
    }
}

/// Λ-system parameters. Rates are angular frequencies in rad/s, times in s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemoryConfig {
    pub optical_depth: f64,
    /// One-photon detuning Δ.
    pub detuning: f64,
    /// Excited-state coherence decay γ (half linewidth).
    pub gamma: f64,
    /// Linewidth Γ₀ used to define the optical depth.
    pub od_linewidth: f64,
    /// Spin-wave decay during the write and read dynamics.
    pub gamma_s: f64,
    /// Two-photon detuning δ₂, measured from the light-shifted Raman resonance
    /// when `compensate_light_shift` is set.
    pub two_photon_detuning: f64,
    pub compensate_light_shift: bool,
    /// Gaussian memory lifetime τ of `exp(−t²/τ²)`.
    pub lifetime: f64,
    pub oscillation: Oscillation,
    pub grid: SolverGrid,
}

/// Half the Rb D2 natural linewidth.
pub const RB_D2_HALF_LINEWIDTH: f64 = 2.0 * PI * 3.03e6;

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            optical_depth: 5.0,
            detuning: -2.0 * PI * 52e6,
            gamma: RB_D2_HALF_LINEWIDTH,
            od_linewidth: RB_D2_HALF_LINEWIDTH,
            gamma_s: 0.0,
            two_photon_detuning: 0.0,
            compensate_light_shift: true,
            lifetime: 30e-6,
            oscillation: Oscillation::default(),
            grid: SolverGrid::default(),
        }
    }
}

impl MemoryConfig {
    pub fn validate(&self) -> Result<(), MemoryError> {
        let finite = [
            self.optical_depth,
            self.detuning,
            self.gamma,
            self.od_linewidth,
            self.gamma_s,
            self.two_photon_detuning,
            self.lifetime,
            self.oscillation.amplitude,
            self.oscillation.omega,
            self.grid.dt,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(MemoryError::Config("non-finite parameter".into()));
        }
        if self.optical_depth < 0.0 {
            return Err(MemoryError::Config("optical depth must be non-negative".into()));
        }
        if self.gamma <= 0.0 || self.od_linewidth <= 0.0 {
            return Err(MemoryError::Config("linewidths must be positive".into()));
        }
        if self.gamma_s < 0.0 {
            return Err(MemoryError::Config("spin-wave decay must be non-negative".into()));
        }
        if self.lifetime <= 0.0 {
            return Err(MemoryError::Config("memory lifetime must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.oscillation.amplitude) {
            return Err(MemoryError::Config("oscillation amplitude must lie in [0, 1]".into()));
        }
        if self.grid.nz < 32 {
            return Err(MemoryError::GridResolution(format!(
                "nz = {} < 32",
                self.grid.nz
            )));
        }
        if self.grid.dt <= 0.0 || self.grid.dt * self.detuning.abs() >= 0.2 {
            return Err(MemoryError::GridResolution(format!(
                "dt·|Δ| = {:.3} must be below 0.2",
                self.grid.dt * self.detuning.abs()
            )));
        }
        Ok(())
    }

    /// `d·Γ₀ / (γ + iΔ)`, the propagation coefficient of the signal.
    pub(crate) fn denominator(&self) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.gamma, self.detuning)
    }

    pub(crate) fn coupling(&self) -> f64 {
        (self.optical_depth * self.od_linewidth).sqrt()
    }

    /// AC Stark shift of the two-photon resonance at Rabi frequency `rabi`.
    pub fn light_shift(&self, rabi: f64) -> f64 {
        -rabi * rabi * self.detuning / (self.gamma * self.gamma + self.detuning * self.detuning)
    }
}
