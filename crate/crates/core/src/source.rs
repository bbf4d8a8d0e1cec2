//! Phenomenological model of the Rydberg single-photon source.
//!
//! The source is described by its operating point `(p_gen, g²(0))` as a
//! function of the mean probe photon number, a photon-number law truncated
//! at two photons, and a fixed temporal envelope with a Gaussian leading
//! edge and an exponential trailing edge.

use crate::signal::Envelope;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SourceError {
    #[error("probe setting {probe} outside the calibrated range [{lo}, {hi}]")]
    OutOfRange { probe: f64, lo: f64, hi: f64 },
    #[error("infeasible operating point p_gen = {p_gen}, g2 = {g2}: {reason}")]
    Infeasible { p_gen: f64, g2: f64, reason: &'static str },
    #[error("invalid source parameter: {0}")]
    Invalid(String),
}

/// `p_gen(x) = offset + amplitude · sin²(π x / period)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RabiCurve {
    pub amplitude: f64,
    pub period: f64,
    pub offset: f64,
}

impl Default for RabiCurve {
    fn default() -> Self {
        Self { amplitude: 0.15, period: 2.0, offset: 0.0 }
    }
}

impl RabiCurve {
    pub fn eval(&self, probe: f64) -> f64 {
        self.offset + self.amplitude * (PI * probe / self.period).sin().powi(2)
    }
}

/// `g²(x) = 1 − (1 − floor) · exp(−x / scale)`, non-decreasing in `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct G2Curve {
    pub floor: f64,
    pub scale: f64,
}

impl Default for G2Curve {
    fn default() -> Self {
        // Passes through (p_gen, g²) = (0.12, 0.23) and (0.030, 0.20) with the
        // default Rabi curve.
        Self { floor: 0.177_662_896_923_455_4, scale: 10.718_276_558_240_99 }
    }
}

impl G2Curve {
    pub fn eval(&self, probe: f64) -> f64 {
        1.0 - (1.0 - self.floor) * (-probe / self.scale).exp()
    }
}

/// Temporal shape of the emitted photon. The intensity rises as a Gaussian
/// of width `rise_sigma` up to the peak and decays exponentially with time
/// constant `decay_tau` after it; both branches equal one at the peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveshapeParams {
    pub rise_sigma: f64,
    pub decay_tau: f64,
    /// Target intensity FWHM the two widths must reproduce.
    pub fwhm: f64,
}

impl Default for WaveshapeParams {
    fn default() -> Self {
        Self { rise_sigma: 69.539_840_415_386_73e-9, decay_tau: 55e-9, fwhm: 120e-9 }
    }
}

impl WaveshapeParams {
    /// Builds the shape with a given decay constant and total FWHM.
    pub fn from_fwhm(fwhm: f64, decay_tau: f64) -> Result<Self, SourceError> {
        let rise_sigma = (fwhm - decay_tau * LN_2) / (2.0 * LN_2).sqrt();
        let p = Self { rise_sigma, decay_tau, fwhm };
        p.validate()?;
        Ok(p)
    }

    /// Intensity FWHM of the composite profile.
    pub fn derived_fwhm(&self) -> f64 {
        self.rise_sigma * (2.0 * LN_2).sqrt() + self.decay_tau * LN_2
    }

    pub fn validate(&self) -> Result<(), SourceError> {
        if !(self.rise_sigma > 0.0 && self.decay_tau > 0.0) {
            return Err(SourceError::Invalid("waveshape widths must be positive".into()));
        }
        let fwhm = self.derived_fwhm();
        if (fwhm - self.fwhm).abs() > 0.01 * self.fwhm {
            return Err(SourceError::Invalid(format!(
                "waveshape FWHM {:.1} ns differs from the {:.1} ns target by more than 1%",
                fwhm * 1e9,
                self.fwhm * 1e9
            )));
        }
        Ok(())
    }

    /// `∫ I(t) dt` of the unnormalized intensity.
    fn area(&self) -> f64 {
        self.rise_sigma * (PI / 2.0).sqrt() + self.decay_tau
    }

    fn intensity(&self, t: f64) -> f64 {
        if t < 0.0 {
            (-0.5 * (t / self.rise_sigma).powi(2)).exp()
        } else {
            (-t / self.decay_tau).exp()
        }
    }
}

/// Amplitude of the input photon at time `t` relative to its peak,
/// normalized so that `∫|a(t)|² dt = 1`.
pub fn input_envelope(params: &WaveshapeParams, t: f64) -> f64 {
    (params.intensity(t) / params.area()).sqrt()
}

/// Samples the input photon with its peak at `peak_time` and renormalizes on
/// the grid. The record spans five rise widths before and twelve decay
/// constants after the peak.
pub fn input_envelope_grid(params: &WaveshapeParams, peak_time: f64, dt: f64) -> Envelope {
    let start = peak_time - 5.0 * params.rise_sigma;
    let n = ((5.0 * params.rise_sigma + 12.0 * params.decay_tau) / dt).ceil() as usize + 1;
    // Align the peak with a grid node so the kink is sampled exactly.
    let lead = ((peak_time - start) / dt).ceil();
    let t0 = peak_time - lead * dt;
    let env = Envelope::from_fn(t0, dt, n, |t| {
        Complex64::new(input_envelope(params, t - peak_time), 0.0)
    });
    env.normalized().expect("input photon has positive energy")
}

/// Provenance of source settings that are not simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceNotes {
    pub probe_detuning_hz: f64,
    pub rydberg_level: String,
}

impl Default for SourceNotes {
    fn default() -> Self {
        Self { probe_detuning_hz: -40e6, rydberg_level: "90S1/2".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    /// Mean probe photon number.
    pub probe_setting: f64,
    pub rabi_curve: RabiCurve,
    pub g2_curve: G2Curve,
    /// Upper end of the calibrated probe range; the lower end is zero.
    pub probe_max: f64,
    pub trial_period: f64,
    /// Delay from the trial trigger to the photon peak.
    pub emission_delay: f64,
    pub envelope: WaveshapeParams,
    pub notes: SourceNotes,
}

/// Probe setting of the standard operating point, p_gen = 0.12.
pub const DEFAULT_PROBE: f64 = 0.704_832_764_699_133_5;
/// Probe setting of the low operating point, p_gen = 0.030.
pub const LOW_PROBE: f64 = 0.295_167_235_300_866_5;

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            probe_setting: DEFAULT_PROBE,
            rabi_curve: RabiCurve::default(),
            g2_curve: G2Curve::default(),
            probe_max: 2.0,
            trial_period: 4e-6,
            emission_delay: 1e-6,
            envelope: WaveshapeParams::default(),
            notes: SourceNotes::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub p_gen: f64,
    pub g2_0: f64,
    /// False when nothing is emitted and g²(0) has no meaning; `g2_0` is then 0.
    pub g2_defined: bool,
}

impl SourceConfig {
    pub fn calibrate(&self, probe: f64) -> Result<OperatingPoint, SourceError> {
        if !(probe.is_finite() && (0.0..=self.probe_max).contains(&probe)) {
            return Err(SourceError::OutOfRange { probe, lo: 0.0, hi: self.probe_max });
        }
        let p_gen = self.rabi_curve.eval(probe);
        if p_gen <= 0.0 {
            return Ok(OperatingPoint { p_gen: 0.0, g2_0: 0.0, g2_defined: false });
        }
        Ok(OperatingPoint { p_gen, g2_0: self.g2_curve.eval(probe), g2_defined: true })
    }

    /// Operating point at the configured probe setting.
    pub fn operating_point(&self) -> Result<OperatingPoint, SourceError> {
        self.calibrate(self.probe_setting)
    }

    pub fn emission(&self) -> Result<EmissionDistribution, SourceError> {
        let op = self.operating_point()?;
        if op.p_gen <= 0.0 {
            return Ok(EmissionDistribution::vacuum());
        }
        emission_distribution(op.p_gen, op.g2_0)
    }

    pub fn validate(&self) -> Result<(), SourceError> {
        self.envelope.validate()?;
        if !(self.trial_period > 0.0 && self.emission_delay >= 0.0) {
            return Err(SourceError::Invalid("trial timing must be positive".into()));
        }
        if !(self.probe_max > 0.0 && self.rabi_curve.period > 0.0 && self.g2_curve.scale > 0.0) {
            return Err(SourceError::Invalid("curve scales must be positive".into()));
        }
        self.operating_point()?;
        Ok(())
    }
}

/// Maps a probe setting to `(p_gen, g²(0))` with the default calibration.
pub fn calibrate_source(probe_setting: f64) -> Result<OperatingPoint, SourceError> {
    SourceConfig::default().calibrate(probe_setting)
}

/// Per-trial photon-number law truncated at two photons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionDistribution {
    pub pi0: f64,
    pub pi1: f64,
    pub pi2: f64,
}

impl EmissionDistribution {
    pub fn vacuum() -> Self {
        Self { pi0: 1.0, pi1: 0.0, pi2: 0.0 }
    }

    pub fn mean(&self) -> f64 {
        self.pi1 + 2.0 * self.pi2
    }

    /// `2·π₂ / ⟨n⟩²`; zero for the vacuum.
    pub fn g2(&self) -> f64 {
        let m = self.mean();
        if m > 0.0 {
            2.0 * self.pi2 / (m * m)
        } else {
            0.0
        }
    }

    /// Draws the number of photons emitted in one trial.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.random();
        if u < self.pi1 {
            1
        } else if u < self.pi1 + self.pi2 {
            2
        } else {
            0
        }
    }
}

/// Number-state mixture with mean `p_gen` and normalized second moment `g2_0`.
///
/// Truncating at two photons drops terms of order `p_gen³`.
pub fn emission_distribution(p_gen: f64, g2_0: f64) -> Result<EmissionDistribution, SourceError> {
    if !(p_gen > 0.0 && p_gen <= 0.2) {
        return Err(SourceError::Infeasible { p_gen, g2: g2_0, reason: "p_gen must lie in (0, 0.2]" });
    }
    if !(0.0..=2.0).contains(&g2_0) {
        return Err(SourceError::Infeasible { p_gen, g2: g2_0, reason: "g2 must lie in [0, 2]" });
    }
    let pi2 = 0.5 * g2_0 * p_gen * p_gen;
    let pi1 = p_gen - 2.0 * pi2;
    if pi1 < 0.0 {
        return Err(SourceError::Infeasible {
            p_gen,
            g2: g2_0,
            reason: "single-photon weight would be negative",
        });
    }
    Ok(EmissionDistribution { pi0: 1.0 - pi1 - pi2, pi1, pi2 })
}

/// Draws one trial's photon number. Thin wrapper over
/// [`EmissionDistribution::sample`].
pub fn sample_trial<R: Rng + ?Sized>(dist: &EmissionDistribution, rng: &mut R) -> u32 {
    dist.sample(rng)
}
