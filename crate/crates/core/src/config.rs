//! Experiment configuration: one JSON document with a section per stage.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "source":    { "probe_setting": 0.7048, ... },
//!   "memory":    { "optical_depth": 5.0, "detuning": -326725635.973, ... },
//!   "protocol":  { "write": { ... }, "read": { ... } },
//!   "detection": { "stages": [ ... ], "end_to_end": 0.21, ... },
//!   "windows":   { "input": { "start": 8.5e-7, "width": 3e-7 }, ... },
//!   "noise":     { "p_noise_per_trial": 2.3e-4 },
//!   "run":       { "n_trials": 100000, "master_seed": 1, "kind": "storage" }
//! }
//! ```
//!
//! Every section and field is optional and falls back to the calibrated
//! defaults below. Unknown fields are rejected. Times are in seconds and
//! rates in rad/s unless the field name says otherwise.

use crate::detection::{NoiseConfig, TransmissionConfig, WindowConfig};
use crate::raman::{ControlPulse, MemoryConfig};
use crate::source::SourceConfig;
use crate::timetag::RunKind;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Write Rabi frequency giving `eta_wr = 0.21` with the default protocol.
pub const CALIBRATED_WRITE_RABI: f64 = 2.0 * PI * 8.353e6;
pub const DEFAULT_READ_RABI: f64 = 2.0 * PI * 40e6;
/// Storage time between the start of the write and of the read pulse.
pub const DEFAULT_STORAGE_TIME: f64 = 1.2e-6;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config is not valid JSON for the schema: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    Schema { found: u32 },
    #[error("inconsistent configuration: {0}")]
    Invalid(String),
}

/// Write and read control pulses, in absolute trial time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryProtocol {
    pub write: ControlPulse,
    pub read: ControlPulse,
}

impl MemoryProtocol {
    /// Square write pulse with 30 ns edges from 250 ns before the photon
    /// peak for 325 ns; square 300 ns read with 10 ns edges after
    /// [`DEFAULT_STORAGE_TIME`].
    pub fn calibrated(photon_peak: f64) -> Self {
        let start = photon_peak - 250e-9;
        Self {
            write: ControlPulse::square(CALIBRATED_WRITE_RABI, start, 325e-9, 30e-9),
            read: ControlPulse::square(
                DEFAULT_READ_RABI,
                start + DEFAULT_STORAGE_TIME,
                300e-9,
                10e-9,
            ),
        }
    }
}

impl Default for MemoryProtocol {
    fn default() -> Self {
        Self::calibrated(SourceConfig::default().emission_delay)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub n_trials: u64,
    pub master_seed: u64,
    pub kind: RunKind,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { n_trials: 100_000, master_seed: 1, kind: RunKind::Storage }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub source: SourceConfig,
    pub memory: MemoryConfig,
    pub protocol: MemoryProtocol,
    pub detection: TransmissionConfig,
    pub windows: WindowConfig,
    pub noise: NoiseConfig,
    pub run: RunConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            source: SourceConfig::default(),
            memory: MemoryConfig::default(),
            protocol: MemoryProtocol::default(),
            detection: TransmissionConfig::default(),
            windows: WindowConfig::default(),
            noise: NoiseConfig::default(),
            run: RunConfig::default(),
        }
    }
}

/// Everything but the run section; this is what the config hash covers, so
/// the three runs of one measurement share it.
#[derive(Serialize)]
struct Lineage<'a> {
    schema_version: u32,
    source: &'a SourceConfig,
    memory: &'a MemoryConfig,
    protocol: &'a MemoryProtocol,
    detection: &'a TransmissionConfig,
    windows: &'a WindowConfig,
    noise: &'a NoiseConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema { found: self.schema_version });
        }
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.source.validate().map_err(|e| invalid(&e))?;
        self.memory.validate().map_err(|e| invalid(&e))?;
        self.protocol.write.validate().map_err(|e| invalid(&e))?;
        self.protocol.read.validate().map_err(|e| invalid(&e))?;
        self.detection.validate().map_err(|e| invalid(&e))?;
        self.noise.validate().map_err(|e| invalid(&e))?;
        self.windows.validate().map_err(|e| invalid(&e))?;

        let period = self.windows.trial_period;
        if (period - self.source.trial_period).abs() > 1e-12 {
            return Err(ConfigError::Invalid(format!(
                "window trial period {period} s differs from the source trial period {} s",
                self.source.trial_period
            )));
        }
        for (name, p) in [("write", &self.protocol.write), ("read", &self.protocol.read)] {
            if p.t_start < 0.0 || p.t_end() > period {
                return Err(ConfigError::Invalid(format!("{name} pulse leaves the trial period")));
            }
        }
        if self.protocol.read.t_start < self.protocol.write.t_end() {
            return Err(ConfigError::Invalid("read pulse starts before the write pulse ends".into()));
        }
        let stored = self.windows.stored;
        if stored.start < self.protocol.read.t_start || stored.start >= self.protocol.read.t_end() {
            return Err(ConfigError::Invalid(
                "stored window must open during the read pulse".into(),
            ));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON of every section except `run`.
    pub fn lineage_hash(&self) -> [u8; 32] {
        let lineage = Lineage {
            schema_version: self.schema_version,
            source: &self.source,
            memory: &self.memory,
            protocol: &self.protocol,
            detection: &self.detection,
            windows: &self.windows,
            noise: &self.noise,
        };
        let bytes = serde_json::to_vec(&lineage).expect("config serializes");
        Sha256::digest(bytes).into()
    }

    pub fn photon_peak(&self) -> f64 {
        self.source.emission_delay
    }
}
