//! Everything between the source and the detector clicks.
//!
//! Photons are handled one by one: the memory (for storage runs) routes each
//! photon into the transmitted or retrieved mode or loses it, the passive
//! chain and detector efficiency thin what is left, a 50/50 splitter sends it
//! to D1 or D2, and the arrival time is drawn from the intensity of the mode
//! it travels in. Lumped control-leakage noise and detector dark counts are
//! added on top.

use crate::config::ExperimentConfig;
use crate::raman::{run_memory, MemoryError, MemoryRun};
use crate::rng::trial_rng;
use crate::signal::ArrivalSampler;
use crate::source::{input_envelope_grid, EmissionDistribution, SourceError};
use crate::timetag::{Channel, RunInfo, RunKind, TagRecord, TimeTagDataset};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("invalid detection configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossStage {
    pub name: String,
    pub transmission: f64,
}

impl LossStage {
    pub fn new(name: &str, transmission: f64) -> Self {
        Self { name: name.into(), transmission }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransmissionConfig {
    pub stages: Vec<LossStage>,
    /// Source output to memory input.
    pub source_to_memory: f64,
    pub detector_efficiency: f64,
    /// Dark-count rate per detector, Hz.
    pub dark_rate: f64,
    /// Control-light suppression of the filter stage, dB.
    pub filter_suppression_db: f64,
    /// Measured end-to-end transmission and detection efficiency. When set it
    /// replaces `chain_transmission × detector_efficiency`.
    pub end_to_end: Option<f64>,
}

impl Default for TransmissionConfig {
    fn default() -> Self {
        Self {
            stages: vec![
                LossStage::new("fiber_after_source", 0.40),
                LossStage::new("aom_shifter", 0.62),
                LossStage::new("fiber_after_memory", 0.83),
                LossStage::new("filter_cavity", 0.65),
                LossStage::new("misc_optics", 0.75),
            ],
            source_to_memory: 0.22,
            detector_efficiency: 0.85,
            dark_rate: 3.0,
            filter_suppression_db: 43.4,
            end_to_end: Some(0.21),
        }
    }
}

fn probability(name: &str, p: f64, open_low: bool) -> Result<(), DetectionError> {
    let ok = p.is_finite() && p <= 1.0 && if open_low { p > 0.0 } else { p >= 0.0 };
    if ok {
        Ok(())
    } else {
        Err(DetectionError::Config(format!("{name} = {p} is not a valid probability")))
    }
}

impl TransmissionConfig {
    pub fn validate(&self) -> Result<(), DetectionError> {
        for s in &self.stages {
            probability(&s.name, s.transmission, true)?;
        }
        probability("source_to_memory", self.source_to_memory, true)?;
        probability("detector_efficiency", self.detector_efficiency, true)?;
        if let Some(a) = self.end_to_end {
            probability("end_to_end", a, true)?;
        }
        if !(self.dark_rate.is_finite() && self.dark_rate >= 0.0) {
            return Err(DetectionError::Config("dark rate must be ≥ 0".into()));
        }
        if !(self.filter_suppression_db.is_finite() && self.filter_suppression_db >= 0.0) {
            return Err(DetectionError::Config("filter suppression must be ≥ 0 dB".into()));
        }
        Ok(())
    }

    /// Probability that a photon leaving the memory is detected.
    pub fn detection_probability(&self) -> f64 {
        self.end_to_end
            .unwrap_or_else(|| chain_transmission(self) * self.detector_efficiency)
    }

    /// Power transmission of the filter for control light.
    pub fn control_leakage(&self) -> f64 {
        10f64.powf(-self.filter_suppression_db / 10.0)
    }
}

/// Product of the stage transmissions.
pub fn chain_transmission(cfg: &TransmissionConfig) -> f64 {
    cfg.stages.iter().map(|s| s.transmission).product()
}

/// Keeps each of `count` photons with probability `p`.
pub fn thin_photons<R: Rng + ?Sized>(count: u32, p: f64, rng: &mut R) -> u32 {
    if count == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return count;
    }
    Binomial::new(count as u64, p).expect("valid binomial").sample(rng) as u32
}

/// Routes each photon independently to D1 or D2 with equal probability.
pub fn hbt_split<R: Rng + ?Sized>(count: u32, rng: &mut R) -> (u32, u32) {
    let d1 = (0..count).filter(|_| rng.random::<bool>()).count() as u32;
    (d1, count - d1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    /// Opening time after the trial trigger, s.
    pub start: f64,
    pub width: f64,
}

impl Window {
    pub fn new(start: f64, width: f64) -> Self {
        Self { start, width }
    }

    pub fn end(&self) -> f64 {
        self.start + self.width
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end()
    }

    /// `[start, end)` in picoseconds after the trigger.
    pub fn to_ps(&self) -> (u64, u64) {
        (to_ps(self.start), to_ps(self.end()))
    }

    fn overlaps(&self, other: &Window) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

fn to_ps(t: f64) -> u64 {
    (t * 1e12).round().max(0.0) as u64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowConfig {
    /// 300 ns window around the input (or transmitted) photon.
    pub input: Window,
    /// 100 ns window at the programmed retrieval time.
    pub stored: Window,
    pub trial_period: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            input: Window::new(850e-9, 300e-9),
            stored: Window::new(1950e-9, 100e-9),
            trial_period: 4e-6,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), DetectionError> {
        for (name, w) in [("input", self.input), ("stored", self.stored)] {
            if !(w.width > 0.0 && w.start >= 0.0 && w.end() <= self.trial_period) {
                return Err(DetectionError::Config(format!(
                    "{name} window [{}, {}) s is not inside the {} s trial",
                    w.start,
                    w.end(),
                    self.trial_period
                )));
            }
        }
        if self.input.overlaps(&self.stored) {
            return Err(DetectionError::Config("input and stored windows overlap".into()));
        }
        Ok(())
    }

    pub fn trial_period_ps(&self) -> u64 {
        to_ps(self.trial_period)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Probability of at least one noise count in the stored window per
    /// trial, both detectors together.
    pub p_noise_per_trial: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { p_noise_per_trial: 2.3e-4 }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), DetectionError> {
        probability("p_noise_per_trial", self.p_noise_per_trial, false)
    }
}

/// One way a photon can leave the memory stage.
#[derive(Debug, Clone)]
struct Route {
    probability: f64,
    arrival: ArrivalSampler,
}

/// A prepared Monte-Carlo run: the memory is solved once and every trial
/// only draws random numbers.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub info: RunInfo,
    pub emission: EmissionDistribution,
    pub detection_probability: f64,
    /// Solved memory cycle for storage runs.
    pub memory: Option<MemoryRun>,
    routes: Vec<Route>,
    noise: Option<(Poisson<f64>, Window)>,
    dark: Option<Poisson<f64>>,
    period: f64,
    period_ps: u64,
}

/// Trials generated per parallel batch.
const BATCH: u64 = 1 << 16;

impl Simulation {
    pub fn new(cfg: &ExperimentConfig, kind: RunKind) -> Result<Self, DetectionError> {
        cfg.validate().map_err(|e| DetectionError::Config(e.to_string()))?;
        let input = input_envelope_grid(&cfg.source.envelope, cfg.photon_peak(), cfg.memory.grid.dt);
        let sampler = |env: &crate::signal::Envelope| {
            env.sampler()
                .ok_or_else(|| DetectionError::Config("empty arrival-time profile".into()))
        };
        let (emission, routes, memory) = match kind {
            RunKind::NoiseOnly => (EmissionDistribution::vacuum(), Vec::new(), None),
            RunKind::InputOnly => (
                cfg.source.emission()?,
                vec![Route { probability: 1.0, arrival: sampler(&input)? }],
                None,
            ),
            RunKind::Storage => {
                let run = run_memory(&input, &cfg.protocol.write, &cfg.protocol.read, &cfg.memory)?;
                let mut routes = vec![Route {
                    probability: run.transmission,
                    arrival: sampler(&run.write.transmitted)?,
                }];
                if run.eta_wr > 0.0 {
                    routes.push(Route { probability: run.eta_wr, arrival: sampler(&run.read.retrieved)? });
                }
                (cfg.source.emission()?, routes, Some(run))
            }
        };
        let period = cfg.windows.trial_period;
        let noise = match kind {
            RunKind::InputOnly => None,
            _ if cfg.noise.p_noise_per_trial > 0.0 => {
                let mean = -(-cfg.noise.p_noise_per_trial).ln_1p();
                Some((Poisson::new(mean).map_err(|e| DetectionError::Config(e.to_string()))?, cfg.windows.stored))
            }
            _ => None,
        };
        let dark = (cfg.detection.dark_rate > 0.0)
            .then(|| Poisson::new(cfg.detection.dark_rate * period))
            .transpose()
            .map_err(|e| DetectionError::Config(e.to_string()))?;
        Ok(Self {
            info: RunInfo {
                kind,
                trial_period_ps: cfg.windows.trial_period_ps(),
                config_hash: cfg.lineage_hash(),
            },
            emission,
            detection_probability: cfg.detection.detection_probability(),
            memory,
            routes,
            noise,
            dark,
            period,
            period_ps: cfg.windows.trial_period_ps(),
        })
    }

    /// Appends the records of trial `index` (trigger first, then clicks in
    /// time order) to `out`.
    pub fn trial(&self, master_seed: u64, index: u64, out: &mut Vec<TagRecord>) {
        let mut rng = trial_rng(master_seed, index);
        let base = index * self.period_ps;
        let trial_index = index as u32;
        out.push(TagRecord { timestamp_ps: base, trial_index, channel: Channel::Trigger });
        let first = out.len();
        let click = |t: f64, d1: bool, out: &mut Vec<TagRecord>| {
            out.push(TagRecord {
                timestamp_ps: base + to_ps(t).min(self.period_ps - 1),
                trial_index,
                channel: if d1 { Channel::D1 } else { Channel::D2 },
            });
        };

        let photons = self.emission.sample(&mut rng);
        if photons > 0 {
            let mut per_route = [0u32; 2];
            for _ in 0..photons {
                let mut u = rng.random::<f64>();
                for (k, r) in self.routes.iter().enumerate() {
                    if u < r.probability {
                        per_route[k] += 1;
                        break;
                    }
                    u -= r.probability;
                }
            }
            for (k, r) in self.routes.iter().enumerate() {
                let detected = thin_photons(per_route[k], self.detection_probability, &mut rng);
                let (d1, d2) = hbt_split(detected, &mut rng);
                for i in 0..d1 + d2 {
                    let t = r.arrival.sample(&mut rng);
                    click(t, i < d1, out);
                }
            }
        }
        if let Some((poisson, window)) = &self.noise {
            let n = poisson.sample(&mut rng) as u32;
            let (d1, d2) = hbt_split(n, &mut rng);
            // Drawn on the picosecond grid so rounding cannot leave the window.
            let (lo, hi) = window.to_ps();
            for i in 0..d1 + d2 {
                let t = lo + ((hi - lo) as f64 * rng.random::<f64>()) as u64;
                out.push(TagRecord {
                    timestamp_ps: base + t.min(hi - 1),
                    trial_index,
                    channel: if i < d1 { Channel::D1 } else { Channel::D2 },
                });
            }
        }
        if let Some(dark) = &self.dark {
            for d1 in [true, false] {
                let n = dark.sample(&mut rng) as u32;
                for _ in 0..n {
                    let t = self.period * rng.random::<f64>();
                    click(t, d1, out);
                }
            }
        }
        out[first..].sort_unstable_by_key(|r| (r.timestamp_ps, r.channel));
    }

    /// Generates `n_trials` trials in parallel batches and hands each batch to
    /// `sink` in trial order.
    pub fn stream<E>(
        &self,
        n_trials: u64,
        master_seed: u64,
        mut sink: impl FnMut(&[TagRecord]) -> Result<(), E>,
    ) -> Result<(), E> {
        let mut start = 0;
        while start < n_trials {
            let end = (start + BATCH * rayon::current_num_threads() as u64).min(n_trials);
            let chunks: Vec<Vec<TagRecord>> = (start..end)
                .step_by(BATCH as usize)
                .collect::<Vec<_>>()
                .into_par_iter()
                .map(|lo| {
                    let hi = (lo + BATCH).min(end);
                    let mut out = Vec::with_capacity((hi - lo) as usize + 64);
                    for k in lo..hi {
                        self.trial(master_seed, k, &mut out);
                    }
                    out
                })
                .collect();
            for c in &chunks {
                sink(c)?;
            }
            start = end;
        }
        Ok(())
    }

    pub fn run(&self, n_trials: u64, master_seed: u64) -> TimeTagDataset {
        let mut ds = TimeTagDataset::new(self.info);
        self.stream::<()>(n_trials, master_seed, |batch| {
            ds.records.extend_from_slice(batch);
            Ok(())
        })
        .expect("collecting cannot fail");
        ds
    }
}

/// Simulates `n_trials` trials of the given kind.
pub fn run_experiment(
    kind: RunKind,
    n_trials: u64,
    cfg: &ExperimentConfig,
    master_seed: u64,
) -> Result<TimeTagDataset, DetectionError> {
    if n_trials > u32::MAX as u64 + 1 {
        return Err(DetectionError::Config("trial index must fit in 32 bits".into()));
    }
    Ok(Simulation::new(cfg, kind)?.run(n_trials, master_seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::trial_rng;

    #[test]
    fn chain_product_of_stages() {
        let p = chain_transmission(&TransmissionConfig::default());
        assert!((p - 0.1003).abs() < 5e-5, "{p}");
    }

    #[test]
    fn trivial_chains() {
        let mut cfg = TransmissionConfig::default();
        cfg.stages = vec![LossStage::new("a", 1.0)];
        assert_eq!(chain_transmission(&cfg), 1.0);
        cfg.stages = vec![LossStage::new("a", 0.5), LossStage::new("b", 0.5)];
        assert_eq!(chain_transmission(&cfg), 0.25);
    }

    #[test]
    fn thinning_edges() {
        let mut rng = trial_rng(3, 0);
        assert_eq!(thin_photons(0, 0.5, &mut rng), 0);
        assert_eq!(thin_photons(7, 1.0, &mut rng), 7);
        assert_eq!(hbt_split(0, &mut rng), (0, 0));
        let (a, b) = hbt_split(1, &mut rng);
        assert_eq!(a + b, 1);
    }

    #[test]
    fn leakage_from_decibels() {
        let l = TransmissionConfig::default().control_leakage();
        assert!((l - 4.57e-5).abs() < 1e-7);
    }

    #[test]
    fn invalid_stage_rejected() {
        let mut cfg = TransmissionConfig::default();
        cfg.stages[0].transmission = 0.0;
        assert!(cfg.validate().is_err());
    }
}
