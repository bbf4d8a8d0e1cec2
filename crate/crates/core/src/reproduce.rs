//! Built-in figure pipelines behind `photonlab reproduce`.
//!
//! Each figure runs from the default [`ExperimentConfig`] and the sweep grids
//! below, so the output depends only on the seed. Grids are versioned with
//! [`GRID_VERSION`]; changing any of them bumps it.

use crate::analysis::{fit_lifetime, histogram, AnalysisError, Histogram, LifetimeFit};
use crate::config::ExperimentConfig;
use crate::detection::{run_experiment, DetectionError};
use crate::raman::{
    apply_storage_decay, normalized_mismatch, shape_readout, solve_read, solve_write, sweep_detuning,
    sweep_read_power, sweep_write_power, write_csv, ControlPulse, MemoryError, ReadPowerPoint, ShapingOptions,
    ShapingOutcome, SpectrumPoint, SplitterPoint, SpinWave, SweepRow,
};
use crate::rng::trial_rng;
use crate::signal::Envelope;
use crate::source::{input_envelope_grid, SourceError};
use crate::timetag::RunKind;
use num_complex::Complex64;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::{LN_2, PI};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const GRID_VERSION: u32 = 1;

pub const FIGURES: [u8; 5] = [2, 3, 4, 5, 6];

#[derive(Debug, Error)]
pub enum ReproduceError {
    #[error("unknown figure {0}; choose one of 2, 3, 4, 5, 6")]
    UnknownFigure(u8),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot write CSV: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy)]
pub struct ReproduceOptions {
    pub seed: u64,
    /// Trials per run for the simulated histograms.
    pub trials: u64,
}

impl Default for ReproduceOptions {
    fn default() -> Self {
        Self { seed: 1, trials: 1_000_000 }
    }
}

/// Runs the pipeline for `figure` and writes its CSV files into `out_dir`.
pub fn reproduce(figure: u8, out_dir: &Path, opts: &ReproduceOptions) -> Result<Vec<PathBuf>, ReproduceError> {
    if !FIGURES.contains(&figure) {
        return Err(ReproduceError::UnknownFigure(figure));
    }
    std::fs::create_dir_all(out_dir)?;
    let cfg = ExperimentConfig::default();
    let mut out = Bundle { dir: out_dir.to_path_buf(), files: Vec::new() };
    match figure {
        2 => figure2(&cfg, &mut out)?,
        3 => figure3(&cfg, opts, &mut out)?,
        4 => figure4(&cfg, &mut out)?,
        5 => figure5(&cfg, &mut out)?,
        _ => figure6(&cfg, &mut out)?,
    }
    Ok(out.files)
}

struct Bundle {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Bundle {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>, ReproduceError> {
        let path = self.dir.join(name);
        let f = BufWriter::new(File::create(&path)?);
        self.files.push(path);
        Ok(f)
    }

    fn table<S: Serialize>(&mut self, name: &str, rows: &[S]) -> Result<(), ReproduceError> {
        let mut w = csv::Writer::from_writer(self.create(name)?);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourcePoint {
    pub probe_setting: f64,
    pub p_gen: f64,
    pub g2_0: f64,
}

/// Operating points over the calibrated probe range in 41 steps.
pub fn source_curve(cfg: &ExperimentConfig) -> Result<Vec<SourcePoint>, SourceError> {
    (0..=40)
        .map(|k| {
            let probe = cfg.source.probe_max * k as f64 / 40.0;
            let op = cfg.source.calibrate(probe)?;
            Ok(SourcePoint { probe_setting: probe, p_gen: op.p_gen, g2_0: op.g2_0 })
        })
        .collect()
}

#[derive(Serialize)]
struct EnvelopeRow {
    time_ns: f64,
    intensity_per_ns: f64,
}

fn figure2(cfg: &ExperimentConfig, out: &mut Bundle) -> Result<(), ReproduceError> {
    out.table("fig2_source.csv", &source_curve(cfg)?)?;
    let env = input_envelope_grid(&cfg.source.envelope, cfg.photon_peak(), 1e-9);
    let rows: Vec<EnvelopeRow> = env
        .times()
        .zip(env.intensity())
        .map(|(t, i)| EnvelopeRow { time_ns: t * 1e9, intensity_per_ns: i * 1e-9 })
        .collect();
    out.table("fig2_envelope.csv", &rows)
}

/// Storage times of the lifetime scan, 0.5 µs to 60 µs.
pub fn lifetime_grid() -> Vec<f64> {
    (0..=34).map(|k| 0.5e-6 + k as f64 * 1.75e-6).collect()
}

/// Input photons counted per storage time in the lifetime scan.
pub const LIFETIME_PHOTONS: u64 = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LifetimePoint {
    pub storage_time_us: f64,
    /// Counted efficiency.
    pub eta_wr: f64,
    pub eta_wr_err: f64,
    /// Solver efficiency without counting noise.
    pub eta_wr_model: f64,
}

#[derive(Debug, Clone)]
pub struct LifetimeScan {
    pub points: Vec<LifetimePoint>,
    pub fit: LifetimeFit,
}

/// Storage efficiency versus storage time: the calibrated write is solved
/// once, the stored spin wave decays for each storage time and is read out;
/// each efficiency is then counted from [`LIFETIME_PHOTONS`] input photons.
pub fn lifetime_scan(cfg: &ExperimentConfig, seed: u64) -> Result<LifetimeScan, ReproduceError> {
    let e_in = input_envelope_grid(&cfg.source.envelope, cfg.photon_peak(), cfg.memory.grid.dt);
    let write = &cfg.protocol.write;
    let spin_wave = solve_write(&e_in, write, &cfg.memory)?.spin_wave;
    let n = LIFETIME_PHOTONS;
    let points = lifetime_grid()
        .into_par_iter()
        .enumerate()
        .map(|(k, t)| {
            let read = cfg.protocol.read.clone().shifted(write.t_start + t - cfg.protocol.read.t_start);
            let stored = apply_storage_decay(&spin_wave, t, &cfg.memory);
            let model = solve_read(&stored, &read, &cfg.memory)?.retrieved.energy() / e_in.energy();
            let mut rng = trial_rng(seed, k as u64);
            let hits = Binomial::new(n, model.clamp(0.0, 1.0)).expect("valid binomial").sample(&mut rng);
            let eta = hits as f64 / n as f64;
            let err = (eta * (1.0 - eta) / n as f64).sqrt().max(1.0 / n as f64);
            Ok(LifetimePoint { storage_time_us: t * 1e6, eta_wr: eta, eta_wr_err: err, eta_wr_model: model })
        })
        .collect::<Result<Vec<_>, MemoryError>>()?;
    let data: Vec<(f64, f64)> = points.iter().map(|p| (p.storage_time_us * 1e-6, p.eta_wr)).collect();
    let sigma: Vec<f64> = points.iter().map(|p| p.eta_wr_err).collect();
    let fit = fit_lifetime(&data, Some(&sigma)).map_err(AnalysisError::from)?;
    Ok(LifetimeScan { points, fit })
}

fn histogram_of(kind: RunKind, cfg: &ExperimentConfig, opts: &ReproduceOptions) -> Result<Histogram, ReproduceError> {
    let ds = run_experiment(kind, opts.trials, cfg, opts.seed)?;
    Ok(histogram(&ds, 0.0, 2e-9, (cfg.windows.trial_period / 2e-9).round() as usize))
}

fn figure3(cfg: &ExperimentConfig, opts: &ReproduceOptions, out: &mut Bundle) -> Result<(), ReproduceError> {
    for (kind, name) in [
        (RunKind::InputOnly, "fig3_input.csv"),
        (RunKind::Storage, "fig3_storage.csv"),
        (RunKind::NoiseOnly, "fig3_noise.csv"),
    ] {
        let h = histogram_of(kind, cfg, opts)?;
        h.write_csv(out.create(name)?)?;
    }
    let scan = lifetime_scan(cfg, opts.seed)?;
    out.table("fig3_lifetime.csv", &scan.points)?;
    let mut w = out.create("fig3_lifetime_fit.json")?;
    writeln!(w, "{}", serde_json::to_string_pretty(&scan.fit).expect("fit serializes"))?;
    w.flush()?;
    Ok(())
}

/// Two-photon detunings of the spectrum, −10 MHz to 10 MHz in 0.1 MHz steps.
pub fn detuning_grid() -> Vec<f64> {
    (-100..=100).map(|k| 2.0 * PI * k as f64 * 0.1e6).collect()
}

pub fn detuning_spectrum(cfg: &ExperimentConfig) -> Result<Vec<SpectrumPoint>, MemoryError> {
    let e_in = input_envelope_grid(&cfg.source.envelope, cfg.photon_peak(), cfg.memory.grid.dt);
    sweep_detuning(&detuning_grid(), &cfg.memory, &e_in, &cfg.protocol.write, &cfg.protocol.read)
}

#[derive(Serialize)]
struct SpectrumRow {
    delta2_mhz: f64,
    eta_w: f64,
    eta_r: f64,
    eta_wr: f64,
    transmission: f64,
}

fn figure4(cfg: &ExperimentConfig, out: &mut Bundle) -> Result<(), ReproduceError> {
    let rows: Vec<SpectrumRow> = detuning_spectrum(cfg)?
        .iter()
        .map(|p| SpectrumRow {
            delta2_mhz: p.delta2 / (2.0 * PI * 1e6),
            eta_w: p.eta_w,
            eta_r: p.eta_r,
            eta_wr: p.eta_wr,
            transmission: p.transmission,
        })
        .collect();
    out.table("fig4_spectrum.csv", &rows)
}

/// Write powers relative to the calibrated pulse: zero, then 20 steps
/// spread log-uniformly over 2.5 decades from 0.03.
pub fn write_power_grid() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((0..20).map(|i| 0.03 * 10f64.powf(i as f64 * 2.5 / 19.0)))
        .collect()
}

pub fn write_power_table(cfg: &ExperimentConfig) -> Result<Vec<SplitterPoint>, MemoryError> {
    let e_in = input_envelope_grid(&cfg.source.envelope, cfg.photon_peak(), cfg.memory.grid.dt);
    sweep_write_power(&write_power_grid(), &cfg.memory, &e_in, &cfg.protocol.write, &cfg.protocol.read)
}

fn figure5(cfg: &ExperimentConfig, out: &mut Bundle) -> Result<(), ReproduceError> {
    let rows: Vec<SweepRow> = write_power_table(cfg)?.iter().map(SweepRow::from).collect();
    write_csv(&rows, "power", out.create("fig5_power.csv")?)?;
    Ok(())
}

/// Read Rabi frequencies of the read-power sweep, 4 MHz to 28 MHz.
pub fn read_rabi_grid() -> Vec<f64> {
    [4.0, 5.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 20.0, 24.0, 28.0]
        .iter()
        .map(|m| 2.0 * PI * m * 1e6)
        .collect()
}

/// Spin wave left in the medium at the programmed read time.
pub fn stored_spin_wave(cfg: &ExperimentConfig) -> Result<SpinWave, MemoryError> {
    let e_in = input_envelope_grid(&cfg.source.envelope, cfg.photon_peak(), cfg.memory.grid.dt);
    let w = solve_write(&e_in, &cfg.protocol.write, &cfg.memory)?;
    let t = cfg.protocol.read.t_start - cfg.protocol.write.t_start;
    Ok(apply_storage_decay(&w.spin_wave, t, &cfg.memory))
}

/// Reads the stored spin wave with a long square pulse at each of
/// [`read_rabi_grid`]; `power` is relative to the configured read pulse.
pub fn read_power_table(cfg: &ExperimentConfig) -> Result<Vec<ReadPowerPoint>, MemoryError> {
    let s = stored_spin_wave(cfg)?;
    let base = &cfg.protocol.read;
    let read = ControlPulse::square(base.peak_rabi, base.t_start, 6e-6, 10e-9);
    let powers: Vec<f64> = read_rabi_grid().iter().map(|r| (r / base.peak_rabi).powi(2)).collect();
    sweep_read_power(&powers, &s, &read, &cfg.memory)
}

/// Two target read-out shapes: the 120 ns input waveshape and a time-bin
/// pair of 60 ns Gaussians 200 ns apart, each asking for half the stored
/// energy and starting 150 ns into the read.
pub fn shaping_targets(cfg: &ExperimentConfig, stored: f64) -> Vec<(&'static str, Envelope)> {
    let start = cfg.protocol.read.t_start;
    let scale = Complex64::new((0.5 * stored).sqrt(), 0.0);
    let input = input_envelope_grid(&cfg.source.envelope, start + 150e-9, 1e-9).scaled(scale);
    // Amplitude σ of a Gaussian with 60 ns intensity FWHM.
    let sigma = 60e-9 / (8.0 * LN_2).sqrt();
    let centre = start + 150e-9;
    let bins = Envelope::from_fn(start, 1e-9, 600, |t| {
        let g = |m: f64| (-(t - m).powi(2) / (4.0 * sigma * sigma)).exp();
        Complex64::new(g(centre) + g(centre + 200e-9), 0.0)
    });
    let bins = bins.normalized().expect("target has energy").scaled(scale);
    vec![("input", input), ("timebin", bins)]
}

pub fn shaping_demo(cfg: &ExperimentConfig) -> Result<Vec<(&'static str, Envelope, ShapingOutcome)>, MemoryError> {
    let s = stored_spin_wave(cfg)?;
    shaping_targets(cfg, s.energy())
        .into_par_iter()
        .map(|(name, target)| {
            let outcome = shape_readout(&target, &s, &cfg.memory, &ShapingOptions::default())?;
            Ok((name, target, outcome))
        })
        .collect()
}

#[derive(Serialize)]
struct ReadPowerRow {
    read_rabi_mhz: f64,
    power: f64,
    eta_r: f64,
    fwhm_ns: Option<f64>,
}

#[derive(Serialize)]
struct ShapingRow {
    time_ns: f64,
    target: f64,
    achieved: f64,
    control_rabi_mhz: f64,
}

fn figure6(cfg: &ExperimentConfig, out: &mut Bundle) -> Result<(), ReproduceError> {
    let rows: Vec<ReadPowerRow> = read_power_table(cfg)?
        .iter()
        .zip(read_rabi_grid())
        .map(|(p, r)| ReadPowerRow {
            read_rabi_mhz: r / (2.0 * PI * 1e6),
            power: p.power,
            eta_r: p.eta_r,
            fwhm_ns: p.fwhm.map(|f| f * 1e9),
        })
        .collect();
    out.table("fig6_fwhm.csv", &rows)?;
    for (name, target, o) in shaping_demo(cfg)? {
        let (tn, an) = (target.energy(), o.retrieved.energy());
        let rows: Vec<ShapingRow> = target
            .times()
            .map(|t| ShapingRow {
                time_ns: t * 1e9,
                target: target.at(t).norm_sqr() / tn,
                achieved: o.retrieved.at(t).norm_sqr() / an,
                control_rabi_mhz: o.pulse.rabi(t) / (2.0 * PI * 1e6),
            })
            .collect();
        out.table(&format!("fig6_shaping_{name}.csv"), &rows)?;
        debug_assert!((normalized_mismatch(&o.retrieved, &target) - o.mismatch).abs() < 1e-12);
    }
    Ok(())
}
