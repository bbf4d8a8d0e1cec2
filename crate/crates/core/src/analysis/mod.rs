//! Figures of merit from time-tag datasets.
//!
//! Counting works per trial: a detector "fires" in a window when it has at
//! least one click there, so multi-click trials count once. Everything is
//! computed by [`CountAccumulator`], which consumes records in file order and
//! never holds more than the last few trials, so 10⁸-trial runs can be
//! analysed straight from a [`TagReader`](crate::timetag::TagReader).

pub mod fit;

pub use fit::{
    fit_lifetime, fit_waveshape, least_squares, numerical_gradient, FitError, LifetimeFit, LifetimeModel,
    LsqOutcome, Model, PulseComponent, WaveshapeFit, WaveshapeMode, WaveshapeModel,
};

use crate::detection::{Window, WindowConfig};
use crate::rng::trial_rng;
use crate::timetag::{Channel, RunInfo, RunKind, TagError, TagRecord, TimeTagDataset};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("dataset contains no trials")]
    Empty,
    #[error("window [{start_ps}, {end_ps}) ps is not inside the {period_ps} ps trial")]
    Window { start_ps: u64, end_ps: u64, period_ps: u64 },
    #[error("runs do not share a configuration: {0}")]
    Lineage(String),
    #[error(transparent)]
    Tags(#[from] TagError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

/// A value with its symmetric 1σ uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn new(value: f64, error: f64) -> Self {
        Self { value, error }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, error: 0.0 }
    }

    /// `|value − x|` in units of the error; infinite for a zero error unless equal.
    pub fn sigmas_from(&self, x: f64) -> f64 {
        let d = (self.value - x).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.error
        }
    }

    fn ratio(self, den: Estimate) -> Estimate {
        let value = self.value / den.value;
        let rel = (self.error / self.value).powi(2) + (den.error / den.value).powi(2);
        let error = if self.value == 0.0 {
            self.error / den.value.abs()
        } else {
            value.abs() * rel.sqrt()
        };
        Estimate::new(value, error)
    }

    fn minus(self, other: Estimate) -> Estimate {
        Estimate::new(self.value - other.value, self.error.hypot(other.error))
    }

    fn plus(self, other: Estimate) -> Estimate {
        Estimate::new(self.value + other.value, self.error.hypot(other.error))
    }
}

fn binomial(k: u64, n: u64) -> Estimate {
    let p = k as f64 / n as f64;
    Estimate::new(p, (p * (1.0 - p) / n as f64).sqrt())
}

/// Per-window counting statistics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedCounts {
    pub window: Window,
    pub n_trials: u64,
    /// Trials with at least one D1 (D2) click in the window.
    pub fired1: u64,
    pub fired2: u64,
    /// Trials with at least one click on either detector.
    pub fired_any: u64,
    /// Every click in the window.
    pub clicks: u64,
    /// `#(D1ₖ ∧ D2ₖ₊ₙ) + #(D2ₖ ∧ D1ₖ₊ₙ)` for each lag `n`.
    pub coincidences: BTreeMap<u32, u64>,
}

impl WindowedCounts {
    pub fn p1(&self) -> f64 {
        self.rate(self.fired1)
    }

    pub fn p2(&self) -> f64 {
        self.rate(self.fired2)
    }

    fn rate(&self, k: u64) -> f64 {
        if self.n_trials == 0 {
            0.0
        } else {
            k as f64 / self.n_trials as f64
        }
    }

    /// Detection probability per trial, `p1 + p2`, with its binomial error.
    pub fn p(&self) -> Estimate {
        if self.n_trials == 0 {
            return Estimate::exact(0.0);
        }
        let (a, b) = (binomial(self.fired1, self.n_trials), binomial(self.fired2, self.n_trials));
        a.plus(b)
    }

    /// Symmetrized coincidence probability at trial separation `n`, or
    /// `None` if the lag was not accumulated or no pair of trials exists.
    pub fn c12(&self, n: u32) -> Option<f64> {
        let pairs = self.n_trials.checked_sub(n as u64).filter(|&p| p > 0)?;
        Some(*self.coincidences.get(&n)? as f64 / (2 * pairs) as f64)
    }

    pub fn max_lag(&self) -> u32 {
        self.coincidences.keys().next_back().copied().unwrap_or(0)
    }
}

const D1: u8 = 1;
const D2: u8 = 2;

/// Streaming counter for several windows and lags `0..=max_lag`.
#[derive(Debug, Clone)]
pub struct CountAccumulator {
    windows: Vec<(u64, u64)>,
    requested: Vec<Window>,
    period_ps: u64,
    max_lag: u32,
    /// Detector flags of the last `max_lag + 1` trials per window.
    ring: Vec<Vec<u8>>,
    current: Option<u64>,
    base_ps: u64,
    flags: Vec<u8>,
    n_trials: u64,
    fired: Vec<[u64; 3]>,
    clicks: Vec<u64>,
    coincidences: Vec<Vec<u64>>,
}

impl CountAccumulator {
    pub fn new(info: &RunInfo, windows: &[Window], max_lag: u32) -> Result<Self, AnalysisError> {
        let period_ps = info.trial_period_ps;
        let mut bounds = Vec::with_capacity(windows.len());
        for w in windows {
            let (start_ps, end_ps) = w.to_ps();
            if !(w.start >= 0.0 && w.width > 0.0 && end_ps <= period_ps) {
                return Err(AnalysisError::Window { start_ps, end_ps, period_ps });
            }
            bounds.push((start_ps, end_ps));
        }
        let lags = max_lag as usize + 1;
        Ok(Self {
            windows: bounds,
            requested: windows.to_vec(),
            period_ps,
            max_lag,
            ring: vec![vec![0; lags]; windows.len()],
            current: None,
            base_ps: 0,
            flags: vec![0; windows.len()],
            n_trials: 0,
            fired: vec![[0; 3]; windows.len()],
            clicks: vec![0; windows.len()],
            coincidences: vec![vec![0; lags]; windows.len()],
        })
    }

    pub fn push(&mut self, r: &TagRecord) {
        let trial = r.trial_index as u64;
        if self.current != Some(trial) {
            self.start_trial(trial);
        }
        match r.channel {
            Channel::Trigger => self.base_ps = r.timestamp_ps,
            ch => {
                let offset = r.timestamp_ps.saturating_sub(self.base_ps);
                let bit = if ch == Channel::D1 { D1 } else { D2 };
                for (w, &(lo, hi)) in self.windows.iter().enumerate() {
                    if offset >= lo && offset < hi {
                        self.flags[w] |= bit;
                        self.clicks[w] += 1;
                    }
                }
            }
        }
    }

    pub fn extend<'a>(&mut self, records: impl IntoIterator<Item = &'a TagRecord>) {
        for r in records {
            self.push(r);
        }
    }

    fn start_trial(&mut self, trial: u64) {
        self.close_trial();
        let lags = self.max_lag as u64 + 1;
        // Trials without any record are empty; clear their ring slots.
        let from = self.current.map_or(0, |c| c + 1);
        for skipped in from.max(trial.saturating_sub(lags))..trial {
            for ring in &mut self.ring {
                ring[(skipped % lags) as usize] = 0;
            }
        }
        self.n_trials = self.n_trials.max(trial + 1);
        self.current = Some(trial);
        self.base_ps = trial * self.period_ps;
    }

    fn close_trial(&mut self) {
        let Some(trial) = self.current else { return };
        let lags = self.max_lag as u64 + 1;
        for w in 0..self.windows.len() {
            let f = self.flags[w];
            let ring = &mut self.ring[w];
            ring[(trial % lags) as usize] = f;
            if f != 0 {
                self.fired[w][0] += (f & D1 != 0) as u64;
                self.fired[w][1] += (f & D2 != 0) as u64;
                self.fired[w][2] += 1;
                for n in 0..=self.max_lag.min(trial as u32) as u64 {
                    let g = if n == 0 { f } else { ring[((trial - n) % lags) as usize] };
                    let c = ((g & D1 != 0) && (f & D2 != 0)) as u64 + ((g & D2 != 0) && (f & D1 != 0)) as u64;
                    self.coincidences[w][n as usize] += c;
                }
            }
            self.flags[w] = 0;
        }
    }

    /// Declares the run length when trailing trials have no records.
    pub fn set_n_trials(&mut self, n: u64) {
        self.n_trials = self.n_trials.max(n);
    }

    pub fn finish(mut self) -> Vec<WindowedCounts> {
        self.close_trial();
        (0..self.windows.len())
            .map(|w| WindowedCounts {
                window: self.requested[w],
                n_trials: self.n_trials,
                fired1: self.fired[w][0],
                fired2: self.fired[w][1],
                fired_any: self.fired[w][2],
                clicks: self.clicks[w],
                coincidences: (0..=self.max_lag).map(|n| (n, self.coincidences[w][n as usize])).collect(),
            })
            .collect()
    }
}

/// Counting statistics of `window` with lags up to `max_lag`.
pub fn window_counts(dataset: &TimeTagDataset, window: Window, max_lag: u32) -> Result<WindowedCounts, AnalysisError> {
    let n = dataset.n_trials();
    if n == 0 {
        return Err(AnalysisError::Empty);
    }
    let mut acc = CountAccumulator::new(&dataset.info, &[window], max_lag)?;
    acc.extend(&dataset.records);
    acc.set_n_trials(n);
    Ok(acc.finish().remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2Estimate {
    pub n: u32,
    pub value: f64,
    pub error: f64,
    /// False when `p1·p2 = 0`; value and error are then NaN.
    pub defined: bool,
}

/// `g²(n) = c12(n)/(p1·p2)` with Poisson error on the coincidences and
/// binomial errors on the singles.
pub fn g2_of_n(counts: &WindowedCounts, n: u32) -> G2Estimate {
    let undefined = G2Estimate { n, value: f64::NAN, error: f64::NAN, defined: false };
    let (p1, p2) = (counts.p1(), counts.p2());
    let Some(c12) = counts.c12(n) else { return undefined };
    if !(p1 * p2 > 0.0) {
        return undefined;
    }
    let raw = counts.coincidences[&n] as f64;
    // At n = 0 each coincident trial appears twice in the symmetrized sum.
    let raw_error = if n == 0 { (2.0 * raw).sqrt() } else { raw.sqrt() }.max(1.0);
    let c_error = c12 * raw_error / raw.max(1.0);
    let nt = counts.n_trials as f64;
    let rel_p = (1.0 - p1) / (p1 * nt) + (1.0 - p2) / (p2 * nt);
    let value = c12 / (p1 * p2);
    let error = ((c_error / (p1 * p2)).powi(2) + value * value * rel_p).sqrt();
    G2Estimate { n, value, error, defined: true }
}

/// `g²(n)` for every accumulated lag.
pub fn g2_table(counts: &WindowedCounts) -> Vec<G2Estimate> {
    (0..=counts.max_lag()).map(|n| g2_of_n(counts, n)).collect()
}

/// Block-bootstrap spread of `g²(n)`: trials are resampled in contiguous
/// blocks so short-range lags survive. Returns the mean and standard
/// deviation of the resampled estimates.
pub fn bootstrap_g2(
    dataset: &TimeTagDataset,
    window: Window,
    n: u32,
    resamples: usize,
    seed: u64,
) -> Result<Estimate, AnalysisError> {
    let trials = dataset.n_trials();
    if trials == 0 {
        return Err(AnalysisError::Empty);
    }
    let (lo, hi) = window.to_ps();
    let period = dataset.info.trial_period_ps;
    if hi > period {
        return Err(AnalysisError::Window { start_ps: lo, end_ps: hi, period_ps: period });
    }
    let mut flags = vec![0u8; trials as usize];
    let mut base = 0;
    for r in &dataset.records {
        match r.channel {
            Channel::Trigger => base = r.timestamp_ps,
            ch => {
                let off = r.timestamp_ps.saturating_sub(base);
                if off >= lo && off < hi {
                    flags[r.trial_index as usize] |= if ch == Channel::D1 { D1 } else { D2 };
                }
            }
        }
    }
    let block = 1024usize.max(4 * n as usize).min(flags.len());
    let n_blocks = flags.len().div_ceil(block);
    let values: Vec<f64> = (0..resamples)
        .into_par_iter()
        .filter_map(|k| {
            let mut rng = trial_rng(seed, k as u64);
            let (mut f1, mut f2, mut c, mut total, mut pairs) = (0u64, 0u64, 0u64, 0u64, 0u64);
            for _ in 0..n_blocks {
                let b = rng.random_range(0..n_blocks);
                let chunk = &flags[b * block..((b + 1) * block).min(flags.len())];
                for (i, &f) in chunk.iter().enumerate() {
                    f1 += (f & D1 != 0) as u64;
                    f2 += (f & D2 != 0) as u64;
                    total += 1;
                    if let Some(&g) = chunk.get(i + n as usize) {
                        pairs += 1;
                        c += ((f & D1 != 0) && (g & D2 != 0)) as u64 + ((f & D2 != 0) && (g & D1 != 0)) as u64;
                    }
                }
            }
            let (p1, p2) = (f1 as f64 / total as f64, f2 as f64 / total as f64);
            (p1 * p2 > 0.0 && pairs > 0).then(|| c as f64 / (2 * pairs) as f64 / (p1 * p2))
        })
        .collect();
    if values.len() < 2 {
        return Ok(Estimate::new(f64::NAN, f64::NAN));
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Ok(Estimate::new(mean, var.sqrt()))
}

/// Mean emitted photon number per trial from an input-only run.
///
/// Non-resolving detectors miss the second photon when both land on the
/// same detector, which happens as often as a split, so `c12(0)` is added
/// back. `capture` is the fraction of the photon envelope inside the window.
pub fn estimate_p_gen(counts: &WindowedCounts, detection_probability: f64, capture: f64) -> Estimate {
    let scale = detection_probability * capture;
    let p = counts.p();
    let c0 = counts.c12(0).unwrap_or(0.0);
    let c0_err = if counts.n_trials > 0 {
        (counts.coincidences.get(&0).copied().unwrap_or(0) as f64 / 2.0).sqrt() / counts.n_trials as f64
    } else {
        0.0
    };
    Estimate::new((p.value + c0) / scale, p.error.hypot(c0_err) / scale)
}

/// Predicted `g²(0)` of a signal with `g2_in` mixed with Poissonian
/// background at signal-to-noise ratio `snr`. An infinite `snr` returns
/// `g2_in`.
pub fn noise_mixed_g2(g2_in: f64, snr: f64) -> f64 {
    if snr.is_infinite() {
        return g2_in;
    }
    (snr * snr * g2_in + 2.0 * snr + 1.0) / ((snr + 1.0) * (snr + 1.0))
}

/// Counts of one run in the input and stored windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub info: RunInfo,
    pub input: WindowedCounts,
    pub stored: WindowedCounts,
}

impl RunSummary {
    pub fn from_dataset(dataset: &TimeTagDataset, windows: &WindowConfig, max_lag: u32) -> Result<Self, AnalysisError> {
        let n = dataset.n_trials();
        if n == 0 {
            return Err(AnalysisError::Empty);
        }
        let mut acc = SummaryAccumulator::new(dataset.info, windows, max_lag)?;
        acc.extend(&dataset.records);
        acc.set_n_trials(n);
        Ok(acc.finish())
    }

    /// Reads a tag stream without loading it.
    pub fn from_reader<R: std::io::Read>(
        reader: crate::timetag::TagReader<R>,
        windows: &WindowConfig,
        max_lag: u32,
    ) -> Result<Self, AnalysisError> {
        let info = reader.header.info;
        let mut acc = SummaryAccumulator::new(info, windows, max_lag)?;
        for r in reader {
            acc.push(&r?);
        }
        if acc.counts.n_trials == 0 {
            return Err(AnalysisError::Empty);
        }
        Ok(acc.finish())
    }
}

/// [`CountAccumulator`] over the input and stored windows.
#[derive(Debug, Clone)]
pub struct SummaryAccumulator {
    info: RunInfo,
    counts: CountAccumulator,
}

impl SummaryAccumulator {
    pub fn new(info: RunInfo, windows: &WindowConfig, max_lag: u32) -> Result<Self, AnalysisError> {
        Ok(Self { info, counts: CountAccumulator::new(&info, &[windows.input, windows.stored], max_lag)? })
    }

    pub fn push(&mut self, r: &TagRecord) {
        self.counts.push(r);
    }

    pub fn extend<'a>(&mut self, records: impl IntoIterator<Item = &'a TagRecord>) {
        self.counts.extend(records);
    }

    pub fn set_n_trials(&mut self, n: u64) {
        self.counts.set_n_trials(n);
    }

    pub fn finish(self) -> RunSummary {
        let mut w = self.counts.finish();
        let stored = w.pop().expect("two windows");
        let input = w.pop().expect("two windows");
        RunSummary { info: self.info, input, stored }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryFigures {
    pub eta_w: Estimate,
    pub eta_r: Estimate,
    pub eta_wr: Estimate,
    pub snr: Estimate,
    pub mu1: Estimate,
    pub s_over_t: Estimate,
    pub survival: Estimate,
    /// Background-subtracted probabilities the figures are built from.
    pub p_in: Estimate,
    pub p_t: Estimate,
    pub p_s: Estimate,
    /// Raw noise probability in the stored window.
    pub p_n: Estimate,
    /// Names of probabilities that went negative after subtraction and were
    /// set to zero.
    pub clamped: Vec<String>,
    /// The runs cannot separate write-in from transmission (wrong run kinds,
    /// the same data passed twice, or a vanishing input); ratios may be NaN.
    pub degenerate: bool,
}

/// Memory figures of merit from an input-only, a storage and a noise-only run.
pub fn memory_figures(
    input: &RunSummary,
    storage: &RunSummary,
    noise: &RunSummary,
) -> Result<MemoryFigures, AnalysisError> {
    for (name, r) in [("storage", storage), ("noise", noise)] {
        if r.info.config_hash != input.info.config_hash {
            return Err(AnalysisError::Lineage(format!(
                "{name} run hash {} differs from input run hash {}",
                hex::encode(&r.info.config_hash[..8]),
                hex::encode(&input.info.config_hash[..8])
            )));
        }
        if r.info.trial_period_ps != input.info.trial_period_ps {
            return Err(AnalysisError::Lineage(format!("{name} run has a different trial period")));
        }
        if r.input.window != input.input.window || r.stored.window != input.stored.window {
            return Err(AnalysisError::Lineage(format!("{name} run was counted in different windows")));
        }
    }
    if [input, storage, noise].iter().any(|r| r.input.n_trials == 0) {
        return Err(AnalysisError::Empty);
    }

    let mut clamped = Vec::new();
    let mut subtract = |name: &str, raw: Estimate, bg: Estimate| {
        let d = raw.minus(bg);
        if d.value < 0.0 {
            clamped.push(name.to_string());
            Estimate::new(0.0, d.error)
        } else {
            d
        }
    };
    let p_in = subtract("p_in", input.input.p(), noise.input.p());
    let p_t = subtract("p_t", storage.input.p(), noise.input.p());
    let p_s = subtract("p_s", storage.stored.p(), noise.stored.p());
    let p_n = noise.stored.p();

    let eta_wr = p_s.ratio(p_in);
    let t_frac = p_t.ratio(p_in);
    let eta_w = Estimate::new(1.0 - t_frac.value, t_frac.error);
    let eta_r = eta_wr.ratio(eta_w);
    let snr = storage.stored.p().ratio(p_n);
    let mu1 = p_n.ratio(eta_wr);
    let s_over_t = p_s.ratio(p_t);
    let survival = p_s.plus(p_t).ratio(p_in);

    let same = |a: &RunSummary, b: &RunSummary| a.input == b.input && a.stored == b.stored;
    let degenerate = input.info.kind != RunKind::InputOnly
        || storage.info.kind != RunKind::Storage
        || noise.info.kind != RunKind::NoiseOnly
        || same(input, storage)
        || same(input, noise)
        || same(storage, noise)
        || !(p_in.value > 0.0)
        || !(eta_w.value > 0.0);

    Ok(MemoryFigures { eta_w, eta_r, eta_wr, snr, mu1, s_over_t, survival, p_in, p_t, p_s, p_n, clamped, degenerate })
}

/// Click-time histogram relative to the trial trigger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// Start of the first bin after the trigger, s.
    pub t0: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(t0: f64, bin_width: f64, n_bins: usize) -> Self {
        Self { t0, bin_width, counts: vec![0; n_bins] }
    }

    pub fn bin_start(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.bin_width
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.bin_start(i) + 0.5 * self.bin_width
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Adds a click at `t` seconds after the trigger; out-of-range times are dropped.
    pub fn add(&mut self, t: f64) {
        let x = (t - self.t0) / self.bin_width;
        if x >= 0.0 && (x as usize) < self.counts.len() {
            self.counts[x as usize] += 1;
        }
    }

    /// Columns `bin_start_ps,count`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), AnalysisError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin_start_ps", "count"]).map_err(csv_io)?;
        for (i, c) in self.counts.iter().enumerate() {
            let start = (self.bin_start(i) * 1e12).round() as i64;
            w.write_record([start.to_string(), c.to_string()]).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> AnalysisError {
    AnalysisError::Io(std::io::Error::other(e))
}

/// Histogram of all detector clicks in a dataset.
pub fn histogram(dataset: &TimeTagDataset, t0: f64, bin_width: f64, n_bins: usize) -> Histogram {
    let mut h = Histogram::new(t0, bin_width, n_bins);
    let mut base = 0;
    for r in &dataset.records {
        match r.channel {
            Channel::Trigger => base = r.timestamp_ps,
            _ => h.add(r.timestamp_ps.saturating_sub(base) as f64 * 1e-12),
        }
    }
    h
}

/// One analysed tag file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputProvenance {
    pub path: String,
    /// SHA-256 of the file bytes.
    pub sha256: String,
    pub kind: RunKind,
    pub n_trials: u64,
    pub config_hash: String,
}

/// The JSON document written by `photonlab analyze`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub figures: MemoryFigures,
    /// `g²(n)` of the input run in the input window.
    pub g2_input: Vec<G2Estimate>,
    /// `g²(n)` of the storage run in the stored window.
    pub g2_stored: Vec<G2Estimate>,
    /// Prediction of the noise-mixing model for the stored photon.
    pub g2_stored_predicted: f64,
    pub inputs: Vec<InputProvenance>,
}

impl AnalysisReport {
    pub fn build(
        input: &RunSummary,
        storage: &RunSummary,
        noise: &RunSummary,
        inputs: Vec<InputProvenance>,
    ) -> Result<Self, AnalysisError> {
        let figures = memory_figures(input, storage, noise)?;
        let g2_input = g2_table(&input.input);
        let g2_stored = g2_table(&storage.stored);
        let g2_in = g2_input.first().filter(|g| g.defined).map_or(f64::NAN, |g| g.value);
        // The model wants signal over noise, not raw over noise.
        let g2_stored_predicted = noise_mixed_g2(g2_in, figures.p_s.value / figures.p_n.value);
        Ok(Self { figures, g2_input, g2_stored, g2_stored_predicted, inputs })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn info() -> RunInfo {
        RunInfo { kind: RunKind::InputOnly, trial_period_ps: 4_000_000, config_hash: [0; 32] }
    }

    fn trigger(k: u32) -> TagRecord {
        TagRecord { timestamp_ps: k as u64 * 4_000_000, trial_index: k, channel: Channel::Trigger }
    }

    fn click(k: u32, offset_ps: u64, channel: Channel) -> TagRecord {
        TagRecord { timestamp_ps: k as u64 * 4_000_000 + offset_ps, trial_index: k, channel }
    }

    #[test]
    fn empty_trials_count_as_zero() {
        let mut ds = TimeTagDataset::new(info());
        ds.records = (0..10).map(trigger).collect();
        let c = window_counts(&ds, Window::new(850e-9, 300e-9), 2).unwrap();
        assert_eq!((c.p1(), c.p2(), c.c12(0), c.c12(1)), (0.0, 0.0, Some(0.0), Some(0.0)));
        assert!(!g2_of_n(&c, 0).defined);
    }

    #[test]
    fn single_click_trial() {
        let mut ds = TimeTagDataset::new(info());
        ds.records = vec![trigger(0), click(0, 1_000_000, Channel::D1)];
        let c = window_counts(&ds, Window::new(850e-9, 300e-9), 0).unwrap();
        assert_eq!((c.p1(), c.p2()), (1.0, 0.0));
    }

    #[test]
    fn lagged_coincidences_are_symmetrized() {
        let mut ds = TimeTagDataset::new(info());
        ds.records = vec![
            trigger(0),
            click(0, 1_000_000, Channel::D1),
            trigger(1),
            trigger(2),
            click(2, 1_000_000, Channel::D2),
            click(2, 1_100_000, Channel::D1),
        ];
        let c = window_counts(&ds, Window::new(850e-9, 300e-9), 2).unwrap();
        assert_eq!(c.coincidences[&0], 2);
        assert_eq!(c.coincidences[&1], 0);
        assert_eq!(c.coincidences[&2], 1);
        assert_eq!(c.c12(0), Some(2.0 / 6.0));
        assert_eq!(c.c12(2), Some(0.5));
    }

    #[test]
    fn clicks_outside_the_window_are_ignored() {
        let mut ds = TimeTagDataset::new(info());
        ds.records = vec![trigger(0), click(0, 100_000, Channel::D1), click(0, 2_000_000, Channel::D2)];
        let c = window_counts(&ds, Window::new(850e-9, 300e-9), 0).unwrap();
        assert_eq!(c.fired_any, 0);
        assert!(matches!(
            window_counts(&ds, Window::new(3.9e-6, 2e-7), 0),
            Err(AnalysisError::Window { .. })
        ));
    }

    #[test]
    fn mixing_model_limits() {
        assert!((noise_mixed_g2(0.20, 11.0) - 0.328).abs() < 1e-3);
        assert_eq!(noise_mixed_g2(0.3, f64::INFINITY), 0.3);
        assert!((noise_mixed_g2(0.0, 1.0) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn histogram_csv_header() {
        let mut h = Histogram::new(0.0, 1e-9, 3);
        h.add(1.5e-9);
        let mut out = Vec::new();
        h.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "bin_start_ps,count\n0,0\n1000,1\n2000,0\n");
    }
}
