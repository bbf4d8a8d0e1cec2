use super::{solve_read, solve_write, ControlPulse, MemoryConfig, MemoryError, SpinWave};
use crate::signal::Envelope;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// One point of the two-photon detuning spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub delta2: f64,
    pub eta_w: f64,
    pub eta_r: f64,
    pub eta_wr: f64,
    pub transmission: f64,
}

/// Runs the full write/read cycle at each two-photon detuning.
pub fn sweep_detuning(
    delta2_list: &[f64],
    cfg: &MemoryConfig,
    e_in: &Envelope,
    write: &ControlPulse,
    read: &ControlPulse,
) -> Result<Vec<SpectrumPoint>, MemoryError> {
    if delta2_list.is_empty() {
        return Err(MemoryError::EmptySweep);
    }
    delta2_list
        .par_iter()
        .map(|&delta2| {
            let mut c = cfg.clone();
            c.two_photon_detuning = delta2;
            let w = solve_write(e_in, write, &c)?;
            let (eta_r, eta_wr) = read_back(&w.spin_wave, write, read, &c)?;
            Ok(SpectrumPoint {
                delta2,
                eta_w: w.eta_w,
                eta_r,
                eta_wr,
                transmission: w.ledger.transmitted / w.ledger.input,
            })
        })
        .collect()
}

fn read_back(
    spin_wave: &SpinWave,
    write: &ControlPulse,
    read: &ControlPulse,
    cfg: &MemoryConfig,
) -> Result<(f64, f64), MemoryError> {
    let stored = spin_wave.energy();
    if stored <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let t_store = (read.t_start - write.t_start).max(0.0);
    let decayed = super::apply_storage_decay(spin_wave, t_store, cfg);
    let r = solve_read(&decayed, read, cfg)?;
    let out = r.retrieved.energy();
    Ok((out / stored, out))
}

/// Temporal beam-splitter figures at one write power.
///
/// The efficiencies are the operational ones a detector sees: `T_ref` is the
/// transmission through the atoms with the control off, and
/// `eta_w = 1 − T/T_ref`, `eta_wr = R/T_ref`, so that
/// `s_over_t = eta_wr / (1 − eta_w) = R/T` and
/// `survival = eta_wr + 1 − eta_w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitterPoint {
    pub power: f64,
    pub eta_w: f64,
    /// `eta_wr / eta_w`; undefined when nothing is written.
    pub eta_r: Option<f64>,
    pub eta_wr: f64,
    /// `f64::INFINITY` when nothing is transmitted.
    pub s_over_t: f64,
    pub s_over_t_infinite: bool,
    pub survival: f64,
    /// `∫|S|² dz` right after the write pulse.
    pub spin_wave_energy: f64,
    /// Mean position of the spin wave along the medium.
    pub spin_wave_centroid: Option<f64>,
    /// Read efficiency of the written spin wave, `∫|E_out|² / ∫|S|²`.
    pub intrinsic_eta_r: Option<f64>,
}

/// Sweeps the write control power (`power_scale` of `write`).
pub fn sweep_write_power(
    powers: &[f64],
    cfg: &MemoryConfig,
    e_in: &Envelope,
    write: &ControlPulse,
    read: &ControlPulse,
) -> Result<Vec<SplitterPoint>, MemoryError> {
    if powers.is_empty() {
        return Err(MemoryError::EmptySweep);
    }
    if powers.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(MemoryError::Pulse("powers must be finite and ≥ 0".into()));
    }
    if powers.windows(2).any(|w| w[1] < w[0]) {
        return Err(MemoryError::Pulse("powers must be sorted".into()));
    }
    let reference = solve_write(e_in, &write.clone().with_power(0.0), cfg)?;
    let t_ref = reference.ledger.transmitted / reference.ledger.input;

    powers
        .par_iter()
        .map(|&power| {
            let pulse = write.clone().with_power(power);
            let w = solve_write(e_in, &pulse, cfg)?;
            let t = w.ledger.transmitted / w.ledger.input;
            let (intrinsic, retrieved) = read_back(&w.spin_wave, &pulse, read, cfg)?;
            let stored = w.spin_wave.energy();
            let eta_w = 1.0 - t / t_ref;
            let eta_wr = retrieved / t_ref;
            let infinite = t <= 0.0;
            let s_over_t = if infinite { f64::INFINITY } else { retrieved / t };
            Ok(SplitterPoint {
                power,
                eta_w,
                eta_r: (eta_w > 0.0).then(|| eta_wr / eta_w),
                eta_wr,
                s_over_t,
                s_over_t_infinite: infinite,
                survival: eta_wr + 1.0 - eta_w,
                spin_wave_energy: stored,
                spin_wave_centroid: (stored > 0.0).then(|| w.spin_wave.centroid()),
                intrinsic_eta_r: (stored > 0.0).then_some(intrinsic),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadPowerPoint {
    pub power: f64,
    pub eta_r: f64,
    /// FWHM of the retrieved intensity; `None` if it does not fit the read window.
    pub fwhm: Option<f64>,
}

/// Reads the same spin wave with a range of read powers.
pub fn sweep_read_power(
    powers: &[f64],
    spin_wave: &SpinWave,
    read: &ControlPulse,
    cfg: &MemoryConfig,
) -> Result<Vec<ReadPowerPoint>, MemoryError> {
    if powers.is_empty() {
        return Err(MemoryError::EmptySweep);
    }
    powers
        .par_iter()
        .map(|&power| {
            let r = solve_read(spin_wave, &read.clone().with_power(power), cfg)?;
            Ok(ReadPowerPoint { power, eta_r: r.eta_r, fwhm: r.retrieved.fwhm() })
        })
        .collect()
}

/// A row of the sweep CSV. Missing quantities are written as empty cells.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SweepRow {
    pub parameter: f64,
    pub eta_w: Option<f64>,
    pub eta_r: Option<f64>,
    pub eta_wr: Option<f64>,
    pub s_over_t: Option<f64>,
    pub survival: Option<f64>,
}

impl From<&SpectrumPoint> for SweepRow {
    fn from(p: &SpectrumPoint) -> Self {
        Self {
            parameter: p.delta2,
            eta_w: Some(p.eta_w),
            eta_r: Some(p.eta_r),
            eta_wr: Some(p.eta_wr),
            s_over_t: (p.transmission > 0.0).then(|| p.eta_wr / p.transmission),
            survival: Some(p.eta_wr + p.transmission),
        }
    }
}

impl From<&SplitterPoint> for SweepRow {
    fn from(p: &SplitterPoint) -> Self {
        Self {
            parameter: p.power,
            eta_w: Some(p.eta_w),
            eta_r: p.eta_r,
            eta_wr: Some(p.eta_wr),
            s_over_t: Some(p.s_over_t),
            survival: Some(p.survival),
        }
    }
}

impl From<&ReadPowerPoint> for SweepRow {
    fn from(p: &ReadPowerPoint) -> Self {
        Self { parameter: p.power, eta_r: Some(p.eta_r), ..Self::default() }
    }
}

/// Writes `<parameter>,eta_w,eta_r,eta_wr,s_over_t,survival`, naming the
/// first column `parameter`.
pub fn write_csv<W: Write>(rows: &[SweepRow], parameter: &str, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([parameter, "eta_w", "eta_r", "eta_wr", "s_over_t", "survival"])?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            format!("{}", r.parameter),
            cell(r.eta_w),
            cell(r.eta_r),
            cell(r.eta_wr),
            cell(r.s_over_t),
            cell(r.survival),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_blank_cells() {
        let rows = [SweepRow { parameter: 0.0, eta_w: Some(0.0), survival: Some(1.0), ..SweepRow::default() }];
        let mut buf = Vec::new();
        write_csv(&rows, "parameter", &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "parameter,eta_w,eta_r,eta_wr,s_over_t,survival\n0,0,,,,1\n");
    }

    #[test]
    fn infinite_ratio_is_written_as_inf() {
        let rows = [SweepRow { parameter: 1.0, s_over_t: Some(f64::INFINITY), ..SweepRow::default() }];
        let mut buf = Vec::new();
        write_csv(&rows, "parameter", &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains(",inf,"));
        assert!(text.starts_with("parameter,"));
    }
}
