//! Method-of-lines integration: classical RK4 in time for the spin wave,
//! with the signal rebuilt at every stage by trapezoidal marching in `z`
//! (the signal equation has no time derivative in the co-moving frame).

use super::{ControlPulse, MemoryConfig, MemoryError};
use crate::signal::{trapezoid, Envelope};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Complex spin-wave amplitude on the `z` nodes of the medium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinWave {
    pub samples: Vec<Complex64>,
}

impl SpinWave {
    pub fn new(samples: Vec<Complex64>) -> Self {
        Self { samples }
    }

    pub fn uniform(nz: usize, energy: f64) -> Self {
        Self::new(vec![Complex64::new(energy.sqrt(), 0.0); nz])
    }

    pub fn nz(&self) -> usize {
        self.samples.len()
    }

    /// `∫|S|² dz` over `z ∈ [0, 1]`.
    pub fn energy(&self) -> f64 {
        let n = self.samples.len();
        if n < 2 {
            return 0.0;
        }
        let w: Vec<f64> = self.samples.iter().map(|s| s.norm_sqr()).collect();
        trapezoid(&w, 1.0 / (n - 1) as f64)
    }

    /// Energy-weighted mean position; 0.5 for a uniform spin wave, lower
    /// when the excitation sits near the entrance face.
    pub fn centroid(&self) -> f64 {
        let n = self.samples.len();
        let h = 1.0 / (n - 1) as f64;
        let w: Vec<f64> = self.samples.iter().map(|s| s.norm_sqr()).collect();
        let zw: Vec<f64> = w.iter().enumerate().map(|(j, v)| v * j as f64 * h).collect();
        trapezoid(&zw, h) / trapezoid(&w, h)
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self::new(self.samples.iter().map(|s| s * c).collect())
    }
}

/// Photon-number bookkeeping of one storage cycle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NormLedger {
    pub input: f64,
    pub transmitted: f64,
    pub stored: f64,
    pub retrieved: f64,
}

impl NormLedger {
    /// Energy scattered out of the two modes during the write stage.
    pub fn write_loss(&self) -> f64 {
        self.input - self.transmitted - self.stored
    }
}

#[derive(Debug, Clone)]
pub struct WriteOutcome {
    pub spin_wave: SpinWave,
    /// Field at the exit face, `E(z = 1, t)`.
    pub transmitted: Envelope,
    pub eta_w: f64,
    pub ledger: NormLedger,
}

#[derive(Debug, Clone)]
pub struct ReadOutcome {
    pub retrieved: Envelope,
    pub eta_r: f64,
}

struct Medium {
    nz: usize,
    h: f64,
    /// `d·Γ₀ / (γ + iΔ)`
    absorption: Complex64,
    coupling: f64,
    inv_den: Complex64,
    gamma_s: f64,
    delta2: f64,
    cfg: MemoryConfig,
}

impl Medium {
    fn new(cfg: &MemoryConfig, delta2: f64) -> Self {
        let inv_den = 1.0 / cfg.denominator();
        Self {
            nz: cfg.grid.nz,
            h: 1.0 / (cfg.grid.nz - 1) as f64,
            absorption: cfg.optical_depth * cfg.od_linewidth * inv_den,
            coupling: cfg.coupling(),
            inv_den,
            gamma_s: cfg.gamma_s,
            delta2,
            cfg: cfg.clone(),
        }
    }

    /// Marches `∂z E = −a·E − b·S` from the entrance face with the
    /// implicit trapezoidal rule.
    fn field(&self, s: &[Complex64], e0: Complex64, rabi: f64, e: &mut [Complex64]) {
        let b = self.coupling * rabi * self.inv_den;
        let half = 0.5 * self.h;
        let keep = (1.0 - half * self.absorption) / (1.0 + half * self.absorption);
        let drive = half * b / (1.0 + half * self.absorption);
        e[0] = e0;
        for j in 0..self.nz - 1 {
            e[j + 1] = keep * e[j] - drive * (s[j] + s[j + 1]);
        }
    }

    fn rhs(&self, s: &[Complex64], e: &[Complex64], rabi: f64, ds: &mut [Complex64]) {
        let mut detuning = self.delta2;
        if self.cfg.compensate_light_shift {
            detuning -= self.cfg.light_shift(rabi);
        }
        let own = Complex64::new(self.gamma_s, detuning) + rabi * rabi * self.inv_den;
        let cross = self.coupling * rabi * self.inv_den;
        for j in 0..self.nz {
            ds[j] = -own * s[j] - cross * e[j];
        }
    }
}

/// Integrates the coupled equations over `nt` points starting at `t0`.
/// Returns the final spin wave and the exit-face field at every grid time.
fn integrate(
    medium: &Medium,
    pulse: &ControlPulse,
    input: impl Fn(f64) -> Complex64,
    mut s: Vec<Complex64>,
    t0: f64,
    dt: f64,
    nt: usize,
) -> (Vec<Complex64>, Vec<Complex64>) {
    let nz = medium.nz;
    let mut out = Vec::with_capacity(nt);
    let mut e = vec![ZERO; nz];
    let mut tmp = vec![ZERO; nz];
    let mut k1 = vec![ZERO; nz];
    let mut k2 = vec![ZERO; nz];
    let mut k3 = vec![ZERO; nz];
    let mut k4 = vec![ZERO; nz];

    for step in 0..nt {
        let t = t0 + step as f64 * dt;
        let rabi = pulse.rabi(t);
        medium.field(&s, input(t), rabi, &mut e);
        out.push(e[nz - 1]);
        if step + 1 == nt {
            break;
        }
        medium.rhs(&s, &e, rabi, &mut k1);

        let tm = t + 0.5 * dt;
        let (rabi_m, e_m) = (pulse.rabi(tm), input(tm));
        for j in 0..nz {
            tmp[j] = s[j] + 0.5 * dt * k1[j];
        }
        medium.field(&tmp, e_m, rabi_m, &mut e);
        medium.rhs(&tmp, &e, rabi_m, &mut k2);
        for j in 0..nz {
            tmp[j] = s[j] + 0.5 * dt * k2[j];
        }
        medium.field(&tmp, e_m, rabi_m, &mut e);
        medium.rhs(&tmp, &e, rabi_m, &mut k3);

        let t1 = t + dt;
        let rabi_1 = pulse.rabi(t1);
        for j in 0..nz {
            tmp[j] = s[j] + dt * k3[j];
        }
        medium.field(&tmp, input(t1), rabi_1, &mut e);
        medium.rhs(&tmp, &e, rabi_1, &mut k4);

        for j in 0..nz {
            s[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }
    (s, out)
}

fn check_resolution(cfg: &MemoryConfig, pulse: &ControlPulse) -> Result<(), MemoryError> {
    cfg.validate()?;
    pulse.validate()?;
    let dt = cfg.grid.dt;
    if dt > pulse.feature_time() / 4.0 {
        return Err(MemoryError::GridResolution(format!(
            "dt = {:.3e} s does not resolve control features of {:.3e} s",
            dt,
            pulse.feature_time()
        )));
    }
    let den = cfg.denominator().norm();
    let rabi = pulse.peak();
    let rate = rabi * rabi / den * (1.0 + cfg.optical_depth * cfg.od_linewidth / den);
    if dt * rate > 2.0 {
        return Err(MemoryError::GridResolution(format!(
            "dt·(light-shift rate) = {:.2} exceeds the RK4 stability margin",
            dt * rate
        )));
    }
    Ok(())
}

/// Maps an input photon onto the spin wave with a write control pulse.
///
/// The integration spans the union of the input record and the control
/// pulse on a grid aligned with the input samples.
pub fn solve_write(
    e_in: &Envelope,
    pulse: &ControlPulse,
    cfg: &MemoryConfig,
) -> Result<WriteOutcome, MemoryError> {
    check_resolution(cfg, pulse)?;
    let input_energy = e_in.energy();
    if (input_energy - 1.0).abs() > 1e-6 {
        return Err(MemoryError::NotNormalized(input_energy));
    }
    let dt = cfg.grid.dt;
    let lead = ((e_in.t0 - pulse.t_start) / dt).ceil().max(0.0);
    let t0 = e_in.t0 - lead * dt;
    let t1 = e_in.t_end().max(pulse.t_end());
    let nt = ((t1 - t0) / dt).ceil() as usize + 1;

    let medium = Medium::new(cfg, cfg.two_photon_detuning);
    let (s, exit) = integrate(
        &medium,
        pulse,
        |t| e_in.at(t),
        vec![ZERO; cfg.grid.nz],
        t0,
        dt,
        nt,
    );
    let spin_wave = SpinWave::new(s);
    let transmitted = Envelope::new(t0, dt, exit);
    let grid_input: Vec<f64> = (0..nt).map(|k| e_in.at(t0 + k as f64 * dt).norm_sqr()).collect();
    let eta_w = spin_wave.energy();
    let ledger = NormLedger {
        input: trapezoid(&grid_input, dt),
        transmitted: transmitted.energy(),
        stored: eta_w,
        retrieved: 0.0,
    };
    Ok(WriteOutcome { spin_wave, transmitted, eta_w, ledger })
}

/// Forward retrieval of a stored spin wave with a read control pulse.
pub fn solve_read(
    spin_wave: &SpinWave,
    pulse: &ControlPulse,
    cfg: &MemoryConfig,
) -> Result<ReadOutcome, MemoryError> {
    check_resolution(cfg, pulse)?;
    if spin_wave.nz() != cfg.grid.nz {
        return Err(MemoryError::Config(format!(
            "spin wave has {} nodes, grid expects {}",
            spin_wave.nz(),
            cfg.grid.nz
        )));
    }
    let stored = spin_wave.energy();
    if !(stored > 0.0) {
        return Err(MemoryError::EmptySpinWave);
    }
    let dt = cfg.grid.dt;
    let nt = (pulse.duration / dt).ceil() as usize + 1;
    // Retrieval happens at the bare two-photon resonance of the read control.
    let medium = Medium::new(cfg, 0.0);
    let (_, exit) = integrate(
        &medium,
        pulse,
        |_| ZERO,
        spin_wave.samples.clone(),
        pulse.t_start,
        dt,
        nt,
    );
    let retrieved = Envelope::new(pulse.t_start, dt, exit);
    let eta_r = retrieved.energy() / stored;
    Ok(ReadOutcome { retrieved, eta_r })
}

/// Efficiency factor `exp(−t²/τ²)·(1 − A + A·cos ωt)` after storing for `t`.
pub fn storage_factor(t_store: f64, cfg: &MemoryConfig) -> f64 {
    let osc = cfg.oscillation;
    let gauss = (-(t_store / cfg.lifetime).powi(2)).exp();
    gauss * (1.0 - osc.amplitude + osc.amplitude * (osc.omega * t_store).cos())
}

/// Uniform decay of the stored excitation; the amplitude is scaled by the
/// square root of [`storage_factor`].
pub fn apply_storage_decay(spin_wave: &SpinWave, t_store: f64, cfg: &MemoryConfig) -> SpinWave {
    let f = storage_factor(t_store.max(0.0), cfg).max(0.0).sqrt();
    spin_wave.scaled(Complex64::new(f, 0.0))
}

/// A complete write / store / read cycle.
#[derive(Debug, Clone)]
pub struct MemoryRun {
    pub write: WriteOutcome,
    pub read: ReadOutcome,
    pub storage_time: f64,
    pub storage_factor: f64,
    pub eta_w: f64,
    /// `eta_wr / eta_w`: retrieval relative to the freshly written spin wave,
    /// so it includes the storage decay.
    pub eta_r: f64,
    /// End-to-end `∫|E_out|² / ∫|E_in|²`.
    pub eta_wr: f64,
    /// `∫|E_trans|² / ∫|E_in|²`.
    pub transmission: f64,
}

/// Writes, stores for `read.t_start − write.t_start`, and reads.
pub fn run_memory(
    e_in: &Envelope,
    write: &ControlPulse,
    read: &ControlPulse,
    cfg: &MemoryConfig,
) -> Result<MemoryRun, MemoryError> {
    let w = solve_write(e_in, write, cfg)?;
    let storage_time = (read.t_start - write.t_start).max(0.0);
    let factor = storage_factor(storage_time, cfg);
    let stored = apply_storage_decay(&w.spin_wave, storage_time, cfg);
    let r = solve_read(&stored, read, cfg)?;
    let input = w.ledger.input;
    let eta_wr = r.retrieved.energy() / input;
    let transmission = w.ledger.transmitted / input;
    let mut write = w;
    write.ledger.retrieved = r.retrieved.energy();
    Ok(MemoryRun {
        eta_w: write.eta_w,
        eta_r: if write.eta_w > 0.0 { eta_wr / write.eta_w } else { 0.0 },
        eta_wr,
        transmission,
        storage_time,
        storage_factor: factor,
        write,
        read: r,
    })
}
