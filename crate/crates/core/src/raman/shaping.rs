use super::{solve_read, ControlPulse, MemoryConfig, MemoryError, SpinWave};
use crate::signal::{trapezoid, Envelope};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapingOptions {
    /// Stop once the normalized L² mismatch drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Spacing of the piecewise-linear control table, s.
    pub knot_spacing: f64,
    /// Ceiling on the control Rabi frequency, rad/s.
    pub max_rabi: f64,
}

impl Default for ShapingOptions {
    fn default() -> Self {
        Self {
            tolerance: 0.05,
            max_iterations: 20,
            knot_spacing: 2e-9,
            max_rabi: 2.0 * PI * 150e6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShapingOutcome {
    pub pulse: ControlPulse,
    pub retrieved: Envelope,
    pub mismatch: f64,
    /// Number of read solves performed.
    pub iterations: usize,
    pub converged: bool,
    /// Largest output energy a complete read of this spin wave delivers.
    pub achievable: f64,
}

/// Relative L² distance between two intensity profiles after normalizing
/// each to unit area, evaluated on the grid of `target`.
pub fn normalized_mismatch(achieved: &Envelope, target: &Envelope) -> f64 {
    let b: Vec<f64> = target.intensity();
    let a: Vec<f64> = target.times().map(|t| achieved.at(t).norm_sqr()).collect();
    let (sa, sb) = (a.iter().sum::<f64>(), b.iter().sum::<f64>());
    if sa <= 0.0 || sb <= 0.0 {
        return f64::INFINITY;
    }
    let num: f64 = a.iter().zip(&b).map(|(x, y)| (x / sa - y / sb).powi(2)).sum();
    let den: f64 = b.iter().map(|y| (y / sb).powi(2)).sum();
    (num / den).sqrt()
}

/// Finds a read control whose retrieved intensity follows `target`.
///
/// `target` carries the requested output in photon-flux units; its energy
/// must not exceed what a complete read of `spin_wave` can deliver. The first
/// guess treats emission as a single-pole process, `|Ω|² ∝ q/(A − ∫q)`, and
/// each further pass re-solves the read and corrects the local emission
/// rate from the achieved output.
pub fn shape_readout(
    target: &Envelope,
    spin_wave: &SpinWave,
    cfg: &MemoryConfig,
    opts: &ShapingOptions,
) -> Result<ShapingOutcome, MemoryError> {
    let requested = target.energy();
    if !(requested.is_finite() && requested > 0.0) || target.len() < 2 {
        return Err(MemoryError::Config("target profile is not normalizable".into()));
    }
    let stored = spin_wave.energy();
    if !(stored > 0.0) {
        return Err(MemoryError::EmptySpinWave);
    }
    let span = target.t_end() - target.t0;
    let probe = ControlPulse::square(2.0 * PI * 60e6, target.t0, span.max(300e-9), 10e-9);
    let achievable = solve_read(spin_wave, &probe, cfg)?.retrieved.energy();
    if requested > achievable {
        return Err(MemoryError::Unreachable { requested, achievable });
    }

    let n_knots = (span / opts.knot_spacing).ceil() as usize + 1;
    let h = span / (n_knots - 1) as f64;
    let times: Vec<f64> = (0..n_knots).map(|k| target.t0 + k as f64 * h).collect();
    let q: Vec<f64> = times.iter().map(|&t| target.at(t).norm_sqr()).collect();
    let q_cum = cumulative(&q, h);
    let floor = 1e-3 * achievable;
    let cap = opts.max_rabi * opts.max_rabi;

    // Emission rate per unit |Ω|² of a thin uniform excitation.
    let kappa0 = cfg.optical_depth * cfg.od_linewidth / cfg.denominator().norm_sqr();
    let mut kappa = vec![kappa0; n_knots];
    let drive = |kappa: &[f64]| -> Vec<f64> {
        (0..n_knots)
            .map(|k| (q[k] / (kappa[k] * (achievable - q_cum[k]).max(floor))).min(cap))
            .collect()
    };
    let mut rabi2 = drive(&kappa);

    let mut best: Option<ShapingOutcome> = None;
    for iteration in 1..=opts.max_iterations {
        let values: Vec<f64> = rabi2.iter().map(|r| r.sqrt()).collect();
        let pulse = ControlPulse::table(&times, &values)?;
        let retrieved = solve_read(spin_wave, &pulse, cfg)?.retrieved;
        let mismatch = normalized_mismatch(&retrieved, target);
        let converged = mismatch < opts.tolerance;
        if best.as_ref().is_none_or(|b| mismatch < b.mismatch) {
            best = Some(ShapingOutcome {
                pulse,
                retrieved: retrieved.clone(),
                mismatch,
                iterations: iteration,
                converged,
                achievable,
            });
        }
        if let Some(b) = best.as_mut() {
            b.iterations = iteration;
        }
        if converged {
            break;
        }

        let a: Vec<f64> = times.iter().map(|&t| retrieved.at(t).norm_sqr()).collect();
        let a_cum = cumulative(&a, h);
        let a_max = a.iter().cloned().fold(0.0, f64::max);
        let measured: Vec<Option<f64>> = (0..n_knots)
            .map(|k| {
                (rabi2[k] > 0.0 && a[k] > 1e-4 * a_max)
                    .then(|| a[k] / (rabi2[k] * (achievable - a_cum[k]).max(floor)))
            })
            .collect();
        if measured.iter().all(Option::is_none) {
            break;
        }
        kappa = fill_gaps(&measured);
        rabi2 = drive(&kappa);
    }
    Ok(best.expect("at least one iteration"))
}

fn cumulative(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    out.push(0.0);
    for k in 1..values.len() {
        out.push(out[k - 1] + trapezoid(&values[k - 1..=k], h));
    }
    out
}

/// Replaces missing entries with the nearest measured one.
fn fill_gaps(measured: &[Option<f64>]) -> Vec<f64> {
    let n = measured.len();
    let mut out = vec![0.0; n];
    let mut last = measured.iter().flatten().next().copied().unwrap_or(0.0);
    for k in 0..n {
        if let Some(v) = measured[k] {
            last = v;
        }
        out[k] = last;
    }
    // Gaps are closed from the nearer side.
    let mut next: Option<(usize, f64)> = None;
    for k in (0..n).rev() {
        match measured[k] {
            Some(v) => next = Some((k, v)),
            None => {
                let prev = (0..k).rev().find(|&j| measured[j].is_some());
                if let Some((j, v)) = next {
                    if prev.is_none_or(|p| j - k < k - p) {
                        out[k] = v;
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn mismatch_ignores_overall_scale() {
        let t = Envelope::from_fn(0.0, 1.0, 50, |t| Complex64::new((-(t - 25.0).powi(2) / 40.0).exp(), 0.0));
        let a = t.scaled(Complex64::new(0.3, 0.0));
        assert!(normalized_mismatch(&a, &t) < 1e-12);
        let shifted = Envelope::new(5.0, 1.0, t.samples.clone());
        assert!(normalized_mismatch(&shifted, &t) > 0.5);
    }

    #[test]
    fn gaps_take_the_nearest_value() {
        let m = [None, Some(1.0), None, None, None, Some(5.0), None];
        assert_eq!(fill_gaps(&m), vec![1.0, 1.0, 1.0, 1.0, 5.0, 5.0, 5.0]);
    }
}
