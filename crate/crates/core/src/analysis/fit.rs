//! Weighted nonlinear least squares for the lifetime and waveshape models.

use super::{Estimate, Histogram};
use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DMatrix, DVector, Dyn, Owned};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};
use std::f64::consts::{LN_2, PI};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least {needed} data points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("fit did not converge ({reason}); final residual norm {residual_norm:.3e}")]
    NoConvergence { reason: String, residual_norm: f64, residuals: Vec<f64> },
    #[error("histogram has {peaks} separated peaks; request time-bin mode to fit two")]
    Ambiguous { peaks: usize },
    #[error("time-bin mode expects two peaks, found {peaks}")]
    NotTwoPeaks { peaks: usize },
    #[error("invalid fit input: {0}")]
    Invalid(String),
}

/// A model `y = f(t; p)` with an analytic gradient in `p`.
pub trait Model {
    fn n_params(&self) -> usize;
    fn eval(&self, p: &[f64], t: f64) -> f64;
    fn gradient(&self, p: &[f64], t: f64, out: &mut [f64]);
}

/// Central-difference gradient, used to check the analytic ones.
pub fn numerical_gradient<M: Model>(model: &M, p: &[f64], t: f64) -> Vec<f64> {
    let mut q = p.to_vec();
    (0..p.len())
        .map(|k| {
            let h = 1e-6 * p[k].abs().max(1e-3);
            q[k] = p[k] + h;
            let up = model.eval(&q, t);
            q[k] = p[k] - h;
            let down = model.eval(&q, t);
            q[k] = p[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

struct Problem<'a, M: Model> {
    model: &'a M,
    t: &'a [f64],
    y: &'a [f64],
    inv_sigma: &'a [f64],
    p: DVector<f64>,
}

impl<M: Model> LeastSquaresProblem<f64, Dyn, Dyn> for Problem<'_, M> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, Dyn>;
    type ParameterStorage = Owned<f64, Dyn>;

    fn set_params(&mut self, x: &DVector<f64>) {
        self.p.copy_from(x);
    }

    fn params(&self) -> DVector<f64> {
        self.p.clone()
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        let p = self.p.as_slice();
        Some(DVector::from_iterator(
            self.t.len(),
            (0..self.t.len()).map(|i| (self.model.eval(p, self.t[i]) - self.y[i]) * self.inv_sigma[i]),
        ))
    }

    fn jacobian(&self) -> Option<DMatrix<f64>> {
        let n = self.model.n_params();
        let p = self.p.as_slice();
        let mut j = DMatrix::zeros(self.t.len(), n);
        let mut g = vec![0.0; n];
        for i in 0..self.t.len() {
            self.model.gradient(p, self.t[i], &mut g);
            for k in 0..n {
                j[(i, k)] = g[k] * self.inv_sigma[i];
            }
        }
        Some(j)
    }
}

/// Result of [`least_squares`]. `covariance` is `(JᵀJ)⁻¹` in units of the
/// supplied errors; multiply by `reduced_chi2` for scaled errors.
#[derive(Debug, Clone)]
pub struct LsqOutcome {
    pub params: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// Weighted residual sum of squares.
    pub chi2: f64,
    pub dof: usize,
    pub evaluations: usize,
}

impl LsqOutcome {
    pub fn reduced_chi2(&self) -> f64 {
        if self.dof > 0 {
            self.chi2 / self.dof as f64
        } else {
            f64::NAN
        }
    }

    /// 1σ error of parameter `k`, scaled by the reduced χ² when `scaled`.
    pub fn error(&self, k: usize, scaled: bool) -> f64 {
        let s = if scaled { self.reduced_chi2().max(0.0) } else { 1.0 };
        (self.covariance[(k, k)] * s).max(0.0).sqrt()
    }
}

pub fn least_squares<M: Model>(
    model: &M,
    t: &[f64],
    y: &[f64],
    sigma: &[f64],
    p0: &[f64],
) -> Result<LsqOutcome, FitError> {
    let n = model.n_params();
    if t.len() != y.len() || t.len() != sigma.len() || p0.len() != n {
        return Err(FitError::Invalid("length mismatch".into()));
    }
    if t.len() <= n {
        return Err(FitError::InsufficientData { needed: n + 1, got: t.len() });
    }
    if sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(FitError::Invalid("errors must be positive".into()));
    }
    let inv_sigma: Vec<f64> = sigma.iter().map(|s| 1.0 / s).collect();
    let problem = Problem { model, t, y, inv_sigma: &inv_sigma, p: DVector::from_column_slice(p0) };
    let (problem, report) = LevenbergMarquardt::new().with_patience(400).minimize(problem);
    let residuals = problem.residuals().expect("residuals are always available");
    let chi2 = residuals.norm_squared();
    if !report.termination.was_successful() || !chi2.is_finite() {
        return Err(FitError::NoConvergence {
            reason: format!("{:?}", report.termination),
            residual_norm: chi2.sqrt(),
            residuals: residuals.as_slice().to_vec(),
        });
    }
    let j = problem.jacobian().expect("jacobian is always available");
    let covariance = (j.transpose() * &j)
        .try_inverse()
        .unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN));
    Ok(LsqOutcome {
        params: problem.p.as_slice().to_vec(),
        covariance,
        chi2,
        dof: t.len() - n,
        evaluations: report.number_of_evaluations,
    })
}

/// `eta0·exp(−u·t²)·(1 − A + A·cos ωt)` with `u = 1/τ²`.
/// Parameters `[eta0, u]`, or `[eta0, u, A, ω]` with the oscillation.
#[derive(Debug, Clone, Copy)]
pub struct LifetimeModel {
    pub oscillation: bool,
}

impl Model for LifetimeModel {
    fn n_params(&self) -> usize {
        if self.oscillation {
            4
        } else {
            2
        }
    }

    fn eval(&self, p: &[f64], t: f64) -> f64 {
        let g = p[0] * (-p[1] * t * t).exp();
        if self.oscillation {
            g * (1.0 - p[2] + p[2] * (p[3] * t).cos())
        } else {
            g
        }
    }

    fn gradient(&self, p: &[f64], t: f64, out: &mut [f64]) {
        let e = (-p[1] * t * t).exp();
        let osc = if self.oscillation { 1.0 - p[2] + p[2] * (p[3] * t).cos() } else { 1.0 };
        out[0] = e * osc;
        out[1] = -t * t * p[0] * e * osc;
        if self.oscillation {
            out[2] = p[0] * e * ((p[3] * t).cos() - 1.0);
            out[3] = -p[0] * e * p[2] * t * (p[3] * t).sin();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeFit {
    pub eta0: Estimate,
    /// `f64::INFINITY` when `unbounded`.
    pub tau: Estimate,
    pub amplitude: Estimate,
    pub omega: Estimate,
    /// The oscillation term passed the F-test and is included.
    pub oscillation: bool,
    /// p-value of the F-test for adding the oscillation, corrected for the
    /// search over ω.
    pub f_test_p: f64,
    /// The data do not resolve a decay (`1/τ²` compatible with zero).
    pub unbounded: bool,
    pub reduced_chi2: f64,
}

/// Fits the storage-time decay. `sigma` defaults to uniform weights, in
/// which case errors are scaled by the reduced χ².
pub fn fit_lifetime(points: &[(f64, f64)], sigma: Option<&[f64]>) -> Result<LifetimeFit, FitError> {
    if points.len() < 5 {
        return Err(FitError::InsufficientData { needed: 5, got: points.len() });
    }
    let scale = points.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
    if !(scale > 0.0) || points.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
        return Err(FitError::Invalid("storage times must be finite and not all zero".into()));
    }
    // Work in units of the longest storage time.
    let t: Vec<f64> = points.iter().map(|p| p.0 / scale).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let uniform = sigma.is_none();
    let s: Vec<f64> = match sigma {
        Some(s) if s.len() == y.len() => s.to_vec(),
        Some(_) => return Err(FitError::Invalid("sigma length mismatch".into())),
        None => vec![1.0; y.len()],
    };

    let plain = LifetimeModel { oscillation: false };
    let p0 = initial_decay(&t, &y);
    let base = least_squares(&plain, &t, &y, &s, &p0)?;

    let osc_model = LifetimeModel { oscillation: true };
    let (eta0, amp0, omega0, searched) = best_frequency(&t, &y, &s, base.params[1]);
    let with_osc = least_squares(&osc_model, &t, &y, &s, &[eta0, base.params[1], amp0, omega0])
        .ok()
        .filter(|o| o.params[2] > 0.0 && o.params[2] <= 1.0);

    let n = t.len();
    let (chosen, oscillation, f_test_p) = match with_osc {
        Some(o) if n > 4 && o.chi2 < base.chi2 => {
            let f = ((base.chi2 - o.chi2) / 2.0) / (o.chi2 / (n - 4) as f64);
            let dist = FisherSnedecor::new(2.0, (n - 4) as f64).expect("valid degrees of freedom");
            let p = if f.is_finite() { 1.0 - dist.cdf(f) } else { 0.0 };
            // ω was picked from `searched` independent frequencies.
            let p = 1.0 - (1.0 - p).powf(searched);
            if p < 0.05 {
                (o, true, p)
            } else {
                (base, false, p)
            }
        }
        _ => (base, false, 1.0),
    };

    let err = |k: usize| chosen.error(k, uniform);
    let u = chosen.params[1];
    let su = err(1);
    let unbounded = !(u > 0.0) || u < 2.0 * su;
    let tau = if unbounded {
        Estimate::new(f64::INFINITY, f64::INFINITY)
    } else {
        Estimate::new(scale / u.sqrt(), scale * su / (2.0 * u.powf(1.5)))
    };
    let (amplitude, omega) = if oscillation {
        (
            Estimate::new(chosen.params[2], err(2)),
            Estimate::new(chosen.params[3].abs() / scale, err(3) / scale),
        )
    } else {
        (Estimate::new(0.0, 0.0), Estimate::new(0.0, 0.0))
    };
    Ok(LifetimeFit {
        eta0: Estimate::new(chosen.params[0], err(0)),
        tau,
        amplitude,
        omega,
        oscillation,
        f_test_p,
        unbounded,
        reduced_chi2: chosen.reduced_chi2(),
    })
}

/// `[eta0, u]` from a straight line through `(t², ln y)`.
fn initial_decay(t: &[f64], y: &[f64]) -> Vec<f64> {
    let pts: Vec<(f64, f64)> = t.iter().zip(y).filter(|(_, &y)| y > 0.0).map(|(&t, &y)| (t * t, y.ln())).collect();
    let eta_max = y.iter().cloned().fold(f64::MIN, f64::max);
    if pts.len() < 2 {
        return vec![eta_max, 0.1];
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let u = (-slope).max(1e-3);
    vec![(my - slope * mx).exp().max(1e-12), u]
}

/// Grid search over ω with the decay held fixed; for each ω the model is
/// linear in `(eta0, eta0·A)`. Returns `(eta0, A, ω)` of the best point with
/// `0 < A ≤ 1` and the number of independent frequencies in the band.
fn best_frequency(t: &[f64], y: &[f64], s: &[f64], u: f64) -> (f64, f64, f64, f64) {
    let span = t.iter().cloned().fold(0.0, f64::max);
    let mut sorted = t.to_vec();
    sorted.sort_by(f64::total_cmp);
    let step = sorted.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
    let lo = PI / span;
    let hi = PI / step.max(span * 1e-3);
    let mut best = (f64::INFINITY, y[0], 0.0, lo);
    let steps = 2000;
    for k in 0..=steps {
        let w = lo * (hi / lo).powf(k as f64 / steps as f64);
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..t.len() {
            let g = (-u * t[i] * t[i]).exp();
            let h = g * ((w * t[i]).cos() - 1.0);
            let ws = 1.0 / (s[i] * s[i]);
            a11 += ws * g * g;
            a12 += ws * g * h;
            a22 += ws * h * h;
            b1 += ws * g * y[i];
            b2 += ws * h * y[i];
        }
        let det = a11 * a22 - a12 * a12;
        if det.abs() < 1e-300 {
            continue;
        }
        let c1 = (a22 * b1 - a12 * b2) / det;
        let c2 = (a11 * b2 - a12 * b1) / det;
        let rss: f64 = (0..t.len())
            .map(|i| {
                let g = (-u * t[i] * t[i]).exp();
                let r = c1 * g + c2 * g * ((w * t[i]).cos() - 1.0) - y[i];
                r * r / (s[i] * s[i])
            })
            .sum();
        if rss < best.0 && c1 > 0.0 && c2 > 0.0 && c2 <= c1 {
            best = (rss, c1, c2 / c1, w);
        }
    }
    if best.2 == 0.0 {
        best.2 = 0.05;
    }
    (best.1, best.2, best.3, ((hi - lo) * span / PI).max(1.0))
}

/// Sum of `components` pulses with a Gaussian rise and exponential decay,
/// plus a flat background. Parameters are `[b, A₁, t₁, σ₁, τ₁, A₂, …]`.
#[derive(Debug, Clone, Copy)]
pub struct WaveshapeModel {
    pub components: usize,
}

impl WaveshapeModel {
    fn shape(t: f64, t0: f64, sigma: f64, tau: f64) -> f64 {
        let x = t - t0;
        if x < 0.0 {
            (-0.5 * x * x / (sigma * sigma)).exp()
        } else {
            (-x / tau).exp()
        }
    }
}

impl Model for WaveshapeModel {
    fn n_params(&self) -> usize {
        1 + 4 * self.components
    }

    fn eval(&self, p: &[f64], t: f64) -> f64 {
        p[0] + (0..self.components)
            .map(|c| {
                let q = &p[1 + 4 * c..5 + 4 * c];
                q[0] * Self::shape(t, q[1], q[2], q[3])
            })
            .sum::<f64>()
    }

    fn gradient(&self, p: &[f64], t: f64, out: &mut [f64]) {
        out[0] = 1.0;
        for c in 0..self.components {
            let q = &p[1 + 4 * c..5 + 4 * c];
            let o = &mut out[1 + 4 * c..5 + 4 * c];
            let (a, t0, sigma, tau) = (q[0], q[1], q[2], q[3]);
            let g = Self::shape(t, t0, sigma, tau);
            let x = t - t0;
            o[0] = g;
            if x < 0.0 {
                o[1] = a * g * x / (sigma * sigma);
                o[2] = a * g * x * x / sigma.powi(3);
                o[3] = 0.0;
            } else {
                o[1] = a * g / tau;
                o[2] = 0.0;
                o[3] = a * g * x / (tau * tau);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseComponent {
    pub amplitude: Estimate,
    pub peak_time: Estimate,
    pub rise_sigma: Estimate,
    pub decay_tau: Estimate,
    /// `σ·√(2 ln 2) + τ·ln 2`.
    pub fwhm: Estimate,
    pub rise_half_width: Estimate,
    pub decay_half_width: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveshapeFit {
    pub components: Vec<PulseComponent>,
    pub background: Estimate,
    pub reduced_chi2: f64,
}

impl WaveshapeFit {
    pub fn fwhm(&self) -> Estimate {
        self.components[0].fwhm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveshapeMode {
    Single,
    TimeBin,
}

/// Fits the Gaussian-rise / exponential-decay pulse to a count histogram.
/// Times in the result are in seconds after the trigger.
pub fn fit_waveshape(hist: &Histogram, mode: WaveshapeMode) -> Result<WaveshapeFit, FitError> {
    let n = hist.counts.len();
    if n < 12 {
        return Err(FitError::InsufficientData { needed: 12, got: n });
    }
    // Nanoseconds keep the parameters of comparable magnitude.
    let t: Vec<f64> = (0..n).map(|i| hist.bin_center(i) * 1e9).collect();
    let y: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    let s: Vec<f64> = y.iter().map(|&c| c.max(1.0).sqrt()).collect();
    let peaks = find_peaks(&y);
    let components = match mode {
        WaveshapeMode::Single if peaks.len() > 1 => return Err(FitError::Ambiguous { peaks: peaks.len() }),
        WaveshapeMode::Single if peaks.is_empty() => return Err(FitError::Invalid("empty histogram".into())),
        WaveshapeMode::TimeBin if peaks.len() != 2 => return Err(FitError::NotTwoPeaks { peaks: peaks.len() }),
        WaveshapeMode::Single => 1,
        WaveshapeMode::TimeBin => 2,
    };

    let mut sorted = y.clone();
    sorted.sort_by(f64::total_cmp);
    let b0 = sorted[n / 20];
    let mut p0 = vec![b0];
    let width = t[1] - t[0];
    for (k, &i) in peaks.iter().enumerate() {
        // Half-maximum crossings, limited to this peak's side of the others.
        let lo_limit = if k > 0 { (peaks[k - 1] + i) / 2 } else { 0 };
        let hi_limit = if k + 1 < peaks.len() { (peaks[k + 1] + i) / 2 } else { n - 1 };
        let a = y[i] - b0;
        let half = b0 + 0.5 * a;
        let left = (lo_limit..i).rev().find(|&j| y[j] < half).unwrap_or(lo_limit);
        let right = (i..=hi_limit).find(|&j| y[j] < half).unwrap_or(hi_limit);
        let hl = ((i - left) as f64 * width).max(width);
        let hr = ((right - i) as f64 * width).max(width);
        p0.extend([a, t[i], hl / (2.0 * LN_2).sqrt(), hr / LN_2]);
    }
    let model = WaveshapeModel { components };
    let fit = least_squares(&model, &t, &y, &s, &p0)?;
    let cov = |i: usize, j: usize| fit.covariance[(i, j)] * fit.reduced_chi2().max(0.0);
    let err = |k: usize| cov(k, k).max(0.0).sqrt();
    let ns = 1e-9;
    let c = (0..components)
        .map(|c| {
            let k = 1 + 4 * c;
            let (sigma, tau) = (fit.params[k + 2].abs(), fit.params[k + 3]);
            let (ds, dt) = ((2.0 * LN_2).sqrt(), LN_2);
            let fwhm_var = ds * ds * cov(k + 2, k + 2) + dt * dt * cov(k + 3, k + 3) + 2.0 * ds * dt * cov(k + 2, k + 3);
            PulseComponent {
                amplitude: Estimate::new(fit.params[k], err(k)),
                peak_time: Estimate::new(fit.params[k + 1] * ns, err(k + 1) * ns),
                rise_sigma: Estimate::new(sigma * ns, err(k + 2) * ns),
                decay_tau: Estimate::new(tau * ns, err(k + 3) * ns),
                fwhm: Estimate::new((ds * sigma + dt * tau) * ns, fwhm_var.max(0.0).sqrt() * ns),
                rise_half_width: Estimate::new(ds * sigma * ns, ds * err(k + 2) * ns),
                decay_half_width: Estimate::new(dt * tau * ns, dt * err(k + 3) * ns),
            }
        })
        .collect();
    Ok(WaveshapeFit {
        components: c,
        background: Estimate::new(fit.params[0], err(0)),
        reduced_chi2: fit.reduced_chi2(),
    })
}

/// Indices of well-separated maxima of a lightly smoothed profile: peaks
/// above a quarter of the global maximum, separated by a dip below 60% of
/// the smaller one.
fn find_peaks(y: &[f64]) -> Vec<usize> {
    let n = y.len();
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 2).min(n - 1);
            y[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let mut sorted = smooth.clone();
    sorted.sort_by(f64::total_cmp);
    let floor = sorted[n / 20];
    let top = sorted[n - 1] - floor;
    if top <= 0.0 {
        return Vec::new();
    }
    let mut peaks: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < n {
        // Walk to the end of the current run above the threshold.
        if smooth[i] - floor < 0.25 * top {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && smooth[i] - floor >= 0.25 * top {
            i += 1;
        }
        let best = (start..i).max_by(|&a, &b| smooth[a].total_cmp(&smooth[b])).unwrap();
        peaks.push(best);
    }
    // Merge neighbours whose dip is shallow.
    let mut merged: Vec<usize> = Vec::new();
    for p in peaks {
        if let Some(&q) = merged.last() {
            let dip = smooth[q..=p].iter().cloned().fold(f64::INFINITY, f64::min) - floor;
            let low = (smooth[q] - floor).min(smooth[p] - floor);
            if dip > 0.6 * low {
                if smooth[p] > smooth[q] {
                    *merged.last_mut().unwrap() = p;
                }
                continue;
            }
        }
        merged.push(p);
    }
    // Report raw-data maxima near the smoothed ones.
    merged
        .into_iter()
        .map(|p| {
            let lo = p.saturating_sub(2);
            let hi = (p + 2).min(n - 1);
            (lo..=hi).max_by(|&a, &b| y[a].total_cmp(&y[b])).unwrap()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_bumps_are_counted() {
        let y: Vec<f64> = (0..200)
            .map(|i| {
                let x = i as f64;
                100.0 * (-(x - 50.0).powi(2) / 50.0).exp() + 80.0 * (-(x - 140.0).powi(2) / 50.0).exp()
            })
            .collect();
        assert_eq!(find_peaks(&y).len(), 2);
        let single: Vec<f64> = (0..200).map(|i| 100.0 * (-((i as f64) - 90.0).powi(2) / 200.0).exp()).collect();
        assert_eq!(find_peaks(&single), vec![90]);
    }
}
