//! Sampled complex envelopes on a uniform time grid.
//!
//! Every field in the crate (input photon, transmitted and retrieved pulses,
//! control profiles) is carried as an [`Envelope`]: a start time, a step and
//! a vector of complex amplitudes normalized as photon flux, so that
//! `∫|a(t)|² dt` is a photon number.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Complex amplitude sampled at `t0 + k * dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub t0: f64,
    pub dt: f64,
    pub samples: Vec<Complex64>,
}

impl Envelope {
    pub fn new(t0: f64, dt: f64, samples: Vec<Complex64>) -> Self {
        assert!(dt > 0.0, "envelope step must be positive");
        Self { t0, dt, samples }
    }

    /// Samples `f` on `n` points starting at `t0`.
    pub fn from_fn(t0: f64, dt: f64, n: usize, f: impl Fn(f64) -> Complex64) -> Self {
        let samples = (0..n).map(|k| f(t0 + k as f64 * dt)).collect();
        Self::new(t0, dt, samples)
    }

    pub fn zeros(t0: f64, dt: f64, n: usize) -> Self {
        Self::new(t0, dt, vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.time(k))
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.samples.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Trapezoidal `∫|a|² dt`.
    pub fn energy(&self) -> f64 {
        trapezoid(&self.intensity(), self.dt)
    }

    /// Linear interpolation; zero outside the sampled span.
    pub fn at(&self, t: f64) -> Complex64 {
        let n = self.len();
        if n == 0 {
            return Complex64::new(0.0, 0.0);
        }
        let x = (t - self.t0) / self.dt;
        if x < 0.0 || x > (n - 1) as f64 {
            return Complex64::new(0.0, 0.0);
        }
        let k = (x.floor() as usize).min(n - 1);
        if k == n - 1 {
            return self.samples[k];
        }
        let f = x - k as f64;
        self.samples[k] * (1.0 - f) + self.samples[k + 1] * f
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        Self::new(self.t0, self.dt, self.samples.iter().map(|a| a * c).collect())
    }

    /// Rescales so that [`Envelope::energy`] is one. Returns `None` for an empty pulse.
    pub fn normalized(&self) -> Option<Self> {
        let e = self.energy();
        if e <= 0.0 || !e.is_finite() {
            return None;
        }
        Some(self.scaled(Complex64::new(1.0 / e.sqrt(), 0.0)))
    }

    /// Resamples onto another uniform grid.
    pub fn resample(&self, t0: f64, dt: f64, n: usize) -> Self {
        Self::from_fn(t0, dt, n, |t| self.at(t))
    }

    /// Full width at half maximum of `|a|²`, from linearly interpolated
    /// crossings of the outermost half-maximum points.
    pub fn fwhm(&self) -> Option<f64> {
        fwhm(&self.intensity(), self.t0, self.dt)
    }

    /// Fraction of the energy inside `[start, start + width)`.
    pub fn fraction_within(&self, start: f64, width: f64) -> f64 {
        let total = self.energy();
        if total <= 0.0 {
            return 0.0;
        }
        // Fine midpoint quadrature so window edges need not sit on grid nodes.
        let sub = 8;
        let h = self.dt / sub as f64;
        let lo = start.max(self.t0);
        let hi = (start + width).min(self.t_end());
        if hi <= lo {
            return 0.0;
        }
        let n = ((hi - lo) / h).ceil() as usize;
        let h = (hi - lo) / n as f64;
        let inside: f64 = (0..n)
            .map(|i| self.at(lo + (i as f64 + 0.5) * h).norm_sqr() * h)
            .sum();
        inside / total
    }

    pub fn sampler(&self) -> Option<ArrivalSampler> {
        ArrivalSampler::new(self)
    }
}

pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => h * (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])),
    }
}

/// Half-maximum width of a sampled non-negative profile.
pub fn fwhm(values: &[f64], t0: f64, dt: f64) -> Option<f64> {
    let (imax, &vmax) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if vmax <= 0.0 {
        return None;
    }
    let half = 0.5 * vmax;
    let first = values.iter().position(|&v| v >= half)?;
    let last = values.iter().rposition(|&v| v >= half)?;
    if first == 0 || last == values.len() - 1 {
        // Half maximum not reached inside the record.
        return None;
    }
    debug_assert!(first <= imax && imax <= last);
    let cross = |a: usize, b: usize| {
        let (va, vb) = (values[a], values[b]);
        let f = (half - va) / (vb - va);
        t0 + (a as f64 + f * (b as f64 - a as f64)) * dt
    };
    Some(cross(last, last + 1) - cross(first - 1, first))
}

/// Inverse-CDF sampler over `|a(t)|²` with linear interpolation inside
/// each grid cell.
#[derive(Debug, Clone)]
pub struct ArrivalSampler {
    t0: f64,
    dt: f64,
    cdf: Vec<f64>,
}

impl ArrivalSampler {
    fn new(env: &Envelope) -> Option<Self> {
        let w = env.intensity();
        if w.len() < 2 {
            return None;
        }
        let mut cdf = Vec::with_capacity(w.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for pair in w.windows(2) {
            acc += 0.5 * (pair[0] + pair[1]);
            cdf.push(acc);
        }
        if acc <= 0.0 {
            return None;
        }
        cdf.iter_mut().for_each(|c| *c /= acc);
        Some(Self { t0: env.t0, dt: env.dt, cdf })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let k = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (lo, hi) = (self.cdf[k - 1], self.cdf[k]);
        let f = if hi > lo { (u - lo) / (hi - lo) } else { 0.0 };
        self.t0 + (k as f64 - 1.0 + f) * self.dt
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(sigma: f64) -> Envelope {
        Envelope::from_fn(-10.0 * sigma, sigma / 50.0, 1001, |t| {
            Complex64::new((-t * t / (4.0 * sigma * sigma)).exp(), 0.0)
        })
    }

    #[test]
    fn gaussian_fwhm_matches_closed_form() {
        // |a|² = exp(-t²/2σ²): FWHM = 2σ√(2 ln 2)
        let env = gaussian(1.0);
        let expected = 2.0 * (2.0 * 2f64.ln()).sqrt();
        assert!((env.fwhm().unwrap() - expected).abs() < 1e-4);
    }

    #[test]
    fn normalization_gives_unit_energy() {
        let env = gaussian(3.0).normalized().unwrap();
        assert!((env.energy() - 1.0).abs() < 1e-12);
        assert!(Envelope::zeros(0.0, 1.0, 10).normalized().is_none());
    }

    #[test]
    fn interpolation_is_zero_outside() {
        let env = gaussian(1.0);
        assert_eq!(env.at(-100.0), Complex64::new(0.0, 0.0));
        assert_eq!(env.at(100.0), Complex64::new(0.0, 0.0));
        assert!((env.at(0.0).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampler_quantiles_follow_the_profile() {
        let env = gaussian(1.0);
        let s = env.sampler().unwrap();
        assert!(s.quantile(0.5).abs() < 1e-3);
        // Φ(1) = 0.8413 for a unit-σ intensity profile
        assert!((s.quantile(0.841_344_746) - 1.0).abs() < 5e-3);
    }

    #[test]
    fn window_fraction_of_symmetric_pulse() {
        let env = gaussian(1.0);
        let f = env.fraction_within(-1.0, 2.0);
        assert!((f - 0.682_689_49).abs() < 1e-4, "{f}");
    }
}
