use super::MemoryError;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum PulseShape {
    /// Flat top with raised-cosine rising and falling edges of length `edge`.
    Square { edge: f64 },
    /// Gaussian Rabi profile centred in the pulse, `σ = duration / 6`.
    Gaussian,
    /// Rabi frequency (relative to `peak_rabi`) at offsets from `t_start`,
    /// linearly interpolated and zero outside the table.
    Table { times: Vec<f64>, values: Vec<f64> },
}

/// Control field Ω(t). The applied peak Rabi frequency is
/// `peak_rabi · √power_scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlPulse {
    pub shape: PulseShape,
    /// Reference peak Rabi frequency Ω₀, rad/s.
    pub peak_rabi: f64,
    /// Absolute start time in the trial, s.
    pub t_start: f64,
    pub duration: f64,
    #[serde(default = "one")]
    pub power_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl ControlPulse {
    pub fn square(peak_rabi: f64, t_start: f64, duration: f64, edge: f64) -> Self {
        Self {
            shape: PulseShape::Square { edge },
            peak_rabi,
            t_start,
            duration,
            power_scale: 1.0,
        }
    }

    pub fn gaussian(peak_rabi: f64, t_start: f64, duration: f64) -> Self {
        Self {
            shape: PulseShape::Gaussian,
            peak_rabi,
            t_start,
            duration,
            power_scale: 1.0,
        }
    }

    /// Piecewise-linear profile. `times` are absolute; `values` are Rabi
    /// frequencies in rad/s.
    pub fn table(times: &[f64], values: &[f64]) -> Result<Self, MemoryError> {
        if times.len() != values.len() || times.len() < 2 {
            return Err(MemoryError::Pulse("table needs ≥ 2 matching points".into()));
        }
        let peak = values.iter().cloned().fold(0.0, f64::max);
        let t_start = times[0];
        let duration = times[times.len() - 1] - t_start;
        let scale = if peak > 0.0 { peak } else { 1.0 };
        let pulse = Self {
            shape: PulseShape::Table {
                times: times.iter().map(|t| t - t_start).collect(),
                values: values.iter().map(|v| v / scale).collect(),
            },
            peak_rabi: peak,
            t_start,
            duration,
            power_scale: 1.0,
        };
        pulse.validate()?;
        Ok(pulse)
    }

    pub fn with_power(mut self, power_scale: f64) -> Self {
        self.power_scale = power_scale;
        self
    }

    pub fn shifted(mut self, by: f64) -> Self {
        self.t_start += by;
        self
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.duration
    }

    pub fn peak(&self) -> f64 {
        self.peak_rabi * self.power_scale.max(0.0).sqrt()
    }

    pub fn validate(&self) -> Result<(), MemoryError> {
        if !(self.peak_rabi.is_finite() && self.peak_rabi >= 0.0) {
            return Err(MemoryError::Pulse("peak Rabi frequency must be ≥ 0".into()));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(MemoryError::Pulse("duration must be positive".into()));
        }
        if !(self.power_scale.is_finite() && self.power_scale >= 0.0) {
            return Err(MemoryError::Pulse("power scale must be ≥ 0".into()));
        }
        match &self.shape {
            PulseShape::Square { edge } => {
                if !(edge.is_finite() && *edge >= 0.0 && 2.0 * edge <= self.duration) {
                    return Err(MemoryError::Pulse("edges must fit inside the pulse".into()));
                }
            }
            PulseShape::Gaussian => {}
            PulseShape::Table { times, values } => {
                if times.len() != values.len() || times.len() < 2 {
                    return Err(MemoryError::Pulse("table needs ≥ 2 matching points".into()));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(MemoryError::Pulse("table times must increase".into()));
                }
                if times.iter().chain(values).any(|v| !v.is_finite()) {
                    return Err(MemoryError::Pulse("table entries must be finite".into()));
                }
                if values.iter().any(|&v| v < 0.0) {
                    return Err(MemoryError::Pulse("table values must be non-negative".into()));
                }
            }
        }
        Ok(())
    }

    /// Real Rabi frequency at absolute time `t`.
    pub fn rabi(&self, t: f64) -> f64 {
        let x = t - self.t_start;
        if x < 0.0 || x > self.duration {
            return 0.0;
        }
        let profile = match &self.shape {
            PulseShape::Square { edge } => {
                let edge = *edge;
                let from_end = self.duration - x;
                if edge > 0.0 && x < edge {
                    0.5 * (1.0 - (PI * x / edge).cos())
                } else if edge > 0.0 && from_end < edge {
                    0.5 * (1.0 - (PI * from_end / edge).cos())
                } else {
                    1.0
                }
            }
            PulseShape::Gaussian => {
                let sigma = self.duration / 6.0;
                let u = (x - 0.5 * self.duration) / sigma;
                (-0.5 * u * u).exp()
            }
            PulseShape::Table { times, values } => {
                let k = times.partition_point(|&s| s <= x);
                if k == 0 {
                    0.0
                } else if k == times.len() {
                    values[k - 1]
                } else {
                    let f = (x - times[k - 1]) / (times[k] - times[k - 1]);
                    values[k - 1] * (1.0 - f) + values[k] * f
                }
            }
        };
        self.peak() * profile
    }

    /// Shortest feature the time grid has to resolve.
    pub(crate) fn feature_time(&self) -> f64 {
        match &self.shape {
            PulseShape::Square { edge } if *edge > 0.0 => *edge,
            PulseShape::Square { .. } => f64::INFINITY,
            PulseShape::Gaussian => self.duration / 6.0,
            PulseShape::Table { times, .. } => times
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_has_smooth_edges_and_flat_top() {
        let p = ControlPulse::square(2.0, 0.0, 100e-9, 10e-9);
        assert_eq!(p.rabi(-1e-9), 0.0);
        assert!((p.rabi(5e-9) - 1.0).abs() < 1e-12);
        assert_eq!(p.rabi(50e-9), 2.0);
        assert!((p.rabi(95e-9) - 1.0).abs() < 1e-12);
        assert_eq!(p.rabi(101e-9), 0.0);
    }

    #[test]
    fn power_scale_maps_to_square_root_of_rabi() {
        let p = ControlPulse::square(3.0, 0.0, 1.0, 0.1).with_power(4.0);
        assert_eq!(p.peak(), 6.0);
    }

    #[test]
    fn table_interpolates_and_rejects_negative_values() {
        let p = ControlPulse::table(&[1.0, 2.0, 3.0], &[0.0, 4.0, 2.0]).unwrap();
        assert!((p.rabi(1.5) - 2.0).abs() < 1e-12);
        assert!((p.rabi(2.5) - 3.0).abs() < 1e-12);
        assert_eq!(p.rabi(3.5), 0.0);
        assert!(ControlPulse::table(&[0.0, 1.0], &[1.0, -1.0]).is_err());
        assert!(ControlPulse::table(&[0.0, 1.0], &[1.0, f64::NAN]).is_err());
    }
}
