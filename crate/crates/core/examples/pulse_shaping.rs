//! Finds read control pulses that emit the stored photon in a chosen shape.

use photonlab::config::ExperimentConfig;
use photonlab::reproduce::shaping_demo;

fn main() {
    let cfg = ExperimentConfig::default();
    for (name, target, outcome) in shaping_demo(&cfg).unwrap() {
        println!(
            "{name:>8}: mismatch {:.4} after {} read solves, {:.3} of {:.3} retrievable, peak control {:.1} MHz",
            outcome.mismatch,
            outcome.iterations,
            target.energy(),
            outcome.achievable,
            outcome.pulse.peak() / (2e6 * std::f64::consts::PI)
        );
    }
}
