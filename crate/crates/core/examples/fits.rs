//! Lifetime and waveshape fits on simulated data.

use photonlab::analysis::{fit_waveshape, histogram, WaveshapeMode};
use photonlab::config::ExperimentConfig;
use photonlab::detection::Simulation;
use photonlab::reproduce::lifetime_scan;
use photonlab::timetag::RunKind;

fn main() {
    let mut cfg = ExperimentConfig::default();

    let scan = lifetime_scan(&cfg, 1).unwrap();
    let f = scan.fit;
    println!(
        "lifetime {:.2} ± {:.2} µs, eta0 {:.4}, oscillation {} (F-test p {:.2}), reduced chi2 {:.2}",
        f.tau.value * 1e6,
        f.tau.error * 1e6,
        f.eta0.value,
        f.oscillation,
        f.f_test_p,
        f.reduced_chi2
    );

    cfg.detection.end_to_end = Some(1.0);
    let ds = Simulation::new(&cfg, RunKind::Storage).unwrap().run(300_000, 2);
    let h = histogram(&ds, 0.0, 2e-9, 2000);
    match fit_waveshape(&h, WaveshapeMode::Single) {
        Err(e) => println!("single-pulse fit: {e}"),
        Ok(_) => println!("single-pulse fit accepted"),
    }
    let fit = fit_waveshape(&h, WaveshapeMode::TimeBin).unwrap();
    for (name, c) in ["transmitted", "retrieved"].iter().zip(&fit.components) {
        println!(
            "{name:>11}: peak {:.1} ns, FWHM {:.1} ± {:.1} ns",
            c.peak_time.value * 1e9,
            c.fwhm.value * 1e9,
            c.fwhm.error * 1e9
        );
    }
}
