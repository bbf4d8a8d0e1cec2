//! Probe setting to operating point, and the emitted photon's time profile.

use photonlab::config::ExperimentConfig;
use photonlab::source::{calibrate_source, emission_distribution, DEFAULT_PROBE, LOW_PROBE};

fn main() {
    for (name, probe) in [("default", DEFAULT_PROBE), ("low", LOW_PROBE)] {
        let op = calibrate_source(probe).unwrap();
        let d = emission_distribution(op.p_gen, op.g2_0).unwrap();
        println!(
            "{name:>8}: probe {probe:.4} -> p_gen {:.3}, g2(0) {:.3}  (P1 {:.4e}, P2 {:.3e})",
            op.p_gen, op.g2_0, d.pi1, d.pi2
        );
    }

    println!("\nprobe   p_gen   g2(0)");
    for k in 0..=8 {
        let x = 0.25 * k as f64;
        let op = calibrate_source(x).unwrap();
        println!("{x:5.2}  {:.4}  {:.4}", op.p_gen, op.g2_0);
    }

    let cfg = ExperimentConfig::default();
    let env = photonlab::source::input_envelope_grid(&cfg.source.envelope, cfg.photon_peak(), 0.5e-9);
    let w = cfg.windows.input;
    println!(
        "\nenvelope FWHM {:.1} ns, {:.1}% inside the {:.0} ns input window",
        env.fwhm().unwrap() * 1e9,
        100.0 * env.fraction_within(w.start, w.width),
        w.width * 1e9
    );
}
