//! Storage efficiency, signal-to-noise and μ₁ from the three runs of a
//! measurement.

use photonlab::analysis::{memory_figures, noise_mixed_g2, RunSummary};
use photonlab::config::ExperimentConfig;
use photonlab::detection::Simulation;
use photonlab::timetag::RunKind;

fn main() {
    let cfg = ExperimentConfig::default();
    let n = 2_000_000;
    let summary = |kind, seed| {
        let ds = Simulation::new(&cfg, kind).unwrap().run(n, seed);
        RunSummary::from_dataset(&ds, &cfg.windows, 1).unwrap()
    };
    let input = summary(RunKind::InputOnly, 1);
    let storage = summary(RunKind::Storage, 2);
    let noise = summary(RunKind::NoiseOnly, 3);
    let f = memory_figures(&input, &storage, &noise).unwrap();
    let show = |name: &str, e: photonlab::analysis::Estimate| println!("{name:>9} {:.4e} ± {:.1e}", e.value, e.error);
    show("eta_w", f.eta_w);
    show("eta_r", f.eta_r);
    show("eta_wr", f.eta_wr);
    show("snr", f.snr);
    show("mu1", f.mu1);
    show("s/t", f.s_over_t);
    show("survival", f.survival);
    println!(
        "a g2 = 0.20 source read out at this SNR would show g2(0) ≈ {:.3}",
        noise_mixed_g2(0.20, f.p_s.value / f.p_n.value)
    );
}
