//! One write / store / read cycle of the Raman memory with the calibrated
//! control pulses.

use photonlab::config::ExperimentConfig;
use photonlab::raman::run_memory;
use photonlab::source::input_envelope_grid;

fn main() {
    let cfg = ExperimentConfig::default();
    let input = input_envelope_grid(&cfg.source.envelope, cfg.photon_peak(), cfg.memory.grid.dt);
    let t = std::time::Instant::now();
    let run = run_memory(&input, &cfg.protocol.write, &cfg.protocol.read, &cfg.memory).unwrap();
    println!("solved in {:.0} ms", t.elapsed().as_secs_f64() * 1e3);

    let ledger = run.write.ledger;
    println!("input           {:.4}", ledger.input);
    println!("transmitted     {:.4}", ledger.transmitted);
    println!("stored  ∫|S|²   {:.4}", ledger.stored);
    println!("scattered       {:.4}", ledger.write_loss());
    println!();
    println!("eta_w  {:.4}", run.eta_w);
    println!("eta_r  {:.4}  (storage factor {:.4} after {:.1} µs)", run.eta_r, run.storage_factor, run.storage_time * 1e6);
    println!("eta_wr {:.4}", run.eta_wr);
    println!("spin-wave centroid {:.3}", run.write.spin_wave.centroid());

    let out = &run.read.retrieved;
    let w = cfg.windows.stored;
    println!(
        "retrieved FWHM {:.1} ns, {:.1}% inside the stored window",
        out.fwhm().unwrap_or(f64::NAN) * 1e9,
        100.0 * out.fraction_within(w.start, w.width)
    );
}
