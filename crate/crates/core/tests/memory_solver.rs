use num_complex::Complex64;
use photonlab::config::ExperimentConfig;
use photonlab::raman::{
    run_memory, shape_readout, solve_read, solve_write, storage_factor, ControlPulse, MemoryConfig,
    MemoryError, Oscillation, ShapingOptions, SpinWave,
};
use photonlab::reproduce::stored_spin_wave;
use photonlab::signal::Envelope;
use photonlab::source::input_envelope_grid;
use proptest::prelude::*;

fn input(cfg: &ExperimentConfig) -> Envelope {
    input_envelope_grid(&cfg.source.envelope, cfg.photon_peak(), cfg.memory.grid.dt)
}

#[test]
fn calibrated_cycle() {
    let cfg = ExperimentConfig::default();
    let run = run_memory(&input(&cfg), &cfg.protocol.write, &cfg.protocol.read, &cfg.memory).unwrap();
    assert!((run.eta_wr - 0.21).abs() < 2e-3, "{}", run.eta_wr);
    assert!((run.eta_wr - run.eta_w * run.eta_r).abs() < 1e-12);
    let w = cfg.windows.stored;
    assert!(run.read.retrieved.fraction_within(w.start, w.width) > 0.98);
    assert!(run.transmission + run.eta_w <= 1.0);
}

#[test]
fn lifetime_factor() {
    let mut m = MemoryConfig::default();
    assert!((storage_factor(m.lifetime, &m) - (-1.0f64).exp()).abs() < 1e-15);
    assert_eq!(storage_factor(0.0, &m), 1.0);
    m.oscillation = Oscillation { amplitude: 0.2, omega: 2.0 * std::f64::consts::PI / 8e-6 };
    let t = 4e-6;
    let expect = (-(t / m.lifetime).powi(2)).exp() * 0.6;
    assert!((storage_factor(t, &m) - expect).abs() < 1e-12);
}

#[test]
fn control_off_stores_nothing() {
    let cfg = ExperimentConfig::default();
    let w = solve_write(&input(&cfg), &cfg.protocol.write.clone().with_power(0.0), &cfg.memory).unwrap();
    assert!(w.eta_w < 1e-12);
    assert!(w.ledger.transmitted < 1.0);
    let r = solve_read(&w.spin_wave, &cfg.protocol.read, &cfg.memory);
    assert_eq!(r.unwrap_err(), MemoryError::EmptySpinWave);
}

#[test]
fn input_must_be_normalized() {
    let cfg = ExperimentConfig::default();
    let twice = input(&cfg).scaled(Complex64::new(2.0, 0.0));
    assert!(matches!(
        solve_write(&twice, &cfg.protocol.write, &cfg.memory),
        Err(MemoryError::NotNormalized(_))
    ));
}

#[test]
fn efficiency_falls_with_storage_time() {
    let cfg = ExperimentConfig::default();
    let e = input(&cfg);
    let mut last = f64::INFINITY;
    for shift in [0.0, 5e-6, 15e-6, 30e-6] {
        let read = cfg.protocol.read.clone().shifted(shift);
        let eta = run_memory(&e, &cfg.protocol.write, &read, &cfg.memory).unwrap().eta_wr;
        assert!(eta < last);
        last = eta;
    }
}

#[test]
fn shaping_refuses_more_than_the_medium_holds() {
    let cfg = ExperimentConfig::default();
    let s = stored_spin_wave(&cfg).unwrap();
    let start = cfg.protocol.read.t_start;
    let target = input_envelope_grid(&cfg.source.envelope, start + 150e-9, 1e-9)
        .scaled(Complex64::new((2.0 * s.energy()).sqrt(), 0.0));
    let r = shape_readout(&target, &s, &cfg.memory, &ShapingOptions::default());
    assert!(matches!(r, Err(MemoryError::Unreachable { .. })));
}

#[test]
fn wrong_spin_wave_size_is_rejected() {
    let cfg = ExperimentConfig::default();
    let s = SpinWave::uniform(cfg.memory.grid.nz + 1, 0.3);
    assert!(matches!(solve_read(&s, &cfg.protocol.read, &cfg.memory), Err(MemoryError::Config(_))));
}

#[test]
fn uniform_spin_wave_reads_out_within_bounds() {
    let cfg = ExperimentConfig::default();
    let s = SpinWave::uniform(cfg.memory.grid.nz, 0.5);
    let read = ControlPulse::square(cfg.protocol.read.peak_rabi, 2e-6, 600e-9, 10e-9);
    let r = solve_read(&s, &read, &cfg.memory).unwrap();
    assert!(r.eta_r > 0.1 && r.eta_r < 1.0, "{}", r.eta_r);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn write_never_creates_photons(power in 0.0f64..8.0, delta_mhz in -5.0f64..5.0) {
        let cfg = ExperimentConfig::default();
        let mut m = cfg.memory.clone();
        m.two_photon_detuning = 2.0 * std::f64::consts::PI * delta_mhz * 1e6;
        let w = solve_write(&input(&cfg), &cfg.protocol.write.clone().with_power(power), &m).unwrap();
        prop_assert!(w.eta_w >= 0.0);
        prop_assert!(w.ledger.transmitted >= 0.0);
        prop_assert!(w.ledger.write_loss() > -1e-9);
    }

    #[test]
    fn read_never_exceeds_the_stored_energy(rabi_mhz in 2.0f64..80.0, energy in 0.01f64..1.0) {
        let cfg = ExperimentConfig::default();
        let s = stored_spin_wave(&cfg).unwrap();
        let s = s.scaled(Complex64::new((energy / s.energy()).sqrt(), 0.0));
        let read = ControlPulse::square(2.0 * std::f64::consts::PI * rabi_mhz * 1e6, cfg.protocol.read.t_start, 1e-6, 10e-9);
        let r = solve_read(&s, &read, &cfg.memory).unwrap();
        prop_assert!(r.eta_r >= 0.0 && r.eta_r <= 1.0);
    }
}
