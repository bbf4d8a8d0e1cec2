use photonlab::source::{
    calibrate_source, emission_distribution, input_envelope, input_envelope_grid, SourceConfig,
    WaveshapeParams, DEFAULT_PROBE, LOW_PROBE,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn mixture_reproduces_mean_and_g2(p in 1e-4f64..0.2, frac in 0.0f64..1.0) {
        // g² above 1/p would need a negative single-photon weight.
        let g2 = frac * (1.0 / p).min(2.0);
        let d = emission_distribution(p, g2).unwrap();
        prop_assert!(d.pi0 >= 0.0 && d.pi1 >= 0.0 && d.pi2 >= 0.0);
        prop_assert!((d.pi0 + d.pi1 + d.pi2 - 1.0).abs() < 1e-12);
        prop_assert!((d.mean() - p).abs() < 1e-12);
        prop_assert!((d.g2() - g2).abs() < 1e-9 * g2.max(1.0));
    }

    #[test]
    fn calibration_stays_in_physical_range(x in 0.0f64..=2.0) {
        let op = calibrate_source(x).unwrap();
        prop_assert!((0.0..=0.15 + 1e-12).contains(&op.p_gen));
        if op.g2_defined {
            prop_assert!(op.g2_0 >= 0.0 && op.g2_0 < 1.0);
        }
    }

    #[test]
    fn probe_outside_calibration_is_an_error(x in prop_oneof![-10.0f64..-1e-9, 2.0f64 + 1e-9..10.0]) {
        prop_assert!(calibrate_source(x).is_err());
    }

    #[test]
    fn envelope_is_normalized_on_any_grid(dt in 0.05e-9f64..2e-9, peak in 0.5e-6f64..2e-6) {
        let params = WaveshapeParams::default();
        let env = input_envelope_grid(&params, peak, dt);
        prop_assert!((env.energy() - 1.0).abs() < 1e-9);
        let imax = env.intensity().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        prop_assert!((env.time(imax) - peak).abs() <= dt);
    }

    #[test]
    fn fwhm_constructor_round_trips(fwhm in 80e-9f64..200e-9, ratio in 0.1f64..0.6) {
        let tau = ratio * fwhm;
        if let Ok(p) = WaveshapeParams::from_fwhm(fwhm, tau) {
            prop_assert!((p.derived_fwhm() - fwhm).abs() < 1e-12);
        }
    }
}

#[test]
fn envelope_peaks_at_zero_and_is_continuous() {
    let p = WaveshapeParams::default();
    let peak = input_envelope(&p, 0.0);
    let eps = 1e-15;
    assert!((input_envelope(&p, -eps) - input_envelope(&p, eps)).abs() < 1e-6 * peak);
    for t in [-100e-9, -1e-9, 1e-9, 100e-9] {
        assert!(input_envelope(&p, t) < peak);
    }
}

#[test]
fn default_envelope_width_and_capture() {
    let p = WaveshapeParams::default();
    assert!((p.derived_fwhm() - 120e-9).abs() < 1e-10);
    let env = input_envelope_grid(&p, 1e-6, 0.1e-9);
    assert!((env.fwhm().unwrap() - 120e-9).abs() < 0.5e-9);
    assert!(env.fraction_within(1e-6 - 150e-9, 300e-9) >= 0.95);
}

#[test]
fn named_operating_points() {
    let hi = calibrate_source(DEFAULT_PROBE).unwrap();
    let lo = calibrate_source(LOW_PROBE).unwrap();
    assert!(hi.p_gen > lo.p_gen && hi.g2_0 > lo.g2_0);
    let off = calibrate_source(0.0).unwrap();
    assert!(off.p_gen == 0.0 && !off.g2_defined);
    let mut cfg = SourceConfig::default();
    cfg.probe_setting = 0.0;
    assert_eq!(cfg.emission().unwrap().mean(), 0.0);
}
