use photonlab::analysis::{memory_figures, RunSummary};
use photonlab::config::ExperimentConfig;
use photonlab::detection::{hbt_split, thin_photons, Simulation};
use photonlab::rng::trial_rng;
use photonlab::timetag::{Channel, RunKind, TimeTagDataset};

fn summary(cfg: &ExperimentConfig, kind: RunKind, n: u64, seed: u64) -> (Simulation, RunSummary) {
    let sim = Simulation::new(cfg, kind).unwrap();
    let ds = sim.run(n, seed);
    let s = RunSummary::from_dataset(&ds, &cfg.windows, 2).unwrap();
    (sim, s)
}

#[test]
fn thinning_keeps_the_expected_fraction() {
    let mut rng = trial_rng(1, 0);
    let (n, p, draws) = (7u32, 0.21, 200_000);
    let kept: u64 = (0..draws).map(|_| thin_photons(n, p, &mut rng) as u64).sum();
    let mean = n as f64 * p * draws as f64;
    let sd = (n as f64 * p * (1.0 - p) * draws as f64).sqrt();
    assert!((kept as f64 - mean).abs() < 4.0 * sd, "{kept} vs {mean}");
}

#[test]
fn beam_splitter_is_balanced() {
    let mut rng = trial_rng(2, 0);
    let mut d1 = 0u64;
    let draws = 100_000u64;
    for _ in 0..draws {
        let (a, b) = hbt_split(3, &mut rng);
        assert_eq!(a + b, 3);
        d1 += a as u64;
    }
    let total = 3.0 * draws as f64;
    assert!((d1 as f64 / total - 0.5).abs() < 4.0 * (0.25 / total).sqrt());
}

#[test]
fn dark_counts_follow_the_rate() {
    let mut cfg = ExperimentConfig::default();
    cfg.detection.dark_rate = 1e4;
    cfg.noise.p_noise_per_trial = 0.0;
    let n = 100_000u64;
    let ds = Simulation::new(&cfg, RunKind::NoiseOnly).unwrap().run(n, 5);
    let expect = 1e4 * cfg.windows.trial_period * n as f64;
    let period = cfg.windows.trial_period_ps();
    for ch in [Channel::D1, Channel::D2] {
        let clicks: Vec<u64> = ds.records.iter().filter(|r| r.channel == ch).map(|r| r.timestamp_ps % period).collect();
        assert!((clicks.len() as f64 - expect).abs() < 4.0 * expect.sqrt(), "{ch:?}: {}", clicks.len());
        let early = clicks.iter().filter(|&&t| t < period / 2).count() as f64;
        let half = clicks.len() as f64 / 2.0;
        assert!((early - half).abs() < 4.0 * half.sqrt());
    }
}

#[test]
fn records_stay_inside_their_trial() {
    let mut cfg = ExperimentConfig::default();
    cfg.detection.dark_rate = 1e5;
    let ds = Simulation::new(&cfg, RunKind::Storage).unwrap().run(50_000, 6);
    ds.validate().unwrap();
    assert_eq!(ds.n_trials(), 50_000);
}

#[test]
fn output_depends_only_on_the_seed() {
    let cfg = ExperimentConfig::default();
    let sim = Simulation::new(&cfg, RunKind::Storage).unwrap();
    let run_with = |threads: usize, seed: u64| -> TimeTagDataset {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| sim.run(200_000, seed))
    };
    let a = run_with(1, 9);
    let b = run_with(4, 9);
    assert_eq!(a, b);
    assert_ne!(a.records, run_with(4, 10).records);
}

#[test]
fn noise_clicks_stay_in_the_stored_window() {
    let mut cfg = ExperimentConfig::default();
    cfg.detection.dark_rate = 0.0;
    cfg.noise.p_noise_per_trial = 0.5;
    let ds = Simulation::new(&cfg, RunKind::NoiseOnly).unwrap().run(10_000, 3);
    let (lo, hi) = cfg.windows.stored.to_ps();
    let period = cfg.windows.trial_period_ps();
    let mut trials_with_noise = std::collections::BTreeSet::new();
    for r in ds.records.iter().filter(|r| r.channel != Channel::Trigger) {
        let t = r.timestamp_ps % period;
        assert!(t >= lo && t < hi, "{r:?} at {t} outside [{lo}, {hi})");
        trials_with_noise.insert(r.trial_index);
    }
    let frac = trials_with_noise.len() as f64 / 10_000.0;
    assert!((frac - 0.5).abs() < 4.0 * (0.25f64 / 1e4).sqrt(), "{frac}");
}

#[test]
fn background_subtraction_is_unbiased() {
    let cfg = ExperimentConfig::default();
    let n = 2_000_000;
    let (_, input) = summary(&cfg, RunKind::InputOnly, n, 21);
    let (sim, storage) = summary(&cfg, RunKind::Storage, n, 22);
    let (_, noise) = summary(&cfg, RunKind::NoiseOnly, n, 23);
    let f = memory_figures(&input, &storage, &noise).unwrap();
    let m = sim.memory.as_ref().unwrap();
    let w = cfg.windows.stored;
    let expected = cfg.source.operating_point().unwrap().p_gen
        * sim.detection_probability
        * m.eta_wr
        * m.read.retrieved.fraction_within(w.start, w.width);
    assert!(f.p_s.sigmas_from(expected).abs() < 3.0, "{:?} vs {expected}", f.p_s);
    assert!(f.clamped.is_empty() && !f.degenerate);
}
