//! Monte-Carlo run of the source, memory and detectors, written as QTT1
//! time tags.

use photonlab::config::ExperimentConfig;
use photonlab::detection::Simulation;
use photonlab::timetag::{Channel, RunKind};

fn main() {
    let cfg = ExperimentConfig::default();
    let n = 200_000;
    for kind in [RunKind::InputOnly, RunKind::Storage, RunKind::NoiseOnly] {
        let sim = Simulation::new(&cfg, kind).unwrap();
        let ds = sim.run(n, 42);
        let d1 = ds.records.iter().filter(|r| r.channel == Channel::D1).count();
        let d2 = ds.records.iter().filter(|r| r.channel == Channel::D2).count();
        println!("{:>10}: {n} trials, D1 {d1}, D2 {d2}", kind.name());
    }

    let path = std::env::temp_dir().join("photonlab_example.qtt");
    let ds = Simulation::new(&cfg, RunKind::Storage).unwrap().run(n, 42);
    let bytes = photonlab::timetag::save(&ds, &path).unwrap();
    println!("wrote {bytes} bytes to {}", path.display());
}
