//! Heralding-free g²(n) of the source from an input-only run, with the
//! bootstrap spread for comparison.

use photonlab::analysis::{bootstrap_g2, g2_table, window_counts};
use photonlab::config::ExperimentConfig;
use photonlab::detection::Simulation;
use photonlab::timetag::RunKind;

fn main() {
    let cfg = ExperimentConfig::default();
    let ds = Simulation::new(&cfg, RunKind::InputOnly).unwrap().run(2_000_000, 7);
    let w = cfg.windows.input;
    let counts = window_counts(&ds, w, 4).unwrap();
    println!("p1 {:.5}  p2 {:.5}  p {:.5}", counts.p1(), counts.p2(), counts.p().value);
    for g in g2_table(&counts) {
        println!("g2({}) = {:.3} ± {:.3}", g.n, g.value, g.error);
    }
    let b = bootstrap_g2(&ds, w, 0, 100, 1).unwrap();
    println!("bootstrap g2(0) = {:.3} ± {:.3}", b.value, b.error);
}
