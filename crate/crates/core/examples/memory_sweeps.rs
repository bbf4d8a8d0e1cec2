//! Two-photon detuning spectrum, write-power splitter curve and read-power
//! pulse widths.

use photonlab::config::ExperimentConfig;
use photonlab::reproduce::{detuning_spectrum, read_power_table, read_rabi_grid, write_power_table};
use std::f64::consts::PI;

fn main() {
    let cfg = ExperimentConfig::default();

    let spectrum = detuning_spectrum(&cfg).unwrap();
    println!("delta2 (MHz)  eta_w   eta_wr");
    for p in spectrum.iter().step_by(20) {
        println!("{:>10.1}  {:.4}  {:.4}", p.delta2 / (2e6 * PI), p.eta_w, p.eta_wr);
    }

    println!("\npower   eta_w   eta_wr  s/t     survival");
    for p in write_power_table(&cfg).unwrap() {
        println!("{:6.3}  {:.4}  {:.4}  {:.4}  {:.4}", p.power, p.eta_w, p.eta_wr, p.s_over_t, p.survival);
    }

    println!("\nread Rabi (MHz)  eta_r   FWHM (ns)");
    for (rabi, p) in read_rabi_grid().iter().zip(read_power_table(&cfg).unwrap()) {
        let fwhm = p.fwhm.map_or("-".to_string(), |f| format!("{:.1}", f * 1e9));
        println!("{:>15.0}  {:.4}  {fwhm}", rabi / (2e6 * PI), p.eta_r);
    }
}
