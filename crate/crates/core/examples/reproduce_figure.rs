//! Regenerates one figure's CSV bundle into a temporary directory.
//!
//! `cargo run --example reproduce_figure -- 5`

use photonlab::reproduce::{reproduce, ReproduceOptions};

fn main() {
    let figure = std::env::args().nth(1).map_or(Ok(5), |a| a.parse()).expect("figure number");
    let dir = std::env::temp_dir().join(format!("photonlab_fig{figure}"));
    std::fs::create_dir_all(&dir).unwrap();
    let opts = ReproduceOptions { trials: 200_000, ..Default::default() };
    match reproduce(figure, &dir, &opts) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => eprintln!("{e}"),
    }
}
