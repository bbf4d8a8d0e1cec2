//! Writing, streaming back and corrupting a QTT1 file.

use photonlab::config::ExperimentConfig;
use photonlab::detection::Simulation;
use photonlab::timetag::{read_tags, write_tags, write_tags_csv, RunKind, TagReader};

fn main() {
    let cfg = ExperimentConfig::default();
    let ds = Simulation::new(&cfg, RunKind::InputOnly).unwrap().run(10_000, 1);

    let mut bytes = Vec::new();
    write_tags(&ds, &mut bytes).unwrap();
    println!("{} records, {} bytes", ds.records.len(), bytes.len());

    let streamed = TagReader::new(bytes.as_slice()).unwrap().count();
    assert_eq!(read_tags(bytes.as_slice()).unwrap(), ds);
    println!("streamed back {streamed} records");

    let mut csv = Vec::new();
    write_tags_csv(&ds, &mut csv).unwrap();
    for line in String::from_utf8(csv).unwrap().lines().take(5) {
        println!("  {line}");
    }

    let mut broken = bytes.clone();
    broken[80 + 16 * 3 + 12] = 9;
    println!("bad channel: {}", read_tags(broken.as_slice()).unwrap_err());
    broken = bytes[..bytes.len() - 3].to_vec();
    println!("truncated:   {}", read_tags(broken.as_slice()).unwrap_err());
}
