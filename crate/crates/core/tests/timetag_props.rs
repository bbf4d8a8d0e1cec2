use photonlab::timetag::{
    read_tags, read_tags_csv, write_tags, write_tags_csv, Channel, RunInfo, RunKind, TagError,
    TagReader, TagRecord, TimeTagDataset, HEADER_LEN, RECORD_LEN,
};
use proptest::prelude::*;

const PERIOD: u64 = 4_000_000;

fn dataset(trials: Vec<Vec<(u64, bool)>>, kind: RunKind, hash: [u8; 32]) -> TimeTagDataset {
    let mut ds = TimeTagDataset::new(RunInfo { kind, trial_period_ps: PERIOD, config_hash: hash });
    for (k, mut clicks) in trials.into_iter().enumerate() {
        let base = k as u64 * PERIOD;
        ds.records.push(TagRecord { timestamp_ps: base, trial_index: k as u32, channel: Channel::Trigger });
        clicks.sort();
        for (t, d1) in clicks {
            ds.records.push(TagRecord {
                timestamp_ps: base + t,
                trial_index: k as u32,
                channel: if d1 { Channel::D1 } else { Channel::D2 },
            });
        }
    }
    ds
}

fn arb_dataset() -> impl Strategy<Value = TimeTagDataset> {
    (
        prop::collection::vec(prop::collection::vec((1..PERIOD, any::<bool>()), 0..4), 0..40),
        prop_oneof![Just(RunKind::InputOnly), Just(RunKind::Storage), Just(RunKind::NoiseOnly)],
        any::<[u8; 32]>(),
    )
        .prop_map(|(t, k, h)| dataset(t, k, h))
}

proptest! {
    #[test]
    fn binary_round_trip(ds in arb_dataset()) {
        let mut bytes = Vec::new();
        let n = write_tags(&ds, &mut bytes).unwrap();
        prop_assert_eq!(n, bytes.len() as u64);
        prop_assert_eq!(n, HEADER_LEN + RECORD_LEN * ds.records.len() as u64);
        let back = read_tags(bytes.as_slice()).unwrap();
        prop_assert_eq!(&back, &ds);
        let mut again = Vec::new();
        write_tags(&back, &mut again).unwrap();
        prop_assert_eq!(again, bytes);
    }

    #[test]
    fn csv_round_trip(ds in arb_dataset()) {
        let mut text = Vec::new();
        write_tags_csv(&ds, &mut text).unwrap();
        prop_assert_eq!(read_tags_csv(text.as_slice()).unwrap(), ds);
    }

    #[test]
    fn every_truncation_is_reported(ds in arb_dataset(), cut in 0.0f64..1.0) {
        let mut bytes = Vec::new();
        write_tags(&ds, &mut bytes).unwrap();
        let at = ((bytes.len() - 1) as f64 * cut) as usize;
        bytes.truncate(at);
        let err = read_tags(bytes.as_slice()).unwrap_err();
        prop_assert!(matches!(err, TagError::Truncated { .. }), "{err}");
        let off = err.offset().unwrap();
        prop_assert!(off <= at as u64);
        if at as u64 >= HEADER_LEN {
            prop_assert_eq!((off - HEADER_LEN) % RECORD_LEN, 0);
            prop_assert!(at as u64 - off < RECORD_LEN);
        }
    }

    #[test]
    fn streaming_reader_matches_batch_reader(ds in arb_dataset()) {
        let mut bytes = Vec::new();
        write_tags(&ds, &mut bytes).unwrap();
        let streamed: Vec<TagRecord> = TagReader::new(bytes.as_slice()).unwrap().map(Result::unwrap).collect();
        prop_assert_eq!(streamed, ds.records);
    }
}

#[test]
fn csv_errors_name_the_line() {
    let ds = dataset(vec![vec![(10, true)], vec![]], RunKind::Storage, [7; 32]);
    let mut text = Vec::new();
    write_tags_csv(&ds, &mut text).unwrap();
    let text = String::from_utf8(text).unwrap().replace("0,1,10\n", "0,7,10\n");
    match read_tags_csv(text.as_bytes()) {
        Err(TagError::Csv { line, .. }) => assert!(line > 1),
        other => panic!("{other:?}"),
    }
}
