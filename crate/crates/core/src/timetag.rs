//! `QTT1` time-tag files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "QTT1"
//!      4     2  version (1)
//!      6     1  run kind (0 input_only, 1 storage, 2 noise_only)
//!      7     8  trial period, ps
//!     15     8  number of records
//!     23    32  configuration hash
//!     55    16  reserved, zero
//!     71     9  zero padding to the 80-byte header
//!     80  16·n  records: u64 timestamp_ps, u32 trial_index, u8 channel, 3 zero bytes
//! ```
//!
//! Timestamps are absolute picoseconds from the start of the run. A CSV
//! mirror (`trial_index,channel,timestamp_ps`, metadata in a leading `#`
//! line) is used for paths ending in `.csv`.

use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;
use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"QTT1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: u64 = 80;
pub const RECORD_LEN: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Channel {
    Trigger = 0,
    D1 = 1,
    D2 = 2,
}

impl Channel {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Trigger),
            1 => Some(Self::D1),
            2 => Some(Self::D2),
            _ => None,
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum RunKind {
    InputOnly = 0,
    Storage = 1,
    NoiseOnly = 2,
}

impl RunKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::InputOnly),
            1 => Some(Self::Storage),
            2 => Some(Self::NoiseOnly),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::InputOnly => "input_only",
            Self::Storage => "storage",
            Self::NoiseOnly => "noise_only",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [Self::InputOnly, Self::Storage, Self::NoiseOnly].into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TagRecord {
    pub timestamp_ps: u64,
    pub trial_index: u32,
    pub channel: Channel,
}

impl TagRecord {
    pub fn to_bytes(&self) -> [u8; 16] {
        let mut b = [0u8; 16];
        b[..8].copy_from_slice(&self.timestamp_ps.to_le_bytes());
        b[8..12].copy_from_slice(&self.trial_index.to_le_bytes());
        b[12] = self.channel as u8;
        b
    }
}

/// Everything in the file header except the record count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunInfo {
    pub kind: RunKind,
    pub trial_period_ps: u64,
    #[serde(with = "hex_hash")]
    pub config_hash: [u8; 32],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagFileHeader {
    pub version: u16,
    pub info: RunInfo,
    pub n_records: u64,
}

impl TagFileHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_LEN as usize] {
        let mut b = [0u8; HEADER_LEN as usize];
        b[0..4].copy_from_slice(&MAGIC);
        b[4..6].copy_from_slice(&self.version.to_le_bytes());
        b[6] = self.info.kind as u8;
        b[7..15].copy_from_slice(&self.info.trial_period_ps.to_le_bytes());
        b[15..23].copy_from_slice(&self.n_records.to_le_bytes());
        b[23..55].copy_from_slice(&self.info.config_hash);
        b
    }

    fn parse(b: &[u8; HEADER_LEN as usize]) -> Result<Self, TagError> {
        if b[0..4] != MAGIC {
            return Err(TagError::BadMagic { offset: 0, found: [b[0], b[1], b[2], b[3]] });
        }
        let version = u16::from_le_bytes([b[4], b[5]]);
        if version != VERSION {
            return Err(TagError::Version { offset: 4, found: version });
        }
        let kind = RunKind::from_u8(b[6]).ok_or(TagError::BadRunKind { offset: 6, found: b[6] })?;
        if let Some(i) = b[55..].iter().position(|&x| x != 0) {
            return Err(TagError::Reserved { offset: 55 + i as u64 });
        }
        let mut config_hash = [0u8; 32];
        config_hash.copy_from_slice(&b[23..55]);
        Ok(Self {
            version,
            info: RunInfo {
                kind,
                trial_period_ps: u64::from_le_bytes(b[7..15].try_into().unwrap()),
                config_hash,
            },
            n_records: u64::from_le_bytes(b[15..23].try_into().unwrap()),
        })
    }
}

#[derive(Debug, Error)]
pub enum TagError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {found:?} at byte {offset}")]
    BadMagic { offset: u64, found: [u8; 4] },
    #[error("unsupported version {found} at byte {offset}")]
    Version { offset: u64, found: u16 },
    #[error("unknown run kind {found} at byte {offset}")]
    BadRunKind { offset: u64, found: u8 },
    #[error("non-zero reserved byte at {offset}")]
    Reserved { offset: u64 },
    #[error("file truncated: incomplete {what} starting at byte {offset}")]
    Truncated { offset: u64, what: &'static str },
    #[error("timestamp goes backwards on channel {channel:?} at byte {offset}")]
    NonMonotone { offset: u64, channel: Channel },
    #[error("channel byte {found} out of range at byte {offset}")]
    BadChannel { offset: u64, found: u8 },
    #[error("non-zero record padding at byte {offset}")]
    Padding { offset: u64 },
    #[error("trial index inconsistent with trigger order at byte {offset}")]
    TrialOrder { offset: u64 },
    #[error("unexpected data after the last declared record at byte {offset}")]
    TrailingData { offset: u64 },
    #[error("malformed CSV at line {line}: {reason}")]
    Csv { line: u64, reason: String },
    #[error("dataset violates the file invariants: {0}")]
    Invalid(String),
}

impl TagError {
    /// Byte offset of the offending data, when the error has one.
    pub fn offset(&self) -> Option<u64> {
        use TagError::*;
        match self {
            BadMagic { offset, .. }
            | Version { offset, .. }
            | BadRunKind { offset, .. }
            | Reserved { offset }
            | Truncated { offset, .. }
            | NonMonotone { offset, .. }
            | BadChannel { offset, .. }
            | Padding { offset }
            | TrialOrder { offset }
            | TrailingData { offset } => Some(*offset),
            Io(_) | Csv { .. } | Invalid(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeTagDataset {
    pub info: RunInfo,
    pub records: Vec<TagRecord>,
}

impl TimeTagDataset {
    pub fn new(info: RunInfo) -> Self {
        Self { info, records: Vec::new() }
    }

    pub fn n_trials(&self) -> u64 {
        self.records.iter().filter(|r| r.channel == Channel::Trigger).count() as u64
    }

    /// Checks ordering and trial structure; the writer refuses datasets that
    /// fail this.
    pub fn validate(&self) -> Result<(), TagError> {
        let mut check = Checker::default();
        for (i, r) in self.records.iter().enumerate() {
            check.push(r, HEADER_LEN + i as u64 * RECORD_LEN).map_err(|e| {
                TagError::Invalid(format!("record {i}: {e}"))
            })?;
        }
        let mut prev = 0;
        for r in &self.records {
            if r.timestamp_ps < prev {
                return Err(TagError::Invalid("records not in timestamp order".into()));
            }
            prev = r.timestamp_ps;
            let start = r.trial_index as u64 * self.info.trial_period_ps;
            if r.timestamp_ps < start || r.timestamp_ps - start >= self.info.trial_period_ps {
                return Err(TagError::Invalid(format!(
                    "record at {} ps lies outside trial {}",
                    r.timestamp_ps, r.trial_index
                )));
            }
        }
        Ok(())
    }
}

/// Per-record invariants shared by the reader and the writer.
#[derive(Default)]
struct Checker {
    last: [Option<u64>; 3],
    trials: u64,
}

impl Checker {
    fn push(&mut self, r: &TagRecord, offset: u64) -> Result<(), TagError> {
        if let Some(prev) = self.last[r.channel.slot()] {
            if r.timestamp_ps < prev {
                return Err(TagError::NonMonotone { offset, channel: r.channel });
            }
        }
        self.last[r.channel.slot()] = Some(r.timestamp_ps);
        let ok = match r.channel {
            Channel::Trigger => {
                let ok = r.trial_index as u64 == self.trials;
                self.trials += 1;
                ok
            }
            _ => self.trials > 0 && r.trial_index as u64 == self.trials - 1,
        };
        if !ok {
            return Err(TagError::TrialOrder { offset: offset + 8 });
        }
        Ok(())
    }
}

/// Writes a complete dataset and returns the number of bytes written.
pub fn write_tags<W: Write>(dataset: &TimeTagDataset, out: W) -> Result<u64, TagError> {
    dataset.validate()?;
    let mut out = BufWriter::new(out);
    let header = TagFileHeader {
        version: VERSION,
        info: dataset.info,
        n_records: dataset.records.len() as u64,
    };
    out.write_all(&header.to_bytes())?;
    for r in &dataset.records {
        out.write_all(&r.to_bytes())?;
    }
    out.flush()?;
    Ok(HEADER_LEN + RECORD_LEN * dataset.records.len() as u64)
}

/// Incremental writer for runs too large to hold in memory. The record count
/// in the header is patched by [`TagWriter::finish`].
pub struct TagWriter<W: Write + Seek> {
    out: BufWriter<W>,
    info: RunInfo,
    n: u64,
    check: Checker,
    last_ts: u64,
}

impl<W: Write + Seek> TagWriter<W> {
    pub fn new(out: W, info: RunInfo) -> Result<Self, TagError> {
        let mut out = BufWriter::new(out);
        let header = TagFileHeader { version: VERSION, info, n_records: 0 };
        out.write_all(&header.to_bytes())?;
        Ok(Self { out, info, n: 0, check: Checker::default(), last_ts: 0 })
    }

    pub fn push(&mut self, r: &TagRecord) -> Result<(), TagError> {
        let offset = HEADER_LEN + self.n * RECORD_LEN;
        self.check.push(r, offset).map_err(|e| TagError::Invalid(e.to_string()))?;
        if r.timestamp_ps < self.last_ts {
            return Err(TagError::Invalid("records not in timestamp order".into()));
        }
        self.last_ts = r.timestamp_ps;
        self.out.write_all(&r.to_bytes())?;
        self.n += 1;
        Ok(())
    }

    /// Returns the total byte count.
    pub fn finish(mut self) -> Result<u64, TagError> {
        let header = TagFileHeader { version: VERSION, info: self.info, n_records: self.n };
        self.out.seek(SeekFrom::Start(0))?;
        self.out.write_all(&header.to_bytes())?;
        self.out.flush()?;
        Ok(HEADER_LEN + RECORD_LEN * self.n)
    }
}

/// Streaming reader: validates the header on construction and each record
/// as it is yielded. After the declared count it checks for trailing bytes.
pub struct TagReader<R: Read> {
    input: BufReader<R>,
    pub header: TagFileHeader,
    index: u64,
    check: Checker,
    done: bool,
}

impl<R: Read> TagReader<R> {
    pub fn new(input: R) -> Result<Self, TagError> {
        let mut input = BufReader::with_capacity(1 << 16, input);
        let mut head = [0u8; HEADER_LEN as usize];
        let got = read_full(&mut input, &mut head)?;
        if got >= 4 && head[0..4] != MAGIC {
            return Err(TagError::BadMagic { offset: 0, found: [head[0], head[1], head[2], head[3]] });
        }
        if got < head.len() {
            return Err(TagError::Truncated { offset: 0, what: "header" });
        }
        let header = TagFileHeader::parse(&head)?;
        Ok(Self { input, header, index: 0, check: Checker::default(), done: false })
    }

    fn next_record(&mut self) -> Result<Option<TagRecord>, TagError> {
        let offset = HEADER_LEN + self.index * RECORD_LEN;
        if self.index == self.header.n_records {
            let mut probe = [0u8; 1];
            if read_full(&mut self.input, &mut probe)? > 0 {
                return Err(TagError::TrailingData { offset });
            }
            return Ok(None);
        }
        let mut b = [0u8; RECORD_LEN as usize];
        if read_full(&mut self.input, &mut b)? < b.len() {
            return Err(TagError::Truncated { offset, what: "record" });
        }
        let channel = Channel::from_u8(b[12]).ok_or(TagError::BadChannel { offset: offset + 12, found: b[12] })?;
        if let Some(i) = b[13..].iter().position(|&x| x != 0) {
            return Err(TagError::Padding { offset: offset + 13 + i as u64 });
        }
        let r = TagRecord {
            timestamp_ps: u64::from_le_bytes(b[..8].try_into().unwrap()),
            trial_index: u32::from_le_bytes(b[8..12].try_into().unwrap()),
            channel,
        };
        self.check.push(&r, offset)?;
        self.index += 1;
        Ok(Some(r))
    }
}

impl<R: Read> Iterator for TagReader<R> {
    type Item = Result<TagRecord, TagError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_record() {
            Ok(Some(r)) => Some(Ok(r)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut got = 0;
    while got < buf.len() {
        match r.read(&mut buf[got..]) {
            Ok(0) => break,
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(got)
}

pub fn read_tags<R: Read>(input: R) -> Result<TimeTagDataset, TagError> {
    let reader = TagReader::new(input)?;
    let info = reader.header.info;
    let records = reader.collect::<Result<Vec<_>, _>>()?;
    Ok(TimeTagDataset { info, records })
}

/// CSV mirror of [`write_tags`].
pub fn write_tags_csv<W: Write>(dataset: &TimeTagDataset, out: W) -> Result<u64, TagError> {
    dataset.validate()?;
    let mut out = BufWriter::new(out);
    writeln!(
        out,
        "# QTT1 run_kind={} trial_period_ps={} config_hash={}",
        dataset.info.kind.name(),
        dataset.info.trial_period_ps,
        hex::encode(dataset.info.config_hash)
    )?;
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(["trial_index", "channel", "timestamp_ps"]).map_err(csv_io)?;
    for r in &dataset.records {
        w.write_record([
            r.trial_index.to_string(),
            (r.channel as u8).to_string(),
            r.timestamp_ps.to_string(),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    drop(w);
    out.flush()?;
    Ok(dataset.records.len() as u64)
}

fn csv_io(e: csv::Error) -> TagError {
    TagError::Io(io::Error::other(e))
}

pub fn read_tags_csv<R: Read>(input: R) -> Result<TimeTagDataset, TagError> {
    let mut input = BufReader::new(input);
    let mut first = String::new();
    input.read_line(&mut first)?;
    let bad = |reason: &str| TagError::Csv { line: 1, reason: reason.into() };
    let meta = first.trim().strip_prefix("# QTT1").ok_or_else(|| bad("missing metadata line"))?;
    let mut kind = None;
    let mut period = None;
    let mut hash = None;
    for kv in meta.split_whitespace() {
        match kv.split_once('=') {
            Some(("run_kind", v)) => kind = RunKind::from_name(v),
            Some(("trial_period_ps", v)) => period = v.parse().ok(),
            Some(("config_hash", v)) => {
                hash = hex::decode(v).ok().and_then(|h| <[u8; 32]>::try_from(h).ok())
            }
            _ => return Err(bad("unknown metadata field")),
        }
    }
    let info = RunInfo {
        kind: kind.ok_or_else(|| bad("run_kind"))?,
        trial_period_ps: period.ok_or_else(|| bad("trial_period_ps"))?,
        config_hash: hash.ok_or_else(|| bad("config_hash"))?,
    };
    let mut rdr = csv::Reader::from_reader(input);
    let mut records = Vec::new();
    let mut check = Checker::default();
    for (i, row) in rdr.records().enumerate() {
        let line = i as u64 + 3;
        let row = row.map_err(|e| TagError::Csv { line, reason: e.to_string() })?;
        let field = |k: usize| -> Result<u64, TagError> {
            row.get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| TagError::Csv { line, reason: format!("column {k}") })
        };
        let channel = u8::try_from(field(1)?)
            .ok()
            .and_then(Channel::from_u8)
            .ok_or_else(|| TagError::Csv { line, reason: "channel out of range".into() })?;
        let r = TagRecord {
            trial_index: u32::try_from(field(0)?)
                .map_err(|_| TagError::Csv { line, reason: "trial index".into() })?,
            channel,
            timestamp_ps: field(2)?,
        };
        check
            .push(&r, 0)
            .map_err(|e| TagError::Csv { line, reason: e.to_string() })?;
        records.push(r);
    }
    Ok(TimeTagDataset { info, records })
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Writes `QTT1`, or the CSV mirror when the path ends in `.csv`.
pub fn save(dataset: &TimeTagDataset, path: &Path) -> Result<u64, TagError> {
    let file = File::create(path)?;
    if is_csv(path) {
        write_tags_csv(dataset, file)
    } else {
        write_tags(dataset, file)
    }
}

pub fn load(path: &Path) -> Result<TimeTagDataset, TagError> {
    let file = File::open(path)?;
    if is_csv(path) {
        read_tags_csv(file)
    } else {
        read_tags(file)
    }
}

mod hex_hash {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(h: &[u8; 32], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(h))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 32], D::Error> {
        let s = String::deserialize(d)?;
        let v = hex::decode(&s).map_err(D::Error::custom)?;
        v.try_into().map_err(|_| D::Error::custom("hash must be 32 bytes"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn info() -> RunInfo {
        RunInfo { kind: RunKind::Storage, trial_period_ps: 4_000_000, config_hash: [7; 32] }
    }

    fn sample() -> TimeTagDataset {
        let mut ds = TimeTagDataset::new(info());
        ds.records = vec![
            TagRecord { timestamp_ps: 0, trial_index: 0, channel: Channel::Trigger },
            TagRecord { timestamp_ps: 1_000_000, trial_index: 0, channel: Channel::D2 },
            TagRecord { timestamp_ps: 4_000_000, trial_index: 1, channel: Channel::Trigger },
        ];
        ds
    }

    #[test]
    fn sizes() {
        let mut buf = Vec::new();
        assert_eq!(write_tags(&TimeTagDataset::new(info()), &mut buf).unwrap(), 80);
        assert_eq!(buf.len(), 80);
        buf.clear();
        assert_eq!(write_tags(&sample(), &mut buf).unwrap(), 128);
        assert_eq!(buf.len(), 128);
    }

    #[test]
    fn header_only_file_reads_empty() {
        let mut buf = Vec::new();
        write_tags(&TimeTagDataset::new(info()), &mut buf).unwrap();
        let ds = read_tags(&buf[..]).unwrap();
        assert!(ds.records.is_empty());
        assert_eq!(ds.info, info());
    }

    #[test]
    fn csv_mirror_round_trips() {
        let mut buf = Vec::new();
        write_tags_csv(&sample(), &mut buf).unwrap();
        assert_eq!(read_tags_csv(&buf[..]).unwrap(), sample());
    }

    #[test]
    fn writer_refuses_broken_trial_structure() {
        let mut ds = sample();
        ds.records.remove(0);
        assert!(matches!(write_tags(&ds, Vec::new()), Err(TagError::Invalid(_))));
    }

    #[test]
    fn streaming_writer_patches_count() {
        let mut cur = io::Cursor::new(Vec::new());
        let mut w = TagWriter::new(&mut cur, info()).unwrap();
        for r in &sample().records {
            w.push(r).unwrap();
        }
        assert_eq!(w.finish().unwrap(), 128);
        let bytes = cur.into_inner();
        let mut direct = Vec::new();
        write_tags(&sample(), &mut direct).unwrap();
        assert_eq!(bytes, direct);
    }
}
