use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{parse_message, DedupKey, ParseError, RecordClass, TelemetryRecord};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("corrupt log {path} at line {line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("archive: {0}")]
    Archive(String),
    #[error("rejected: {0}")]
    Rejected(#[from] IngestError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("start {start} is after end {end}")]
    InvertedRange { start: f64, end: f64 },
    #[error("max_points must be at least 1")]
    ZeroPoints,
    #[error("range bounds must not be NaN")]
    NaN,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("timestamp {timestamp} of {device_id}/{class} precedes stored {last}")]
    OutOfOrder { device_id: String, class: RecordClass, timestamp: f64, last: f64 },
}

/// Optional equality filters shared by queries, latest-state lookups and the stream.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecordFilter {
    pub floor: Option<u32>,
    pub zone: Option<String>,
    pub device: Option<String>,
    pub metric: Option<String>,
    pub class: Option<RecordClass>,
}

impl RecordFilter {
    pub fn matches(&self, r: &TelemetryRecord) -> bool {
        self.floor.is_none_or(|f| r.floor == Some(f))
            && self.zone.as_ref().is_none_or(|z| r.zone_id.as_ref() == Some(z))
            && self.device.as_ref().is_none_or(|d| &r.device_id == d)
            && self.metric.as_ref().is_none_or(|m| &r.metric == m)
            && self.class.is_none_or(|c| r.class == c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryRange {
    pub start: f64,
    pub end: f64,
    pub filter: RecordFilter,
    pub max_points: usize,
}

impl QueryRange {
    pub fn all() -> Self {
        Self { start: f64::NEG_INFINITY, end: f64::INFINITY, filter: RecordFilter::default(), max_points: usize::MAX }
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        if self.start.is_nan() || self.end.is_nan() {
            return Err(QueryError::NaN);
        }
        if self.start > self.end {
            return Err(QueryError::InvertedRange { start: self.start, end: self.end });
        }
        if self.max_points == 0 {
            return Err(QueryError::ZeroPoints);
        }
        Ok(())
    }
}

/// Indices kept when thinning `n` points to `m`: `i·(n−1)/(m−1)` for `i < m`.
pub fn downsample_indices(n: usize, m: usize) -> Vec<usize> {
    if n <= m {
        return (0..n).collect();
    }
    if m == 1 {
        return vec![0];
    }
    (0..m).map(|i| ((i as u128 * (n as u128 - 1)) / (m as u128 - 1)) as usize).collect()
}

/// Outcome of ingesting a batch of messages.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchReport {
    pub accepted: Vec<TelemetryRecord>,
    pub duplicates: usize,
    pub rejected: Vec<(String, IngestError)>,
}

struct Wal {
    path: PathBuf,
    file: BufWriter<File>,
    /// First write failure since the last commit.
    failed: Option<io::Error>,
}

/// Append-only record store with an optional JSON-lines write-ahead log.
///
/// Log layout: one [`TelemetryRecord`] JSON object per line, in id order. A
/// torn final line left by a crash is discarded on open.
pub struct TelemetryStore {
    records: Vec<TelemetryRecord>,
    keys: HashSet<DedupKey>,
    last_ts: HashMap<(String, RecordClass), f64>,
    next_id: u64,
    wal: Option<Wal>,
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

impl Default for TelemetryStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl TelemetryStore {
    pub fn in_memory() -> Self {
        Self { records: Vec::new(), keys: HashSet::new(), last_ts: HashMap::new(), next_id: 1, wal: None }
    }

    /// Opens or creates the log at `path` and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let err = io_err(&path);
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(&err)?;
        }
        let mut file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(&path).map_err(&err)?;
        let mut store = Self::in_memory();
        let mut good_len = 0u64;
        {
            let mut reader = BufReader::new(&mut file);
            let mut line = String::new();
            let mut lineno = 0;
            loop {
                line.clear();
                let n = reader.read_line(&mut line).map_err(&err)?;
                if n == 0 {
                    break;
                }
                lineno += 1;
                let complete = line.ends_with('\n');
                match serde_json::from_str::<TelemetryRecord>(line.trim_end()) {
                    Ok(r) if complete => {
                        if r.id < store.next_id {
                            return Err(StoreError::Corrupt { path: path.clone(), line: lineno, reason: format!("id {} not increasing", r.id) });
                        }
                        store.insert(r);
                        good_len += n as u64;
                    }
                    // a torn tail: only tolerated as the very last line
                    _ if !complete => break,
                    Ok(_) => unreachable!(),
                    Err(e) => {
                        let mut rest = String::new();
                        reader.read_line(&mut rest).map_err(&err)?;
                        if rest.is_empty() {
                            break;
                        }
                        return Err(StoreError::Corrupt { path: path.clone(), line: lineno, reason: e.to_string() });
                    }
                }
            }
        }
        file.set_len(good_len).map_err(&err)?;
        file.seek(SeekFrom::End(0)).map_err(&err)?;
        store.wal = Some(Wal { path: path.clone(), file: BufWriter::new(file), failed: None });
        Ok(store)
    }

    pub fn path(&self) -> Option<&Path> {
        self.wal.as_ref().map(|w| w.path.as_path())
    }

    fn insert(&mut self, r: TelemetryRecord) {
        self.next_id = r.id + 1;
        self.keys.insert(r.dedup_key());
        let last = self.last_ts.entry((r.device_id.clone(), r.class)).or_insert(r.timestamp);
        *last = last.max(r.timestamp);
        self.records.push(r);
    }

    /// Checks and assigns an id; `Ok(None)` for a duplicate. With `keep_id`, an
    /// id above every stored one is kept as is.
    fn admit(&mut self, mut r: TelemetryRecord, keep_id: bool) -> Result<Option<TelemetryRecord>, IngestError> {
        if self.keys.contains(&r.dedup_key()) {
            return Ok(None);
        }
        if let Some(&last) = self.last_ts.get(&(r.device_id.clone(), r.class)) {
            if r.timestamp < last {
                return Err(IngestError::OutOfOrder { device_id: r.device_id, class: r.class, timestamp: r.timestamp, last });
            }
        }
        if !(keep_id && r.id >= self.next_id) {
            r.id = self.next_id;
        }
        if let Some(w) = &mut self.wal {
            let line = serde_json::to_vec(&r).expect("records serialize");
            if let Err(e) = w.file.write_all(&line).and_then(|_| w.file.write_all(b"\n")) {
                w.failed.get_or_insert(e);
            }
        }
        self.insert(r.clone());
        Ok(Some(r))
    }

    /// Flushes and syncs the log so every accepted record survives a crash.
    pub fn commit(&mut self) -> Result<(), StoreError> {
        if let Some(w) = &mut self.wal {
            let err = io_err(&w.path);
            if let Some(e) = w.failed.take() {
                return Err(err(e));
            }
            w.file.flush().map_err(&err)?;
            w.file.get_ref().sync_data().map_err(&err)?;
        }
        Ok(())
    }

    /// Parses, validates and appends one message, then commits. `Ok(None)` for a duplicate.
    pub fn ingest(&mut self, topic: &str, payload: &[u8]) -> Result<Option<TelemetryRecord>, StoreError> {
        let report = self.ingest_batch([(topic, payload)])?;
        if let Some((_, e)) = report.rejected.into_iter().next() {
            return Err(e.into());
        }
        Ok(report.accepted.into_iter().next())
    }

    /// Ingests a batch with one commit at the end. Rejections are logged and
    /// reported, not fatal.
    pub fn ingest_batch<'a, I, P>(&mut self, messages: I) -> Result<BatchReport, StoreError>
    where
        I: IntoIterator<Item = (&'a str, P)>,
        P: AsRef<[u8]>,
    {
        let mut report = BatchReport::default();
        for (topic, payload) in messages {
            let outcome = parse_message(topic, payload.as_ref()).map_err(IngestError::from).and_then(|r| self.admit(r, false));
            match outcome {
                Ok(Some(r)) => report.accepted.push(r),
                Ok(None) => report.duplicates += 1,
                Err(e) => {
                    tracing::warn!(topic, "rejected: {e}");
                    report.rejected.push((topic.to_string(), e));
                }
            }
        }
        self.commit()?;
        Ok(report)
    }

    /// Appends an already parsed record, keeping its id when that id is above
    /// every stored one. Call [`commit`](Self::commit) afterwards.
    pub fn append(&mut self, r: TelemetryRecord) -> Result<Option<TelemetryRecord>, IngestError> {
        self.admit(r, true)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// All records in id order.
    pub fn records(&self) -> &[TelemetryRecord] {
        &self.records
    }

    pub fn last_id(&self) -> u64 {
        self.next_id - 1
    }

    /// Records after `id`, in id order.
    pub fn since(&self, id: u64) -> &[TelemetryRecord] {
        let start = self.records.partition_point(|r| r.id <= id);
        &self.records[start..]
    }

    /// Matching records ordered by (timestamp, id), thinned to `max_points`.
    pub fn query(&self, range: &QueryRange) -> Result<Vec<TelemetryRecord>, QueryError> {
        range.validate()?;
        let mut hits: Vec<&TelemetryRecord> = self
            .records
            .iter()
            .filter(|r| r.timestamp >= range.start && r.timestamp <= range.end && range.filter.matches(r))
            .collect();
        hits.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp).then(a.id.cmp(&b.id)));
        Ok(downsample_indices(hits.len(), range.max_points).into_iter().map(|i| hits[i].clone()).collect())
    }

    /// Most recent record per (device, metric) among those matching `filter`.
    pub fn latest(&self, filter: &RecordFilter) -> BTreeMap<(String, String), TelemetryRecord> {
        let mut out: BTreeMap<(String, String), TelemetryRecord> = BTreeMap::new();
        for r in self.records.iter().filter(|r| filter.matches(r)) {
            let key = (r.device_id.clone(), r.metric.clone());
            match out.get(&key) {
                Some(prev) if prev.timestamp > r.timestamp => {}
                _ => {
                    out.insert(key, r.clone());
                }
            }
        }
        out
    }

    /// Removes records with timestamp before `horizon` and rewrites the log.
    /// Returns the number removed.
    pub fn prune_before(&mut self, horizon: f64) -> Result<usize, StoreError> {
        let before = self.records.len();
        self.records.retain(|r| r.timestamp >= horizon);
        let removed = before - self.records.len();
        if removed == 0 {
            return Ok(0);
        }
        self.keys = self.records.iter().map(TelemetryRecord::dedup_key).collect();
        if let Some(w) = self.wal.take() {
            let err = io_err(&w.path);
            drop(w.file);
            let tmp = w.path.with_extension("compact");
            {
                let mut out = BufWriter::new(File::create(&tmp).map_err(&err)?);
                for r in &self.records {
                    serde_json::to_writer(&mut out, r).expect("records serialize");
                    out.write_all(b"\n").map_err(&err)?;
                }
                out.flush().map_err(&err)?;
                out.get_ref().sync_all().map_err(&err)?;
            }
            fs::rename(&tmp, &w.path).map_err(&err)?;
            let file = OpenOptions::new().append(true).open(&w.path).map_err(&err)?;
            self.wal = Some(Wal { path: w.path.clone(), file: BufWriter::new(file), failed: None });
        }
        Ok(removed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::RecordValue;
    use sb_core::plant::ReadingValue;
    use sb_core::wire::{reading_topic, to_json, ReadingPayload};

    fn msg(zone: &str, t: f64) -> (String, Vec<u8>) {
        let device = format!("{zone}-th");
        (
            reading_topic(1, zone, &device),
            to_json(&ReadingPayload { timestamp: t, device_id: device, metric: "temperature".into(), value: ReadingValue::Number(t) }),
        )
    }

    #[test]
    fn dedup_and_order() {
        let mut s = TelemetryStore::in_memory();
        let (t, p) = msg("kitchen", 5.0);
        assert!(s.ingest(&t, &p).unwrap().is_some());
        assert!(s.ingest(&t, &p).unwrap().is_none());
        assert_eq!(s.len(), 1);
        let (t, p) = msg("kitchen", 1.0);
        assert!(s.ingest(&t, &p).is_err());
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn query_and_latest() {
        let mut s = TelemetryStore::in_memory();
        assert!(s.query(&QueryRange::all()).unwrap().is_empty());
        assert!(s.latest(&RecordFilter::default()).is_empty());
        for i in 0..100 {
            let zone = if i % 2 == 0 { "kitchen" } else { "dining" };
            let (t, p) = msg(zone, i as f64);
            s.ingest(&t, &p).unwrap();
        }
        let q = s.query(&QueryRange { max_points: 10, ..QueryRange::all() }).unwrap();
        assert_eq!(q.len(), 10);
        assert_eq!(q.first().unwrap().timestamp, 0.0);
        assert_eq!(q.last().unwrap().timestamp, 99.0);
        let kitchen = RecordFilter { zone: Some("kitchen".into()), ..Default::default() };
        let q = s.query(&QueryRange { filter: kitchen.clone(), ..QueryRange::all() }).unwrap();
        assert!(q.iter().all(|r| r.zone_id.as_deref() == Some("kitchen")));
        assert_eq!(q.len(), 50);
        let latest = s.latest(&kitchen);
        assert_eq!(latest.len(), 1);
        assert_eq!(latest.values().next().unwrap().value, RecordValue::Number(98.0));
        assert_eq!(
            s.query(&QueryRange { start: 2.0, end: 1.0, ..QueryRange::all() }),
            Err(QueryError::InvertedRange { start: 2.0, end: 1.0 })
        );
    }

    #[test]
    fn downsample_arithmetic() {
        assert_eq!(downsample_indices(100, 10), vec![0, 11, 22, 33, 44, 55, 66, 77, 88, 99]);
        assert_eq!(downsample_indices(5, 10), vec![0, 1, 2, 3, 4]);
        assert_eq!(downsample_indices(5, 1), vec![0]);
        assert_eq!(downsample_indices(5, 2), vec![0, 4]);
    }
}
