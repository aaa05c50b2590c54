//! Snapshot archive: a versioned, tab-separated UTF-8 text file.
//!
//! ```text
//! sb-telemetry-archive	1
//! range	<start>	<end>
//! records	<total>
//! table	sensor	<rows>
//! id	timestamp	class	device_id	zone_id	floor	metric	type	value
//! <rows...>
//! table	command	<rows>
//! ...
//! end
//! ```
//!
//! One table per record class, always in the order sensor, command, event,
//! energy, each with its header row. Rows are in id order. `type` is `n`
//! (number), `b` (boolean) or `s` (text). Absent values are written `\N`;
//! in text fields backslash, tab, newline and carriage return are escaped as
//! `\\`, `\t`, `\n`, `\r`. Numbers use the shortest form that parses back to
//! the same `f64`.

use std::io::{BufRead, Write};

use crate::record::{RecordClass, RecordValue, TelemetryRecord};
use crate::store::{QueryRange, StoreError, TelemetryStore};

pub const ARCHIVE_MAGIC: &str = "sb-telemetry-archive";
pub const ARCHIVE_VERSION: u32 = 1;
const COLUMNS: &str = "id\ttimestamp\tclass\tdevice_id\tzone_id\tfloor\tmetric\ttype\tvalue";
const NULL: &str = "\\N";

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(format!("bad escape \\{}", other.map(String::from).unwrap_or_default())),
        }
    }
    Ok(out)
}

fn opt(s: Option<String>) -> String {
    s.map(|s| escape(&s)).unwrap_or_else(|| NULL.to_string())
}

fn row(r: &TelemetryRecord) -> String {
    let (kind, value) = match &r.value {
        RecordValue::Number(x) => ("n", format!("{x}")),
        RecordValue::Bool(b) => ("b", b.to_string()),
        RecordValue::Text(s) => ("s", escape(s)),
    };
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        r.id,
        r.timestamp,
        r.class,
        escape(&r.device_id),
        opt(r.zone_id.clone()),
        opt(r.floor.map(|f| f.to_string())),
        escape(&r.metric),
        kind,
        value
    )
}

fn io(e: std::io::Error) -> StoreError {
    StoreError::Archive(e.to_string())
}

/// Writes every record with timestamp in `[start, end]`; filters and
/// `max_points` in `range` are ignored. Returns the number of records written.
pub fn export_archive(store: &TelemetryStore, start: f64, end: f64, out: &mut impl Write) -> Result<usize, StoreError> {
    QueryRange { start, end, ..QueryRange::all() }.validate()?;
    let records: Vec<&TelemetryRecord> = store.records().iter().filter(|r| r.timestamp >= start && r.timestamp <= end).collect();
    writeln!(out, "{ARCHIVE_MAGIC}\t{ARCHIVE_VERSION}").map_err(io)?;
    writeln!(out, "range\t{start}\t{end}").map_err(io)?;
    writeln!(out, "records\t{}", records.len()).map_err(io)?;
    for class in RecordClass::ALL {
        let rows: Vec<&&TelemetryRecord> = records.iter().filter(|r| r.class == class).collect();
        writeln!(out, "table\t{class}\t{}", rows.len()).map_err(io)?;
        writeln!(out, "{COLUMNS}").map_err(io)?;
        for r in rows {
            writeln!(out, "{}", row(r)).map_err(io)?;
        }
    }
    writeln!(out, "end").map_err(io)?;
    out.flush().map_err(io)?;
    Ok(records.len())
}

fn parse_row(line: &str, class: RecordClass) -> Result<TelemetryRecord, String> {
    let f: Vec<&str> = line.split('\t').collect();
    if f.len() != 9 {
        return Err(format!("expected 9 fields, got {}", f.len()));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
    if f[2] != class.as_str() {
        return Err(format!("row class {} inside {} table", f[2], class));
    }
    let nullable = |s: &str| if s == NULL { Ok(None) } else { unescape(s).map(Some) };
    let value = match f[7] {
        "n" => RecordValue::Number(num(f[8])?),
        "b" => RecordValue::Bool(f[8].parse().map_err(|_| format!("bad boolean {:?}", f[8]))?),
        "s" => RecordValue::Text(unescape(f[8])?),
        t => return Err(format!("unknown value type {t:?}")),
    };
    Ok(TelemetryRecord {
        id: f[0].parse().map_err(|_| format!("bad id {:?}", f[0]))?,
        timestamp: num(f[1])?,
        class,
        device_id: unescape(f[3])?,
        zone_id: nullable(f[4])?,
        floor: nullable(f[5])?.map(|s| s.parse().map_err(|_| format!("bad floor {s:?}"))).transpose()?,
        metric: unescape(f[6])?,
        value,
    })
}

/// Parses an archive into records, checking the header and row counts.
pub fn read_archive(input: impl BufRead) -> Result<Vec<TelemetryRecord>, StoreError> {
    let mut lines = input.lines().enumerate();
    let mut next = |what: &str| -> Result<(usize, String), StoreError> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i + 1, l)),
            Some((_, Err(e))) => Err(io(e)),
            None => Err(StoreError::Archive(format!("unexpected end of archive, expected {what}"))),
        }
    };
    let bad = |line: usize, msg: String| StoreError::Archive(format!("line {line}: {msg}"));

    let (n, magic) = next("header")?;
    let version = magic
        .strip_prefix(ARCHIVE_MAGIC)
        .and_then(|v| v.strip_prefix('\t'))
        .ok_or_else(|| bad(n, "not a telemetry archive".into()))?;
    if version != ARCHIVE_VERSION.to_string() {
        return Err(bad(n, format!("unsupported version {version}")));
    }
    let (n, range) = next("range")?;
    if !range.starts_with("range\t") {
        return Err(bad(n, "missing range line".into()));
    }
    let (n, count) = next("record count")?;
    let total: usize = count
        .strip_prefix("records\t")
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| bad(n, "missing record count".into()))?;

    let mut out = Vec::with_capacity(total);
    for class in RecordClass::ALL {
        let (n, header) = next("table header")?;
        let rows: usize = header
            .strip_prefix(&format!("table\t{class}\t"))
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| bad(n, format!("expected table {class}")))?;
        let (n, cols) = next("column header")?;
        if cols != COLUMNS {
            return Err(bad(n, "unexpected column header".into()));
        }
        for _ in 0..rows {
            let (n, line) = next("row")?;
            out.push(parse_row(&line, class).map_err(|e| bad(n, e))?);
        }
    }
    let (n, end) = next("end marker")?;
    if end != "end" {
        return Err(bad(n, "missing end marker".into()));
    }
    if out.len() != total {
        return Err(StoreError::Archive(format!("header says {total} records, found {}", out.len())));
    }
    out.sort_by_key(|r| r.id);
    Ok(out)
}

/// Imports an archive. Ids are kept when they are above every stored id;
/// records already present are skipped. Returns the number imported.
pub fn import_archive(store: &mut TelemetryStore, input: impl BufRead) -> Result<usize, StoreError> {
    let records = read_archive(input)?;
    let mut imported = 0;
    for r in records {
        if store.append(r)?.is_some() {
            imported += 1;
        }
    }
    store.commit()?;
    Ok(imported)
}
