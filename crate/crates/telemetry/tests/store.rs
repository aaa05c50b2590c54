use std::io::Write;

use proptest::prelude::*;
use sb_core::plant::ReadingValue;
use sb_core::wire::{event_topic, reading_topic, to_json, EventKind, EventPayload, ReadingPayload};
use sb_telemetry::{
    export_archive, import_archive, QueryRange, RecordClass, RecordFilter, RecordValue, TelemetryRecord, TelemetryStore,
};

const ZONES: [&str; 3] = ["kitchen", "dining", "garage"];

fn reading(floor: u32, zone: &str, t: f64, value: ReadingValue) -> (String, Vec<u8>) {
    let device = format!("f{floor}-{zone}-th");
    let metric = match value {
        ReadingValue::Bool(_) => "motion",
        _ => "temperature",
    };
    (
        reading_topic(floor, zone, &device),
        to_json(&ReadingPayload { timestamp: t, device_id: device, metric: metric.into(), value }),
    )
}

fn event(t: f64, detail: String) -> (String, Vec<u8>) {
    (
        event_topic(EventKind::Diagnostic),
        to_json(&EventPayload { timestamp: t, device_id: "controller".into(), zone_id: None, floor: Some(1), detail }),
    )
}

/// Random message stream with non-decreasing timestamps.
fn messages() -> impl Strategy<Value = Vec<(String, Vec<u8>)>> {
    let one = (
        1u32..3,
        0usize..3,
        0u32..3,
        prop_oneof![
            (-1e6f64..1e6).prop_map(ReadingValue::Number),
            any::<bool>().prop_map(ReadingValue::Bool),
        ],
        "[a-z\t\n\\\\ ]{0,12}",
        any::<bool>(),
    );
    prop::collection::vec(one, 0..60).prop_map(|steps| {
        let mut t = 0.0;
        steps
            .into_iter()
            .map(|(floor, zone, dt, value, text, is_event)| {
                t += dt as f64 * 0.5;
                if is_event {
                    event(t, text)
                } else {
                    reading(floor, ZONES[zone], t, value)
                }
            })
            .collect()
    })
}

fn ingest_all(store: &mut TelemetryStore, msgs: &[(String, Vec<u8>)]) {
    store.ingest_batch(msgs.iter().map(|(t, p)| (t.as_str(), p))).unwrap();
}

fn filter() -> impl Strategy<Value = RecordFilter> {
    (
        prop::option::of(1u32..3),
        prop::option::of(prop::sample::select(ZONES.to_vec())),
        prop::option::of(prop_oneof![Just(RecordClass::Sensor), Just(RecordClass::Event)]),
        prop::option::of(prop_oneof![Just("temperature".to_string()), Just("motion".to_string())]),
    )
        .prop_map(|(floor, zone, class, metric)| RecordFilter { floor, zone: zone.map(String::from), device: None, metric, class })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn duplicates_collapse(msgs in messages()) {
        let mut once = TelemetryStore::in_memory();
        ingest_all(&mut once, &msgs);
        let mut twice = TelemetryStore::in_memory();
        for m in &msgs {
            twice.ingest_batch([(m.0.as_str(), &m.1), (m.0.as_str(), &m.1)]).unwrap();
        }
        prop_assert_eq!(once.records(), twice.records());
    }

    #[test]
    fn query_matches_exhaustive_scan(
        msgs in messages(),
        f in filter(),
        a in 0.0f64..40.0,
        len in 0.0f64..40.0,
        max_points in 1usize..80,
    ) {
        let mut store = TelemetryStore::in_memory();
        ingest_all(&mut store, &msgs);
        let range = QueryRange { start: a, end: a + len, filter: f.clone(), max_points };
        let got = store.query(&range).unwrap();

        // every record in range, found by scanning
        let mut all: Vec<&TelemetryRecord> = store
            .records()
            .iter()
            .filter(|r| r.timestamp >= a && r.timestamp <= a + len)
            .filter(|r| f.floor.is_none_or(|x| r.floor == Some(x)))
            .filter(|r| f.zone.as_ref().is_none_or(|z| r.zone_id.as_deref() == Some(z.as_str())))
            .filter(|r| f.class.is_none_or(|c| r.class == c))
            .filter(|r| f.metric.as_ref().is_none_or(|m| &r.metric == m))
            .collect();
        all.sort_by(|x, y| x.timestamp.partial_cmp(&y.timestamp).unwrap().then(x.id.cmp(&y.id)));

        prop_assert_eq!(got.len(), all.len().min(max_points));
        if all.len() <= max_points {
            prop_assert_eq!(got.iter().collect::<Vec<_>>(), all.clone());
        } else {
            // subsequence with both endpoints
            prop_assert_eq!(&got[0], all[0]);
            if max_points > 1 {
                prop_assert_eq!(got.last().unwrap(), *all.last().unwrap());
            }
            let mut cursor = 0;
            for r in &got {
                let pos = all[cursor..].iter().position(|x| *x == r);
                prop_assert!(pos.is_some(), "record {} not a subsequence element", r.id);
                cursor += pos.unwrap() + 1;
            }
        }
        prop_assert!(got.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
    }

    #[test]
    fn archive_round_trip(msgs in messages()) {
        let mut store = TelemetryStore::in_memory();
        ingest_all(&mut store, &msgs);
        let mut buf = Vec::new();
        let n = export_archive(&store, f64::NEG_INFINITY, f64::INFINITY, &mut buf).unwrap();
        prop_assert_eq!(n, store.len());
        let mut fresh = TelemetryStore::in_memory();
        prop_assert_eq!(import_archive(&mut fresh, &buf[..]).unwrap(), store.len());
        prop_assert_eq!(fresh.records(), store.records());
        let mut again = Vec::new();
        export_archive(&fresh, f64::NEG_INFINITY, f64::INFINITY, &mut again).unwrap();
        prop_assert_eq!(buf, again);
    }
}

#[test]
fn hundred_readings_downsampled_to_ten() {
    let mut store = TelemetryStore::in_memory();
    for i in 0..100 {
        let (t, p) = reading(1, "kitchen", i as f64, ReadingValue::Number(i as f64));
        store.ingest(&t, &p).unwrap();
    }
    let got: Vec<f64> =
        store.query(&QueryRange { max_points: 10, ..QueryRange::all() }).unwrap().iter().map(|r| r.timestamp).collect();
    // i * 99 / 9 = 11 i, by hand
    assert_eq!(got, vec![0.0, 11.0, 22.0, 33.0, 44.0, 55.0, 66.0, 77.0, 88.0, 99.0]);
}

#[test]
fn missing_timestamp_leaves_store_unchanged() {
    let mut store = TelemetryStore::in_memory();
    let topic = reading_topic(1, "kitchen", "f1-kitchen-th");
    let report = store
        .ingest_batch([(topic.as_str(), br#"{"device_id":"f1-kitchen-th","metric":"temperature","value":20.0}"#)])
        .unwrap();
    assert_eq!(report.rejected.len(), 1);
    assert!(store.is_empty());
}

#[test]
fn crash_then_reopen_keeps_acknowledged_records() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("telemetry.wal");
    let mut acked = Vec::new();
    {
        let mut store = TelemetryStore::open(&path).unwrap();
        for batch in 0..20 {
            let msgs: Vec<_> = (0..10)
                .map(|i| reading(1, "kitchen", (batch * 10 + i) as f64, ReadingValue::Number(i as f64)))
                .collect();
            let report = store.ingest_batch(msgs.iter().map(|(t, p)| (t.as_str(), p))).unwrap();
            acked.extend(report.accepted);
        }
        // abrupt termination: no destructor, then a half-written line
        std::mem::forget(store);
    }
    let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
    f.write_all(br#"{"id":201,"timestamp":200.0,"class":"sen"#).unwrap();
    drop(f);

    let mut store = TelemetryStore::open(&path).unwrap();
    assert_eq!(store.records(), &acked[..]);
    let (t, p) = reading(1, "kitchen", 500.0, ReadingValue::Number(1.0));
    let r = store.ingest(&t, &p).unwrap().unwrap();
    assert_eq!(r.id, 201);
    drop(store);
    let store = TelemetryStore::open(&path).unwrap();
    assert_eq!(store.len(), 201);
}

#[test]
fn corrupt_middle_line_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.wal");
    std::fs::write(&path, "not json\n{\"also\": \"bad\"}\n").unwrap();
    assert!(TelemetryStore::open(&path).is_err());
}

#[test]
fn prune_removes_only_old_records() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.wal");
    let mut store = TelemetryStore::open(&path).unwrap();
    for i in 0..50 {
        let (t, p) = reading(2, "dining", i as f64, ReadingValue::Number(0.0));
        store.ingest(&t, &p).unwrap();
    }
    let before: Vec<TelemetryRecord> = store.records().iter().filter(|r| r.timestamp >= 20.0).cloned().collect();
    assert_eq!(store.prune_before(20.0).unwrap(), 20);
    assert_eq!(store.records(), &before[..]);
    let (t, p) = reading(2, "dining", 60.0, ReadingValue::Number(0.0));
    store.ingest(&t, &p).unwrap();
    drop(store);
    let reopened = TelemetryStore::open(&path).unwrap();
    assert_eq!(reopened.len(), 31);
    assert_eq!(reopened.records().first().unwrap().timestamp, 20.0);
}

#[test]
fn latest_picks_max_timestamp() {
    let mut store = TelemetryStore::in_memory();
    for t in [5.0, 10.0] {
        let (topic, p) = reading(1, "kitchen", t, ReadingValue::Number(t));
        store.ingest(&topic, &p).unwrap();
    }
    let latest = store.latest(&RecordFilter::default());
    assert_eq!(latest.len(), 1);
    assert_eq!(latest.values().next().unwrap().value, RecordValue::Number(10.0));
}
