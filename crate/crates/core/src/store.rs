//! Network-server back end: ingestion, square assignment, queries.
//!
//! The store is an in-memory index over an append-only JSON-lines file. Every
//! mutation is appended as one tagged line and flushed before the call
//! returns; opening a file replays it.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::ReferenceSample;
use crate::codec::SensorFrame;
use crate::envelope::{EnvelopeError, UplinkEnvelope};
use crate::geometry::{contains, GeometryError, SquareDefinition};
use crate::model::{rfc3339, DevEui, GeoPosition};

pub const DEFAULT_INTERVAL_S: u32 = 1800;

/// A decoded, square-assigned uplink.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub dev_eui: DevEui,
    pub fcnt: u32,
    pub port: u8,
    pub rssi_dbm: i32,
    pub snr_db: f64,
    #[serde(with = "rfc3339")]
    pub received_at: DateTime<Utc>,
    pub square_id: Option<String>,
    #[serde(flatten)]
    pub frame: SensorFrame,
}

/// One sampling interval of a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    #[serde(with = "rfc3339")]
    pub interval_start: DateTime<Utc>,
    pub sitting_min: Option<u8>,
    pub noise_db: Option<u8>,
}

impl MeasurementRecord {
    /// The four intervals, oldest first, back-computed from the receive time.
    pub fn intervals(&self, interval_s: u32) -> [IntervalRow; 4] {
        std::array::from_fn(|i| IntervalRow {
            interval_start: self.received_at - Duration::seconds((4 - i as i64) * interval_s as i64),
            sitting_min: self.frame.sitting(i),
            noise_db: self.frame.noise(i),
        })
    }

    pub fn sort_key(&self) -> (DateTime<Utc>, DevEui, u32) {
        (self.received_at, self.dev_eui, self.fcnt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceInfo {
    pub dev_eui: DevEui,
    pub label: Option<String>,
    #[serde(with = "rfc3339")]
    pub registered_at: DateTime<Utc>,
    #[serde(with = "rfc3339")]
    pub last_seen: DateTime<Utc>,
    pub square_id: Option<String>,
    /// Last fix fell outside every known square.
    pub unlocated: bool,
    pub battery_pct: Option<u8>,
    pub frames: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngestResult {
    Created,
    Duplicate,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("undecodable uplink: {0}")]
    Decode(#[from] EnvelopeError),
    #[error("unknown device {0}")]
    UnknownDevice(DevEui),
    #[error("unknown square {0:?}")]
    UnknownSquare(String),
    #[error("invalid range: from {from} is after to {to}")]
    Range { from: String, to: String },
    #[error("square {id:?}: {source}")]
    Square { id: String, source: GeometryError },
    #[error("store file line {line}: {msg}")]
    Corrupt { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl StoreError {
    pub fn is_not_found(&self) -> bool {
        matches!(self, StoreError::UnknownDevice(_) | StoreError::UnknownSquare(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Entry {
    Config { interval_s: u32 },
    Square(SquareDefinition),
    Reference(ReferenceSample),
    Device {
        dev_eui: DevEui,
        label: Option<String>,
        #[serde(with = "rfc3339")]
        at: DateTime<Utc>,
    },
    Measurement(MeasurementRecord),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    Device(DevEui),
    Square(String),
}

/// Per-day totals for one square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareDaySummary {
    pub square_id: String,
    pub date: NaiveDate,
    pub frames: usize,
    pub sitting_min_total: u64,
    pub mean_noise_db: Option<f64>,
    pub temperature_min_c: Option<f64>,
    pub temperature_max_c: Option<f64>,
}

#[derive(Debug, Default)]
pub struct Store {
    interval_s: u32,
    records: BTreeMap<(DevEui, u32), MeasurementRecord>,
    devices: BTreeMap<DevEui, DeviceInfo>,
    labels: BTreeMap<DevEui, String>,
    squares: Vec<SquareDefinition>,
    reference: Vec<ReferenceSample>,
    log: Option<BufWriter<File>>,
}

impl Store {
    pub fn in_memory() -> Self {
        Self {
            interval_s: DEFAULT_INTERVAL_S,
            ..Default::default()
        }
    }

    /// Opens (or creates) a store file and replays its contents.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let mut store = Self::in_memory();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            store.replay(reader)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        store.log = Some(BufWriter::new(file));
        Ok(store)
    }

    /// Loads a store from JSON lines without attaching a file.
    pub fn replay<R: BufRead>(&mut self, reader: R) -> Result<(), StoreError> {
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: Entry = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                line: i + 1,
                msg: e.to_string(),
            })?;
            self.apply(entry).map_err(|e| match e {
                StoreError::Io(_) => e,
                other => StoreError::Corrupt {
                    line: i + 1,
                    msg: other.to_string(),
                },
            })?;
        }
        Ok(())
    }

    fn apply(&mut self, entry: Entry) -> Result<(), StoreError> {
        match entry {
            Entry::Config { interval_s } => {
                if !(1..=1800).contains(&interval_s) {
                    return Err(StoreError::Corrupt {
                        line: 0,
                        msg: format!("interval_s {interval_s} out of range"),
                    });
                }
                self.interval_s = interval_s;
            }
            Entry::Square(sq) => self.insert_square(sq)?,
            Entry::Reference(r) => self.insert_reference(r),
            Entry::Device { dev_eui, label, at } => {
                self.register(dev_eui, label, at);
            }
            Entry::Measurement(rec) => {
                if !self.devices.contains_key(&rec.dev_eui) {
                    self.register(rec.dev_eui, None, rec.received_at);
                }
                if let Some(field) = rec.frame.check() {
                    return Err(StoreError::Corrupt {
                        line: 0,
                        msg: format!("measurement field {field} out of range"),
                    });
                }
                self.index(rec);
            }
        }
        Ok(())
    }

    fn append(&mut self, entry: &Entry) -> Result<(), StoreError> {
        if let Some(w) = self.log.as_mut() {
            serde_json::to_writer(&mut *w, entry).map_err(io::Error::from)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Ok(())
    }

    pub fn interval_s(&self) -> u32 {
        self.interval_s
    }

    pub fn set_interval_s(&mut self, interval_s: u32) -> Result<(), StoreError> {
        let e = Entry::Config { interval_s };
        self.apply(e.clone())?;
        self.append(&e)
    }

    fn insert_square(&mut self, sq: SquareDefinition) -> Result<(), StoreError> {
        sq.validate().map_err(|source| StoreError::Square {
            id: sq.id.clone(),
            source,
        })?;
        self.squares.retain(|s| s.id != sq.id);
        self.squares.push(sq);
        self.squares.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(())
    }

    pub fn add_square(&mut self, sq: SquareDefinition) -> Result<(), StoreError> {
        let e = Entry::Square(sq.clone());
        self.insert_square(sq)?;
        self.append(&e)
    }

    pub fn squares(&self) -> &[SquareDefinition] {
        &self.squares
    }

    fn insert_reference(&mut self, r: ReferenceSample) {
        match self.reference.binary_search_by(|s| s.time.cmp(&r.time)) {
            Ok(i) => self.reference[i] = r,
            Err(i) => self.reference.insert(i, r),
        }
    }

    pub fn add_reference(&mut self, r: ReferenceSample) -> Result<(), StoreError> {
        let e = Entry::Reference(r.clone());
        self.insert_reference(r);
        self.append(&e)
    }

    pub fn reference(&self) -> &[ReferenceSample] {
        &self.reference
    }

    fn register(&mut self, dev_eui: DevEui, label: Option<String>, at: DateTime<Utc>) -> bool {
        if let Some(l) = &label {
            self.labels.insert(dev_eui, l.clone());
        }
        if let Some(d) = self.devices.get_mut(&dev_eui) {
            if label.is_some() {
                d.label = label;
            }
            return false;
        }
        self.devices.insert(
            dev_eui,
            DeviceInfo {
                dev_eui,
                label: label.or_else(|| self.labels.get(&dev_eui).cloned()),
                registered_at: at,
                last_seen: at,
                square_id: None,
                unlocated: false,
                battery_pct: None,
                frames: 0,
            },
        );
        true
    }

    /// Pre-provisions a device with a human label.
    pub fn register_device(&mut self, dev_eui: DevEui, label: Option<String>, at: DateTime<Utc>) -> Result<(), StoreError> {
        self.register(dev_eui, label.clone(), at);
        self.append(&Entry::Device { dev_eui, label, at })
    }

    pub fn device(&self, dev_eui: &DevEui) -> Option<&DeviceInfo> {
        self.devices.get(dev_eui)
    }

    pub fn devices(&self) -> impl Iterator<Item = &DeviceInfo> {
        self.devices.values()
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    pub fn records(&self) -> impl Iterator<Item = &MeasurementRecord> {
        self.records.values()
    }

    /// Square containing `fix`, first by id when squares overlap.
    pub fn find_square(&self, fix: &GeoPosition) -> Option<&SquareDefinition> {
        if !fix.has_fix() {
            return None;
        }
        self.squares.iter().find(|sq| contains(fix, &sq.boundary))
    }

    /// Updates the device's square from a valid fix and returns it.
    pub fn assign_square(&mut self, dev_eui: &DevEui, fix: &GeoPosition) -> Option<String> {
        let found = self.find_square(fix).map(|s| s.id.clone());
        let dev = self.devices.get_mut(dev_eui)?;
        if !fix.has_fix() {
            return dev.square_id.clone();
        }
        dev.unlocated = found.is_none();
        dev.square_id = found.clone();
        found
    }

    fn index(&mut self, rec: MeasurementRecord) {
        let dev = self.devices.get_mut(&rec.dev_eui).expect("device registered before indexing");
        if rec.frame.position.has_fix() {
            dev.square_id = rec.square_id.clone();
            dev.unlocated = rec.square_id.is_none();
        }
        if rec.received_at >= dev.last_seen || dev.frames == 0 {
            dev.last_seen = rec.received_at;
            dev.battery_pct = rec.frame.battery();
        }
        dev.frames += 1;
        self.records.insert((rec.dev_eui, rec.fcnt), rec);
    }

    /// Decodes and stores one uplink; replays of a known `(dev_eui, fcnt)`
    /// are acknowledged without storing anything.
    pub fn ingest_uplink(&mut self, env: &UplinkEnvelope) -> Result<IngestResult, StoreError> {
        let frame = env.decode()?;
        if self.records.contains_key(&(env.dev_eui, env.fcnt)) {
            return Ok(IngestResult::Duplicate);
        }
        if self.register(env.dev_eui, None, env.received_at) {
            self.append(&Entry::Device {
                dev_eui: env.dev_eui,
                label: None,
                at: env.received_at,
            })?;
        }
        let square_id = if frame.position.has_fix() {
            self.assign_square(&env.dev_eui, &frame.position)
        } else {
            self.devices[&env.dev_eui].square_id.clone()
        };
        let rec = MeasurementRecord {
            dev_eui: env.dev_eui,
            fcnt: env.fcnt,
            port: env.port,
            rssi_dbm: env.rssi_dbm,
            snr_db: env.snr_db,
            received_at: env.received_at,
            square_id,
            frame,
        };
        let entry = Entry::Measurement(rec.clone());
        self.index(rec);
        self.append(&entry)?;
        Ok(IngestResult::Created)
    }

    /// Records with `received_at` in `[from, to)`, ordered by
    /// `(received_at, dev_eui, fcnt)`.
    pub fn query_measurements(
        &self,
        sel: &Selector,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
    ) -> Result<Vec<&MeasurementRecord>, StoreError> {
        check_range(from, to)?;
        match sel {
            Selector::Device(eui) => {
                if !self.devices.contains_key(eui) {
                    return Err(StoreError::UnknownDevice(*eui));
                }
                let mut out: Vec<_> = self
                    .records
                    .range((*eui, 0)..=(*eui, u32::MAX))
                    .map(|(_, r)| r)
                    .filter(|r| r.received_at >= from && r.received_at < to)
                    .collect();
                out.sort_by_key(|r| r.sort_key());
                Ok(out)
            }
            Selector::Square(id) => {
                if !self.squares.iter().any(|s| &s.id == id) {
                    return Err(StoreError::UnknownSquare(id.clone()));
                }
                Ok(self.select(from, to, |r| r.square_id.as_deref() == Some(id.as_str())))
            }
        }
    }

    /// Every record ordered by `(received_at, dev_eui, fcnt)`.
    pub fn records_in_export_order(&self) -> Vec<&MeasurementRecord> {
        let mut out: Vec<_> = self.records.values().collect();
        out.sort_by_key(|r| r.sort_key());
        out
    }

    /// All records in `[from, to)` in export order.
    pub fn range(&self, from: DateTime<Utc>, to: DateTime<Utc>) -> Result<Vec<&MeasurementRecord>, StoreError> {
        check_range(from, to)?;
        Ok(self.select(from, to, |_| true))
    }

    fn select(
        &self,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
        keep: impl Fn(&MeasurementRecord) -> bool,
    ) -> Vec<&MeasurementRecord> {
        let mut out: Vec<_> = self
            .records
            .values()
            .filter(|r| r.received_at >= from && r.received_at < to && keep(r))
            .collect();
        out.sort_by_key(|r| r.sort_key());
        out
    }

    pub fn square_summary(&self, id: &str, date: NaiveDate) -> Result<SquareDaySummary, StoreError> {
        if !self.squares.iter().any(|s| s.id == id) {
            return Err(StoreError::UnknownSquare(id.to_string()));
        }
        let day_start = date.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
        let day_end = day_start + Duration::days(1);
        // frames received up to an interval cycle after midnight still carry
        // intervals of this day
        let span = Duration::seconds(4 * self.interval_s as i64);
        let mut frames = BTreeSet::new();
        let mut sitting = 0u64;
        let mut noise_sum = 0u64;
        let mut noise_n = 0u64;
        let mut tmin: Option<f64> = None;
        let mut tmax: Option<f64> = None;
        for r in self.select(day_start, day_end + span, |r| r.square_id.as_deref() == Some(id)) {
            if r.received_at < day_end {
                let t = r.frame.temperature_c();
                tmin = Some(tmin.map_or(t, |m| m.min(t)));
                tmax = Some(tmax.map_or(t, |m| m.max(t)));
                frames.insert((r.dev_eui, r.fcnt));
            }
            for row in r.intervals(self.interval_s) {
                if row.interval_start.date_naive() != date {
                    continue;
                }
                sitting += row.sitting_min.unwrap_or(0) as u64;
                if let Some(n) = row.noise_db {
                    noise_sum += n as u64;
                    noise_n += 1;
                }
            }
        }
        Ok(SquareDaySummary {
            square_id: id.to_string(),
            date,
            frames: frames.len(),
            sitting_min_total: sitting,
            mean_noise_db: (noise_n > 0).then(|| noise_sum as f64 / noise_n as f64),
            temperature_min_c: tmin,
            temperature_max_c: tmax,
        })
    }
}

fn check_range(from: DateTime<Utc>, to: DateTime<Utc>) -> Result<(), StoreError> {
    if from > to {
        return Err(StoreError::Range {
            from: rfc3339::format(&from),
            to: rfc3339::format(&to),
        });
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::codec::{encode_frame_hex, CodecError};
    use chrono::TimeZone;

    pub fn square(id: &str, lat0: f64, lon0: f64) -> SquareDefinition {
        let d = 0.001;
        SquareDefinition::new(
            id,
            format!("square {id}"),
            vec![
                GeoPosition::from_degrees(lat0, lon0, 0, 0),
                GeoPosition::from_degrees(lat0, lon0 + d, 0, 0),
                GeoPosition::from_degrees(lat0 + d, lon0 + d, 0, 0),
                GeoPosition::from_degrees(lat0 + d, lon0, 0, 0),
            ],
        )
    }

    pub fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2022, 6, 6, 0, 0, 0).unwrap()
    }

    pub fn envelope(eui: u64, fcnt: u32, pos: GeoPosition, sitting: [u8; 4]) -> UplinkEnvelope {
        let frame = SensorFrame {
            debug: if pos.has_fix() { 1 } else { 2 },
            position: pos,
            battery_pct: 90,
            temperature_cc: 2000 + fcnt as i16,
            humidity_crh: 6000,
            sitting_min: sitting,
            noise_db: [50, 51, 52, 53],
            ..Default::default()
        };
        UplinkEnvelope {
            dev_eui: DevEui::from_u64(eui),
            fcnt,
            port: 1,
            payload_hex: encode_frame_hex(&frame).unwrap(),
            rssi_dbm: -110,
            snr_db: -3.25,
            received_at: t0() + Duration::seconds(7200 * (fcnt as i64 + 1)),
        }
    }

    pub fn in_m() -> GeoPosition {
        GeoPosition::from_degrees(47.0005, 8.0005, 30, 100)
    }

    fn store() -> Store {
        let mut s = Store::in_memory();
        s.add_square(square("M", 47.0, 8.0)).unwrap();
        s.add_square(square("V", 47.01, 8.01)).unwrap();
        s
    }

    #[test]
    fn ingest_creates_then_duplicates() {
        let mut s = store();
        let e = envelope(1, 0, in_m(), [1, 2, 3, 4]);
        assert_eq!(s.ingest_uplink(&e).unwrap(), IngestResult::Created);
        assert_eq!(s.record_count(), 1);
        assert_eq!(s.ingest_uplink(&e).unwrap(), IngestResult::Duplicate);
        assert_eq!(s.record_count(), 1);
        let dev = s.device(&DevEui::from_u64(1)).unwrap();
        assert_eq!(dev.square_id.as_deref(), Some("M"));
        assert_eq!(dev.frames, 1);
    }

    #[test]
    fn short_payload_rejected() {
        let mut s = store();
        let mut e = envelope(1, 0, in_m(), [0; 4]);
        e.payload_hex.truncate(56);
        let err = s.ingest_uplink(&e).unwrap_err();
        assert!(matches!(err, StoreError::Decode(EnvelopeError::Payload(CodecError::Length(28)))));
        assert_eq!(s.record_count(), 0);
        assert!(s.device(&DevEui::from_u64(1)).is_none());
    }

    #[test]
    fn no_fix_keeps_assignment_and_outside_flags_unlocated() {
        let mut s = store();
        s.ingest_uplink(&envelope(1, 0, in_m(), [0; 4])).unwrap();
        s.ingest_uplink(&envelope(1, 1, GeoPosition::no_fix(5), [0; 4])).unwrap();
        let eui = DevEui::from_u64(1);
        assert_eq!(s.device(&eui).unwrap().square_id.as_deref(), Some("M"));
        assert_eq!(s.records().last().unwrap().square_id.as_deref(), Some("M"));
        assert_eq!(s.assign_square(&eui, &GeoPosition::no_fix(0)).as_deref(), Some("M"));

        let far = GeoPosition::from_degrees(10.0, 10.0, 30, 0);
        s.ingest_uplink(&envelope(1, 2, far, [0; 4])).unwrap();
        let d = s.device(&eui).unwrap();
        assert_eq!(d.square_id, None);
        assert!(d.unlocated);
    }

    #[test]
    fn overlapping_squares_pick_first_id() {
        let mut s = Store::in_memory();
        s.add_square(square("Z", 47.0, 8.0)).unwrap();
        s.add_square(square("A", 47.0, 8.0)).unwrap();
        s.ingest_uplink(&envelope(1, 0, in_m(), [0; 4])).unwrap();
        assert_eq!(s.device(&DevEui::from_u64(1)).unwrap().square_id.as_deref(), Some("A"));
    }

    #[test]
    fn queries() {
        let mut s = store();
        let all = t0()..t0() + Duration::days(30);
        assert!(s.range(all.start, all.end).unwrap().is_empty());
        for f in 0..10 {
            s.ingest_uplink(&envelope(1, f, in_m(), [0; 4])).unwrap();
            s.ingest_uplink(&envelope(2, f, GeoPosition::from_degrees(47.0105, 8.0105, 9, 0), [0; 4]))
                .unwrap();
        }
        let dev1 = s.query_measurements(&Selector::Device(DevEui::from_u64(1)), all.start, all.end).unwrap();
        assert_eq!(dev1.len(), 10);
        let half_end = t0() + Duration::seconds(7200 * 5);
        let half = s.query_measurements(&Selector::Device(DevEui::from_u64(1)), all.start, half_end).unwrap();
        let brute = s
            .records()
            .filter(|r| r.dev_eui == DevEui::from_u64(1) && r.received_at >= all.start && r.received_at < half_end)
            .count();
        assert_eq!(half.len(), brute);
        assert_eq!(half.len(), 4);
        let v = s.query_measurements(&Selector::Square("V".into()), all.start, all.end).unwrap();
        assert!(v.iter().all(|r| r.dev_eui == DevEui::from_u64(2)));
        let both = s.range(all.start, all.end).unwrap();
        assert!(both.windows(2).all(|w| w[0].sort_key() <= w[1].sort_key()));
        assert!(s
            .query_measurements(&Selector::Device(DevEui::from_u64(9)), all.start, all.end)
            .unwrap_err()
            .is_not_found());
        assert!(s
            .query_measurements(&Selector::Square("Q".into()), all.start, all.end)
            .unwrap_err()
            .is_not_found());
        assert!(matches!(s.range(all.end, all.start), Err(StoreError::Range { .. })));
    }

    #[test]
    fn interval_rows_back_computed() {
        let mut s = store();
        s.ingest_uplink(&envelope(1, 0, in_m(), [1, 2, 3, 4])).unwrap();
        let r = s.records().next().unwrap();
        let rows = r.intervals(1800);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.interval_start, r.received_at - Duration::seconds(1800 * (4 - i as i64)));
            assert_eq!(row.sitting_min, Some(i as u8 + 1));
        }
        assert_eq!(rows[0].interval_start, t0());
    }

    #[test]
    fn summary_per_day() {
        let mut s = store();
        for f in 0..12 {
            s.ingest_uplink(&envelope(1, f, in_m(), [1, 1, 1, 1])).unwrap();
        }
        let sum = s.square_summary("M", t0().date_naive()).unwrap();
        // 11 frames arrive on the day; the 12th (at midnight) carries its intervals
        assert_eq!(sum.frames, 11);
        assert_eq!(sum.sitting_min_total, 48);
        assert_eq!(sum.mean_noise_db, Some(51.5));
        assert_eq!(sum.temperature_min_c, Some(20.0));
        assert_eq!(sum.temperature_max_c, Some(20.10));
        assert!(s.square_summary("Q", t0().date_naive()).unwrap_err().is_not_found());
    }

    #[test]
    fn persistence_replays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        {
            let mut s = Store::open(&path).unwrap();
            s.add_square(square("M", 47.0, 8.0)).unwrap();
            s.register_device(DevEui::from_u64(1), Some("chair-1".into()), t0()).unwrap();
            for f in 0..5 {
                s.ingest_uplink(&envelope(1, f, in_m(), [f as u8; 4])).unwrap();
            }
            s.add_reference(ReferenceSample {
                time: t0(),
                temperature_c: 18.5,
                raining: false,
            })
            .unwrap();
        }
        let s = Store::open(&path).unwrap();
        assert_eq!(s.record_count(), 5);
        assert_eq!(s.squares().len(), 1);
        assert_eq!(s.reference().len(), 1);
        let d = s.device(&DevEui::from_u64(1)).unwrap();
        assert_eq!(d.label.as_deref(), Some("chair-1"));
        assert_eq!(d.square_id.as_deref(), Some("M"));
        assert_eq!(d.frames, 5);
        let mut mem = store();
        for f in 0..5 {
            mem.ingest_uplink(&envelope(1, f, in_m(), [f as u8; 4])).unwrap();
        }
        let a: Vec<_> = s.records().cloned().collect();
        let b: Vec<_> = mem.records().cloned().collect();
        assert_eq!(a, b);
    }

    #[test]
    fn corrupt_line_reported() {
        let mut s = Store::in_memory();
        let err = s.replay("{\"kind\":\"config\",\"interval_s\":1800}\nnot json\n".as_bytes()).unwrap_err();
        assert!(matches!(err, StoreError::Corrupt { line: 2, .. }));
    }
}
