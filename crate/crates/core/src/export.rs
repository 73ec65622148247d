//! Open-data CSV export and its inverse.
//!
//! One row per (frame, interval). The first thirteen columns are the public
//! table; the trailing columns carry the remaining frame and radio fields so
//! that an export can be re-imported without loss.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, Utc};
use thiserror::Error;

use crate::codec::{SensorFrame, INVALID_U8};
use crate::model::{rfc3339, DevEui, GeoPosition, NO_FIX};
use crate::store::MeasurementRecord;

pub const COLUMNS: [&str; 19] = [
    "dev_eui",
    "square_id",
    "received_at",
    "interval_start",
    "sitting_min",
    "noise_db",
    "temperature_c",
    "humidity_rh",
    "battery_pct",
    "lat",
    "lon",
    "accuracy_m",
    "fcnt",
    "header",
    "debug",
    "fix_time",
    "port",
    "rssi_dbm",
    "snr_db",
];

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("csv row {row}: {msg}")]
    Row { row: usize, msg: String },
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Formats `v / 10^decimals` exactly.
pub fn fmt_fixed(v: i64, decimals: u32) -> String {
    let scale = 10i64.pow(decimals);
    let sign = if v < 0 { "-" } else { "" };
    let a = v.unsigned_abs();
    let s = scale as u64;
    if decimals == 0 {
        return format!("{sign}{a}");
    }
    format!("{sign}{}.{:0width$}", a / s, a % s, width = decimals as usize)
}

/// Parses a decimal string into an integer count of `10^-decimals` units,
/// without going through floating point.
pub fn parse_fixed(s: &str, decimals: u32) -> Option<i64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() || frac.len() > decimals as usize {
        return None;
    }
    if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let mut v: i64 = int.parse().ok()?;
    for i in 0..decimals as usize {
        let d = frac.as_bytes().get(i).map_or(0, |b| (b - b'0') as i64);
        v = v.checked_mul(10)?.checked_add(d)?;
    }
    Some(if neg { -v } else { v })
}

fn opt_u8(v: u8) -> String {
    if v == INVALID_U8 {
        String::new()
    } else {
        v.to_string()
    }
}

pub fn write_csv<'a, W: Write>(
    out: W,
    records: impl IntoIterator<Item = &'a MeasurementRecord>,
    interval_s: u32,
) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in records {
        let f = &r.frame;
        let p = &f.position;
        let fixed = p.has_fix();
        let received = rfc3339::format(&r.received_at);
        for (i, row) in r.intervals(interval_s).iter().enumerate() {
            w.write_record([
                r.dev_eui.to_string(),
                r.square_id.clone().unwrap_or_default(),
                received.clone(),
                rfc3339::format(&row.interval_start),
                opt_u8(f.sitting_min[i]),
                opt_u8(f.noise_db[i]),
                fmt_fixed(f.temperature_cc as i64, 2),
                fmt_fixed(f.humidity_crh as i64, 2),
                opt_u8(f.battery_pct),
                if fixed { fmt_fixed(p.latitude_e7 as i64, 7) } else { String::new() },
                if fixed { fmt_fixed(p.longitude_e7 as i64, 7) } else { String::new() },
                if fixed { fmt_fixed(p.accuracy_dm as i64, 1) } else { String::new() },
                r.fcnt.to_string(),
                f.header.to_string(),
                f.debug.to_string(),
                p.fix_time_s.to_string(),
                r.port.to_string(),
                r.rssi_dbm.to_string(),
                r.snr_db.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn export_csv<'a>(
    records: impl IntoIterator<Item = &'a MeasurementRecord>,
    interval_s: u32,
) -> Result<Vec<u8>, CsvError> {
    let mut buf = Vec::new();
    write_csv(&mut buf, records, interval_s)?;
    Ok(buf)
}

fn same_intervals(f: &SensorFrame, like: &SensorFrame) -> SensorFrame {
    SensorFrame {
        sitting_min: like.sitting_min,
        noise_db: like.noise_db,
        ..*f
    }
}

struct RowCtx(usize);

impl RowCtx {
    fn err(&self, msg: impl Into<String>) -> CsvError {
        CsvError::Row {
            row: self.0,
            msg: msg.into(),
        }
    }

    fn num<T: std::str::FromStr>(&self, col: &str, s: &str) -> Result<T, CsvError> {
        s.parse().map_err(|_| self.err(format!("{col}: cannot parse {s:?}")))
    }

    fn opt_u8(&self, col: &str, s: &str) -> Result<u8, CsvError> {
        if s.is_empty() {
            Ok(INVALID_U8)
        } else {
            self.num(col, s)
        }
    }

    fn fixed<T: TryFrom<i64>>(&self, col: &str, s: &str, decimals: u32) -> Result<T, CsvError> {
        parse_fixed(s, decimals)
            .and_then(|v| T::try_from(v).ok())
            .ok_or_else(|| self.err(format!("{col}: cannot parse {s:?}")))
    }
}

/// Rebuilds measurement records from an export.
pub fn import_csv<R: Read>(input: R, interval_s: u32) -> Result<Vec<MeasurementRecord>, CsvError> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != COLUMNS {
        return Err(CsvError::Header(header));
    }
    let mut partial: BTreeMap<(DevEui, u32), (MeasurementRecord, [bool; 4], usize)> = BTreeMap::new();
    for (i, row) in rd.records().enumerate() {
        let row = row?;
        let cx = RowCtx(i + 2);
        let get = |k: usize| row.get(k).unwrap_or("");
        let dev_eui: DevEui = get(0).parse().map_err(|e: crate::model::DevEuiError| cx.err(e.to_string()))?;
        let received_at = rfc3339::parse(get(2)).map_err(|e| cx.err(format!("received_at: {e}")))?;
        let interval_start: DateTime<Utc> =
            rfc3339::parse(get(3)).map_err(|e| cx.err(format!("interval_start: {e}")))?;
        let back = (received_at - interval_start).num_seconds();
        if back <= 0 || back % interval_s as i64 != 0 || back / interval_s as i64 > 4 {
            return Err(cx.err("interval_start does not line up with received_at"));
        }
        let slot = (4 - back / interval_s as i64) as usize;
        let fixed = !get(11).is_empty();
        let position = if fixed {
            GeoPosition {
                latitude_e7: cx.fixed("lat", get(9), 7)?,
                longitude_e7: cx.fixed("lon", get(10), 7)?,
                accuracy_dm: cx.fixed("accuracy_m", get(11), 1)?,
                fix_time_s: cx.num("fix_time", get(15))?,
            }
        } else {
            GeoPosition {
                latitude_e7: 0,
                longitude_e7: 0,
                accuracy_dm: NO_FIX,
                fix_time_s: cx.num("fix_time", get(15))?,
            }
        };
        let frame = SensorFrame {
            header: cx.num("header", get(13))?,
            debug: cx.num("debug", get(14))?,
            position,
            battery_pct: cx.opt_u8("battery_pct", get(8))?,
            temperature_cc: cx.fixed("temperature_c", get(6), 2)?,
            humidity_crh: cx.fixed("humidity_rh", get(7), 2)?,
            sitting_min: [0; 4],
            noise_db: [0; 4],
        };
        let square_id = Some(get(1).to_string()).filter(|s| !s.is_empty());
        let rec = MeasurementRecord {
            dev_eui,
            fcnt: cx.num("fcnt", get(12))?,
            port: cx.num("port", get(16))?,
            rssi_dbm: cx.num("rssi_dbm", get(17))?,
            snr_db: cx.num("snr_db", get(18))?,
            received_at,
            square_id,
            frame,
        };
        let sitting = cx.opt_u8("sitting_min", get(4))?;
        let noise = cx.opt_u8("noise_db", get(5))?;
        let entry = partial
            .entry((rec.dev_eui, rec.fcnt))
            .or_insert_with(|| (rec.clone(), [false; 4], i + 2));
        let (base, seen, _) = entry;
        if base.received_at != rec.received_at
            || base.square_id != rec.square_id
            || base.frame != same_intervals(&rec.frame, &base.frame)
            || base.port != rec.port
            || base.rssi_dbm != rec.rssi_dbm
            || base.snr_db.to_bits() != rec.snr_db.to_bits()
        {
            return Err(cx.err("frame fields differ between interval rows"));
        }
        if seen[slot] {
            return Err(cx.err(format!("duplicate interval {slot}")));
        }
        seen[slot] = true;
        base.frame.sitting_min[slot] = sitting;
        base.frame.noise_db[slot] = noise;
    }
    let mut out = Vec::with_capacity(partial.len());
    for (_, (rec, seen, first_row)) in partial {
        if seen.iter().any(|s| !s) {
            return Err(CsvError::Row {
                row: first_row,
                msg: format!("frame {} fcnt {} is missing interval rows", rec.dev_eui, rec.fcnt),
            });
        }
        if let Some(field) = rec.frame.check() {
            return Err(CsvError::Row {
                row: first_row,
                msg: format!("field {field} out of range"),
            });
        }
        out.push(rec);
    }
    out.sort_by_key(|r| r.sort_key());
    Ok(out)
}
