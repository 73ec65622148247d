//! Analytics over a whole store, shared by the HTTP API and the command line.

use chrono::{DateTime, Utc};
use serde::Serialize;
use thiserror::Error;

use crate::analytics::{
    daily_sitting_vs_temperature, hourly_profile, node_temperature_series, occupancy_vs_humidity, rain_flag,
    sun_exposure_classify, AnalyticsError, DailySitting, DayExposure, DaytimeWindow, HourlyProfile,
    ReferenceSeries, Scatter,
};
use crate::model::{rfc3339, DevEui};
use crate::store::{Store, StoreError};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
}

impl ReportError {
    pub fn is_not_found(&self) -> bool {
        matches!(self, ReportError::Store(e) if e.is_not_found())
    }
}

pub fn reference_series(store: &Store) -> Result<ReferenceSeries, ReportError> {
    Ok(ReferenceSeries::new(store.reference().to_vec())?)
}

fn known_square(store: &Store, id: &str) -> Result<(), ReportError> {
    if store.squares().iter().any(|s| s.id == id) {
        Ok(())
    } else {
        Err(StoreError::UnknownSquare(id.to_string()).into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeExposure {
    pub dev_eui: DevEui,
    pub label: Option<String>,
    pub days: Vec<DayExposure>,
}

/// Sun or shade per device and day. With no device given, devices without
/// daytime readings are left out.
pub fn sun_report(
    store: &Store,
    dev_eui: Option<DevEui>,
    window: DaytimeWindow,
    delta_c: f64,
) -> Result<Vec<NodeExposure>, ReportError> {
    let reference = reference_series(store)?;
    let devices: Vec<DevEui> = match dev_eui {
        Some(d) => {
            store.device(&d).ok_or(StoreError::UnknownDevice(d))?;
            vec![d]
        }
        None => store.devices().map(|d| d.dev_eui).collect(),
    };
    let mut out = Vec::new();
    for d in devices {
        let series = node_temperature_series(store.records(), &d);
        match sun_exposure_classify(&series, &reference, window, delta_c) {
            Ok(days) => out.push(NodeExposure {
                dev_eui: d,
                label: store.device(&d).and_then(|i| i.label.clone()),
                days,
            }),
            Err(AnalyticsError::Coverage) if dev_eui.is_none() => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RainRow {
    pub dev_eui: DevEui,
    pub square_id: Option<String>,
    #[serde(with = "rfc3339")]
    pub received_at: DateTime<Utc>,
    pub humidity_rh: f64,
    pub raining: bool,
}

/// Rain flag of every stored frame, optionally limited to one square.
pub fn rain_report(store: &Store, square_id: Option<&str>) -> Result<Vec<RainRow>, ReportError> {
    if let Some(id) = square_id {
        known_square(store, id)?;
    }
    store
        .records_in_export_order()
        .into_iter()
        .filter(|r| square_id.is_none() || r.square_id.as_deref() == square_id)
        .map(|r| {
            let h = r.frame.humidity_rh();
            Ok(RainRow {
                dev_eui: r.dev_eui,
                square_id: r.square_id.clone(),
                received_at: r.received_at,
                humidity_rh: h,
                raining: rain_flag(h)?,
            })
        })
        .collect()
}

pub fn scatter_report(store: &Store, square_id: &str) -> Result<Scatter, ReportError> {
    known_square(store, square_id)?;
    Ok(occupancy_vs_humidity(store.records_in_export_order(), square_id, store.interval_s()))
}

pub fn profile_report(store: &Store, square_id: &str, bin_h: f64) -> Result<HourlyProfile, ReportError> {
    known_square(store, square_id)?;
    Ok(hourly_profile(store.records(), square_id, bin_h, store.interval_s())?)
}

pub fn daily_report(store: &Store) -> Result<Vec<DailySitting>, ReportError> {
    let reference = reference_series(store)?;
    Ok(daily_sitting_vs_temperature(store.records(), &reference, store.interval_s())?)
}

fn to_csv<const N: usize>(header: [&str; N], rows: impl IntoIterator<Item = [String; N]>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn sun_csv(rows: &[NodeExposure]) -> Vec<u8> {
    to_csv(
        ["dev_eui", "label", "date", "samples", "mean_excess_c", "exposure"],
        rows.iter().flat_map(|n| {
            n.days.iter().map(move |d| {
                [
                    n.dev_eui.to_string(),
                    n.label.clone().unwrap_or_default(),
                    d.date.to_string(),
                    d.samples.to_string(),
                    format!("{:.3}", d.mean_excess_c),
                    serde_json::to_value(d.label).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                ]
            })
        }),
    )
}

pub fn rain_csv(rows: &[RainRow]) -> Vec<u8> {
    to_csv(
        ["dev_eui", "square_id", "received_at", "humidity_rh", "raining"],
        rows.iter().map(|r| {
            [
                r.dev_eui.to_string(),
                r.square_id.clone().unwrap_or_default(),
                rfc3339::format(&r.received_at),
                format!("{:.2}", r.humidity_rh),
                r.raining.to_string(),
            ]
        }),
    )
}

pub fn scatter_csv(s: &Scatter) -> Vec<u8> {
    to_csv(
        ["square_id", "dev_eui", "interval_start", "humidity_rh", "sitting_min"],
        s.points.iter().map(|p| {
            [
                s.square_id.clone(),
                p.dev_eui.to_string(),
                rfc3339::format(&p.interval_start),
                format!("{:.2}", p.humidity_rh),
                p.sitting_min.to_string(),
            ]
        }),
    )
}

pub fn profile_csv(p: &HourlyProfile) -> Vec<u8> {
    to_csv(
        ["square_id", "bin_start_h", "weekday_min", "weekend_min"],
        (0..p.weekday.len()).map(|i| {
            [
                p.square_id.clone(),
                format!("{:.2}", p.bin_start_h(i)),
                format!("{:.3}", p.weekday[i]),
                format!("{:.3}", p.weekend[i]),
            ]
        }),
    )
}

pub fn daily_csv(rows: &[DailySitting]) -> Vec<u8> {
    to_csv(
        ["date", "square_id", "total_sitting_min", "ref_mean_temp_c"],
        rows.iter().map(|d| {
            [
                d.date.to_string(),
                d.square_id.clone(),
                d.total_sitting_min.to_string(),
                format!("{:.2}", d.ref_mean_temp_c),
            ]
        }),
    )
}
