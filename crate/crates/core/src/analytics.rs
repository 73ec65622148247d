//! Combining stored chair measurements with a city reference sensor.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Datelike, Duration, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{hour_of_day, is_weekend, rfc3339, DevEui};
use crate::store::MeasurementRecord;

pub const RAIN_HUMIDITY_RH: f64 = 80.0;
pub const BUSY_SITTING_MIN: u8 = 15;
pub const LUNCH_HOUR: (f64, f64) = (12.0, 13.0);
pub const DEFAULT_BIN_H: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("no overlapping node and reference samples")]
    Coverage,
    #[error("reference series has no data for {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", "))]
    MissingReferenceDays(Vec<NaiveDate>),
    #[error("humidity {0} outside [0, 100] %RH")]
    Range(f64),
    #[error("bin width {0} h does not divide 24 h")]
    Bin(f64),
    #[error("reference timestamps must be strictly increasing (sample {0})")]
    Unordered(usize),
    #[error("invalid parameter: {0}")]
    Param(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSample {
    #[serde(with = "rfc3339")]
    pub time: DateTime<Utc>,
    pub temperature_c: f64,
    pub raining: bool,
}

/// City reference sensor readings with strictly increasing timestamps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReferenceSeries {
    samples: Vec<ReferenceSample>,
}

impl ReferenceSeries {
    pub fn new(samples: Vec<ReferenceSample>) -> Result<Self, AnalyticsError> {
        if let Some(i) = samples.windows(2).position(|w| w[1].time <= w[0].time) {
            return Err(AnalyticsError::Unordered(i + 1));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[ReferenceSample] {
        &self.samples
    }

    /// Linear interpolation; `None` outside the covered span.
    pub fn temperature_at(&self, t: DateTime<Utc>) -> Option<f64> {
        let i = self.samples.partition_point(|s| s.time < t);
        let s = self.samples.get(i)?;
        if s.time == t {
            return Some(s.temperature_c);
        }
        let prev = self.samples.get(i.checked_sub(1)?)?;
        let span = (s.time - prev.time).num_milliseconds() as f64;
        let frac = (t - prev.time).num_milliseconds() as f64 / span;
        Some(prev.temperature_c + frac * (s.temperature_c - prev.temperature_c))
    }

    pub fn daily_mean_temperature(&self) -> BTreeMap<NaiveDate, f64> {
        let mut acc: BTreeMap<NaiveDate, (f64, usize)> = BTreeMap::new();
        for s in &self.samples {
            let e = acc.entry(s.time.date_naive()).or_default();
            e.0 += s.temperature_c;
            e.1 += 1;
        }
        acc.into_iter().map(|(d, (sum, n))| (d, sum / n as f64)).collect()
    }

    /// Days on which no sample reports rain.
    pub fn clear_days(&self) -> BTreeSet<NaiveDate> {
        let mut wet = BTreeSet::new();
        let mut all = BTreeSet::new();
        for s in &self.samples {
            all.insert(s.time.date_naive());
            if s.raining {
                wet.insert(s.time.date_naive());
            }
        }
        all.difference(&wet).copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exposure {
    Sun,
    Shade,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DaytimeWindow {
    pub start_h: f64,
    pub end_h: f64,
}

impl Default for DaytimeWindow {
    fn default() -> Self {
        Self {
            start_h: 10.0,
            end_h: 16.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayExposure {
    pub date: NaiveDate,
    pub samples: usize,
    pub mean_excess_c: f64,
    pub label: Exposure,
}

pub const DEFAULT_SUN_DELTA_C: f64 = 5.0;

/// Labels each day as sunlit when the node runs at least `delta_c` warmer
/// than the reference on average inside the daytime window.
pub fn sun_exposure_classify(
    node_series: &[(DateTime<Utc>, f64)],
    reference: &ReferenceSeries,
    window: DaytimeWindow,
    delta_c: f64,
) -> Result<Vec<DayExposure>, AnalyticsError> {
    if !(delta_c > 0.0) {
        return Err(AnalyticsError::Param("delta_c must be positive"));
    }
    if !(window.start_h < window.end_h) {
        return Err(AnalyticsError::Param("daytime window must be non-empty"));
    }
    let mut per_day: BTreeMap<NaiveDate, (f64, usize)> = BTreeMap::new();
    for &(t, temp) in node_series {
        let h = hour_of_day(&t);
        if h < window.start_h || h >= window.end_h {
            continue;
        }
        let Some(r) = reference.temperature_at(t) else {
            continue;
        };
        let e = per_day.entry(t.date_naive()).or_default();
        e.0 += temp - r;
        e.1 += 1;
    }
    if per_day.is_empty() {
        return Err(AnalyticsError::Coverage);
    }
    Ok(per_day
        .into_iter()
        .map(|(date, (sum, n))| {
            let mean = sum / n as f64;
            // ties within float noise count as reaching the threshold
            let label = if mean >= delta_c - 1e-9 { Exposure::Sun } else { Exposure::Shade };
            DayExposure {
                date,
                samples: n,
                mean_excess_c: mean,
                label,
            }
        })
        .collect())
}

/// Temperature readings of one device, in receive order.
pub fn node_temperature_series<'a>(
    records: impl IntoIterator<Item = &'a MeasurementRecord>,
    dev_eui: &DevEui,
) -> Vec<(DateTime<Utc>, f64)> {
    let mut v: Vec<_> = records
        .into_iter()
        .filter(|r| &r.dev_eui == dev_eui)
        .map(|r| (r.received_at, r.frame.temperature_c()))
        .collect();
    v.sort_by_key(|p| p.0);
    v
}

pub fn rain_flag(humidity_rh: f64) -> Result<bool, AnalyticsError> {
    if !(0.0..=100.0).contains(&humidity_rh) {
        return Err(AnalyticsError::Range(humidity_rh));
    }
    Ok(humidity_rh >= RAIN_HUMIDITY_RH)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub dev_eui: DevEui,
    #[serde(with = "rfc3339")]
    pub interval_start: DateTime<Utc>,
    pub humidity_rh: f64,
    pub sitting_min: u8,
}

/// Point counts split at 80 %RH and 15 minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QuadrantCounts {
    pub dry_low: usize,
    pub dry_high: usize,
    pub wet_low: usize,
    pub wet_high: usize,
}

impl QuadrantCounts {
    pub fn add(&mut self, humidity_rh: f64, sitting_min: u8) {
        let wet = humidity_rh >= RAIN_HUMIDITY_RH;
        let high = sitting_min >= BUSY_SITTING_MIN;
        match (wet, high) {
            (false, false) => self.dry_low += 1,
            (false, true) => self.dry_high += 1,
            (true, false) => self.wet_low += 1,
            (true, true) => self.wet_high += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.dry_low + self.dry_high + self.wet_low + self.wet_high
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scatter {
    pub square_id: String,
    pub points: Vec<ScatterPoint>,
    pub quadrants: QuadrantCounts,
}

/// One point per (frame, interval) of the square; the frame's humidity
/// reading applies to all four of its intervals. Invalid sitting values are
/// skipped.
pub fn occupancy_vs_humidity<'a>(
    records: impl IntoIterator<Item = &'a MeasurementRecord>,
    square_id: &str,
    interval_s: u32,
) -> Scatter {
    let mut points = Vec::new();
    let mut quadrants = QuadrantCounts::default();
    for r in records {
        if r.square_id.as_deref() != Some(square_id) {
            continue;
        }
        let h = r.frame.humidity_rh();
        for row in r.intervals(interval_s) {
            let Some(s) = row.sitting_min else { continue };
            quadrants.add(h, s);
            points.push(ScatterPoint {
                dev_eui: r.dev_eui,
                interval_start: row.interval_start,
                humidity_rh: h,
                sitting_min: s,
            });
        }
    }
    Scatter {
        square_id: square_id.to_string(),
        points,
        quadrants,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyProfile {
    pub square_id: String,
    pub bin_h: f64,
    /// Sitting minutes per bin, summed over Monday-Friday and divided by 5.
    pub weekday: Vec<f64>,
    /// Sitting minutes per bin, summed over Saturday-Sunday and divided by 2.
    pub weekend: Vec<f64>,
    pub lunch_hour: (f64, f64),
}

impl HourlyProfile {
    pub fn bin_start_h(&self, i: usize) -> f64 {
        i as f64 * self.bin_h
    }
}

/// Spreads each interval's sitting minutes evenly over the time-of-day bins
/// the interval covers, split into weekday and weekend accumulations.
pub fn hourly_profile<'a>(
    records: impl IntoIterator<Item = &'a MeasurementRecord>,
    square_id: &str,
    bin_h: f64,
    interval_s: u32,
) -> Result<HourlyProfile, AnalyticsError> {
    let bins_f = 24.0 / bin_h;
    if !(bin_h > 0.0) || (bins_f - bins_f.round()).abs() > 1e-9 || bins_f.round() < 1.0 {
        return Err(AnalyticsError::Bin(bin_h));
    }
    let n_bins = bins_f.round() as usize;
    let bin_s = 86_400 / n_bins as i64;
    if bin_s * n_bins as i64 != 86_400 {
        return Err(AnalyticsError::Bin(bin_h));
    }
    let mut weekday = vec![0.0; n_bins];
    let mut weekend = vec![0.0; n_bins];
    for r in records {
        if r.square_id.as_deref() != Some(square_id) {
            continue;
        }
        for row in r.intervals(interval_s) {
            let Some(m) = row.sitting_min else { continue };
            if m == 0 {
                continue;
            }
            let mut t = row.interval_start;
            let end = t + Duration::seconds(interval_s as i64);
            while t < end {
                let secs = t.timestamp().rem_euclid(86_400);
                let bin = (secs / bin_s) as usize;
                let bin_end = t + Duration::seconds(bin_s - secs % bin_s);
                let seg_end = bin_end.min(end);
                let share = m as f64 * (seg_end - t).num_seconds() as f64 / interval_s as f64;
                if is_weekend(t.weekday()) {
                    weekend[bin] += share;
                } else {
                    weekday[bin] += share;
                }
                t = seg_end;
            }
        }
    }
    weekday.iter_mut().for_each(|v| *v /= 5.0);
    weekend.iter_mut().for_each(|v| *v /= 2.0);
    Ok(HourlyProfile {
        square_id: square_id.to_string(),
        bin_h,
        weekday,
        weekend,
        lunch_hour: LUNCH_HOUR,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySitting {
    pub date: NaiveDate,
    pub square_id: String,
    pub total_sitting_min: u64,
    pub ref_mean_temp_c: f64,
}

/// Sitting minutes per day and square next to the day's mean reference
/// temperature. Every reference day gets a row for every square seen in
/// `records`, zero if nobody sat.
pub fn daily_sitting_vs_temperature<'a>(
    records: impl IntoIterator<Item = &'a MeasurementRecord>,
    reference: &ReferenceSeries,
    interval_s: u32,
) -> Result<Vec<DailySitting>, AnalyticsError> {
    let means = reference.daily_mean_temperature();
    let mut totals: BTreeMap<(NaiveDate, String), u64> = BTreeMap::new();
    let mut squares = BTreeSet::new();
    let mut missing = BTreeSet::new();
    for r in records {
        let Some(sq) = r.square_id.as_ref() else { continue };
        squares.insert(sq.clone());
        for row in r.intervals(interval_s) {
            let date = row.interval_start.date_naive();
            if !means.contains_key(&date) {
                missing.insert(date);
                continue;
            }
            *totals.entry((date, sq.clone())).or_default() += row.sitting_min.unwrap_or(0) as u64;
        }
    }
    if !missing.is_empty() {
        return Err(AnalyticsError::MissingReferenceDays(missing.into_iter().collect()));
    }
    let mut out = Vec::with_capacity(means.len() * squares.len());
    for (&date, &mean) in &means {
        for sq in &squares {
            out.push(DailySitting {
                date,
                square_id: sq.clone(),
                total_sitting_min: totals.get(&(date, sq.clone())).copied().unwrap_or(0),
                ref_mean_temp_c: mean,
            });
        }
    }
    Ok(out)
}
