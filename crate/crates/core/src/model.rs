//! Domain values shared across the node simulator, the server and analytics.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, NaiveDate, Timelike, Utc, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Accuracy value reserved for "no position fix obtained".
pub const NO_FIX: u16 = u16::MAX;

pub const LAT_E7_LIMIT: i32 = 900_000_000;
pub const LON_E7_LIMIT: i32 = 1_800_000_000;

/// A GNSS position as carried in the uplink frame.
///
/// Coordinates are fixed point in units of 1e-7 degree, the accuracy is in
/// decimeters and the fix time is in seconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct GeoPosition {
    pub latitude_e7: i32,
    pub longitude_e7: i32,
    pub accuracy_dm: u16,
    pub fix_time_s: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PositionError {
    #[error("latitude {0} outside [-90, 90] degrees")]
    Latitude(i32),
    #[error("longitude {0} outside [-180, 180] degrees")]
    Longitude(i32),
    #[error("position without fix must have zero coordinates")]
    NoFixCoordinates,
}

impl GeoPosition {
    pub fn new(latitude_e7: i32, longitude_e7: i32, accuracy_dm: u16, fix_time_s: u32) -> Self {
        Self {
            latitude_e7,
            longitude_e7,
            accuracy_dm,
            fix_time_s,
        }
    }

    /// Builds a fixed position from degrees.
    pub fn from_degrees(lat: f64, lon: f64, accuracy_dm: u16, fix_time_s: u32) -> Self {
        Self::new(degrees_to_e7(lat), degrees_to_e7(lon), accuracy_dm, fix_time_s)
    }

    pub fn no_fix(fix_time_s: u32) -> Self {
        Self::new(0, 0, NO_FIX, fix_time_s)
    }

    pub fn has_fix(&self) -> bool {
        self.accuracy_dm != NO_FIX
    }

    pub fn latitude_deg(&self) -> f64 {
        self.latitude_e7 as f64 / 1e7
    }

    pub fn longitude_deg(&self) -> f64 {
        self.longitude_e7 as f64 / 1e7
    }

    pub fn validate(&self) -> Result<(), PositionError> {
        if !(-LAT_E7_LIMIT..=LAT_E7_LIMIT).contains(&self.latitude_e7) {
            return Err(PositionError::Latitude(self.latitude_e7));
        }
        if !(-LON_E7_LIMIT..=LON_E7_LIMIT).contains(&self.longitude_e7) {
            return Err(PositionError::Longitude(self.longitude_e7));
        }
        if !self.has_fix() && (self.latitude_e7 != 0 || self.longitude_e7 != 0) {
            return Err(PositionError::NoFixCoordinates);
        }
        Ok(())
    }
}

pub fn degrees_to_e7(deg: f64) -> i32 {
    (deg * 1e7).round() as i32
}

/// 64-bit LoRaWAN device EUI, rendered as 16 lowercase hex characters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DevEui(pub [u8; 8]);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid device EUI {0:?}: expected 16 hex characters")]
pub struct DevEuiError(pub String);

impl DevEui {
    pub fn from_u64(v: u64) -> Self {
        Self(v.to_be_bytes())
    }

    pub fn as_u64(&self) -> u64 {
        u64::from_be_bytes(self.0)
    }
}

impl fmt::Display for DevEui {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl FromStr for DevEui {
    type Err = DevEuiError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 16 {
            return Err(DevEuiError(s.to_string()));
        }
        let mut out = [0u8; 8];
        hex::decode_to_slice(s, &mut out).map_err(|_| DevEuiError(s.to_string()))?;
        Ok(Self(out))
    }
}

impl Serialize for DevEui {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DevEui {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeIdentity {
    pub dev_eui: DevEui,
    pub label: String,
}

/// Simulation clock: seconds elapsed since a UTC calendar anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SimTime {
    pub t_s: u64,
    pub epoch_utc: DateTime<Utc>,
}

impl SimTime {
    pub fn new(epoch_utc: DateTime<Utc>, t_s: u64) -> Self {
        Self { t_s, epoch_utc }
    }

    pub fn advance(&mut self, secs: u64) {
        self.t_s += secs;
    }

    pub fn utc(&self) -> DateTime<Utc> {
        self.epoch_utc + Duration::seconds(self.t_s as i64)
    }

    pub fn unix_s(&self) -> i64 {
        self.utc().timestamp()
    }

    pub fn date(&self) -> NaiveDate {
        self.utc().date_naive()
    }

    pub fn weekday(&self) -> Weekday {
        self.utc().weekday()
    }

    /// Fractional hour of day in `[0, 24)`.
    pub fn hour_of_day(&self) -> f64 {
        hour_of_day(&self.utc())
    }
}

pub fn hour_of_day(t: &DateTime<Utc>) -> f64 {
    t.num_seconds_from_midnight() as f64 / 3600.0
}

pub fn is_weekend(day: Weekday) -> bool {
    matches!(day, Weekday::Sat | Weekday::Sun)
}

/// Serde adapter rendering timestamps as RFC3339 UTC with a `Z` suffix.
pub mod rfc3339 {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn format(t: &DateTime<Utc>) -> String {
        t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
    }

    pub fn parse(s: &str) -> Result<DateTime<Utc>, chrono::ParseError> {
        DateTime::parse_from_rfc3339(s).map(|t| t.with_timezone(&Utc))
    }

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    #[test]
    fn dev_eui_hex_form() {
        let eui = DevEui::from_u64(0x70b3d57ed0001a2f);
        assert_eq!(eui.to_string(), "70b3d57ed0001a2f");
        assert_eq!("70B3D57ED0001A2F".parse::<DevEui>().unwrap(), eui);
        assert!("70b3d57ed0001a2".parse::<DevEui>().is_err());
        assert!("zzb3d57ed0001a2f".parse::<DevEui>().is_err());
    }

    #[test]
    fn no_fix_requires_zero_coordinates() {
        assert!(GeoPosition::no_fix(10).validate().is_ok());
        let bad = GeoPosition::new(1, 0, NO_FIX, 0);
        assert_eq!(bad.validate(), Err(PositionError::NoFixCoordinates));
        assert!(GeoPosition::new(900_000_001, 0, 5, 0).validate().is_err());
        assert!(GeoPosition::new(0, -1_800_000_001, 5, 0).validate().is_err());
    }

    #[test]
    fn sim_time_buckets_in_utc() {
        // 2024-01-01 was a Monday.
        let epoch = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
        let t = SimTime::new(epoch, 5 * 86_400 + 12 * 3600 + 900);
        assert_eq!(t.weekday(), Weekday::Sat);
        assert!(is_weekend(t.weekday()));
        assert!((t.hour_of_day() - 12.25).abs() < 1e-12);
        assert_eq!(rfc3339::format(&t.utc()), "2024-01-06T12:15:00Z");
    }
}
