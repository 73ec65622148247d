//! Scenario files: squares, nodes, weather, visitors and channel settings
//! for a multi-node run.

mod labeled;
mod world;

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::energy::{BatteryModel, PowerProfile};
use crate::geometry::{contains, SquareDefinition};
use crate::model::{rfc3339, DevEui, GeoPosition};

pub use labeled::{score_detector, DetectionScore, LabeledTrace};
pub use world::{accel_samples, arrival_rate_per_h, build_world, visitor_episodes, Episode, NodeTrace, Weather, World};

/// Validation or parse failure, located by a JSON path such as
/// `nodes[3].lat`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioError {
    pub path: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl ScenarioError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            line: None,
            column: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = if self.path.is_empty() { "." } else { &self.path };
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "{path} (line {l}, column {c}): {}", self.message),
            _ => write!(f, "{path}: {}", self.message),
        }
    }
}

impl std::error::Error for ScenarioError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSquare {
    #[serde(flatten)]
    pub square: SquareDefinition,
    /// Replaces the scenario-wide visitor model for this square.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visitors: Option<VisitorModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioNode {
    pub dev_eui: DevEui,
    pub label: String,
    pub square: String,
    pub lat: f64,
    pub lon: f64,
    #[serde(default)]
    pub sun_exposed: bool,
    #[serde(default)]
    pub dropout_day: Option<f64>,
}

impl ScenarioNode {
    pub fn placement(&self) -> GeoPosition {
        GeoPosition::from_degrees(self.lat, self.lon, 0, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RainEvent {
    /// Zero-based day of the run.
    pub day: u32,
    pub start_hour: f64,
    pub duration_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DayOverride {
    pub day: u32,
    pub temp_min_c: f64,
    pub temp_max_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeatherModel {
    pub temp_min_c: f64,
    pub temp_max_c: f64,
    pub warmest_hour: f64,
    /// Peak extra heating of sun-exposed casings on clear days.
    pub sun_offset_c: f64,
    /// Half-width of the seeded day-to-day wobble of min and max.
    pub day_to_day_c: f64,
    pub rain_events: Vec<RainEvent>,
    /// Days with their own temperature range, e.g. a cold spell.
    pub day_overrides: Vec<DayOverride>,
}

impl Default for WeatherModel {
    fn default() -> Self {
        Self {
            temp_min_c: 16.0,
            temp_max_c: 29.0,
            warmest_hour: 14.0,
            sun_offset_c: 13.0,
            day_to_day_c: 1.0,
            rain_events: Vec::new(),
            day_overrides: Vec::new(),
        }
    }
}

/// Arrival intensities are per chair, per hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VisitorModel {
    pub weekday_lunch_intensity: f64,
    pub evening_intensity: f64,
    pub weekend_intensity: f64,
    pub daytime_intensity: f64,
    pub night_intensity: f64,
    /// Multiplies both arrival rate and stay length while it rains.
    pub rain_aversion: f64,
    /// Nobody sits on days whose mean reference temperature is below this.
    pub cold_cutoff_c: f64,
    pub mean_stay_min: f64,
    pub max_stay_min: f64,
}

impl Default for VisitorModel {
    fn default() -> Self {
        Self {
            weekday_lunch_intensity: 3.0,
            evening_intensity: 0.6,
            weekend_intensity: 0.5,
            daytime_intensity: 0.15,
            night_intensity: 0.01,
            rain_aversion: 0.05,
            cold_cutoff_c: 15.0,
            mean_stay_min: 25.0,
            max_stay_min: 120.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSettings {
    pub loss_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub duration_days: u32,
    #[serde(with = "rfc3339")]
    pub epoch_utc: DateTime<Utc>,
    pub squares: Vec<ScenarioSquare>,
    pub nodes: Vec<ScenarioNode>,
    #[serde(default)]
    pub weather: WeatherModel,
    #[serde(default)]
    pub visitors: VisitorModel,
    #[serde(default)]
    pub channel: ChannelSettings,
    #[serde(default)]
    pub power: PowerProfile,
    #[serde(default)]
    pub battery: BatteryModel,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ScenarioError {
                path: if path == "." { String::new() } else { path },
                line: Some(inner.line()),
                column: Some(inner.column()),
                message: inner.to_string(),
            }
        })?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioLoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioLoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::from_json(&text).map_err(ScenarioLoadError::Invalid)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn duration_s(&self) -> u64 {
        self.duration_days as u64 * 86_400
    }

    pub fn square(&self, id: &str) -> Option<&ScenarioSquare> {
        self.squares.iter().find(|s| s.square.id == id)
    }

    pub fn visitors_for(&self, square: &str) -> &VisitorModel {
        self.square(square)
            .and_then(|s| s.visitors.as_ref())
            .unwrap_or(&self.visitors)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.duration_days == 0 {
            return Err(ScenarioError::at("duration_days", "must be at least 1"));
        }
        if self.epoch_utc.timestamp() < 0 || self.epoch_utc.timestamp() + self.duration_s() as i64 > u32::MAX as i64 {
            return Err(ScenarioError::at("epoch_utc", "run must fit the 32-bit fix time field"));
        }
        if self.epoch_utc.timestamp() % 86_400 != 0 {
            return Err(ScenarioError::at("epoch_utc", "must be a UTC midnight"));
        }
        if self.squares.is_empty() {
            return Err(ScenarioError::at("squares", "at least one square is required"));
        }
        let mut ids = BTreeSet::new();
        for (i, sq) in self.squares.iter().enumerate() {
            if sq.square.id.is_empty() {
                return Err(ScenarioError::at(format!("squares[{i}].id"), "must not be empty"));
            }
            if !ids.insert(sq.square.id.as_str()) {
                return Err(ScenarioError::at(format!("squares[{i}].id"), "duplicate square id"));
            }
            sq.square
                .validate()
                .map_err(|e| ScenarioError::at(format!("squares[{i}].boundary"), e.to_string()))?;
            if let Some(v) = &sq.visitors {
                validate_visitors(v, &format!("squares[{i}].visitors"))?;
            }
        }
        if self.nodes.is_empty() {
            return Err(ScenarioError::at("nodes", "at least one node is required"));
        }
        let mut euis = BTreeSet::new();
        for (i, n) in self.nodes.iter().enumerate() {
            let p = |f: &str| format!("nodes[{i}].{f}");
            if !euis.insert(n.dev_eui) {
                return Err(ScenarioError::at(p("dev_eui"), "duplicate device EUI"));
            }
            let Some(sq) = self.square(&n.square) else {
                return Err(ScenarioError::at(p("square"), format!("unknown square {:?}", n.square)));
            };
            if !(-90.0..=90.0).contains(&n.lat) {
                return Err(ScenarioError::at(p("lat"), "latitude outside [-90, 90]"));
            }
            if !(-180.0..=180.0).contains(&n.lon) {
                return Err(ScenarioError::at(p("lon"), "longitude outside [-180, 180]"));
            }
            if !contains(&n.placement(), &sq.square.boundary) {
                return Err(ScenarioError::at(p("lat"), format!("placement lies outside square {:?}", n.square)));
            }
            if let Some(d) = n.dropout_day {
                if !(d >= 0.0 && d <= self.duration_days as f64) {
                    return Err(ScenarioError::at(p("dropout_day"), "must lie within the run"));
                }
            }
        }
        let w = &self.weather;
        if !(w.temp_min_c < w.temp_max_c) {
            return Err(ScenarioError::at("weather.temp_max_c", "must exceed temp_min_c"));
        }
        if !(0.0..24.0).contains(&w.warmest_hour) {
            return Err(ScenarioError::at("weather.warmest_hour", "must lie in [0, 24)"));
        }
        if !(0.0..=10.0).contains(&w.day_to_day_c) {
            return Err(ScenarioError::at("weather.day_to_day_c", "must lie in [0, 10]"));
        }
        if !(w.sun_offset_c >= 0.0) {
            return Err(ScenarioError::at("weather.sun_offset_c", "must be non-negative"));
        }
        for (i, r) in w.rain_events.iter().enumerate() {
            let p = |f: &str| format!("weather.rain_events[{i}].{f}");
            if r.day >= self.duration_days {
                return Err(ScenarioError::at(p("day"), "outside the run"));
            }
            if !(0.0..24.0).contains(&r.start_hour) {
                return Err(ScenarioError::at(p("start_hour"), "must lie in [0, 24)"));
            }
            if !(r.duration_h > 0.0 && r.duration_h <= 72.0) {
                return Err(ScenarioError::at(p("duration_h"), "must lie in (0, 72]"));
            }
        }
        for (i, d) in w.day_overrides.iter().enumerate() {
            let p = |f: &str| format!("weather.day_overrides[{i}].{f}");
            if d.day >= self.duration_days {
                return Err(ScenarioError::at(p("day"), "outside the run"));
            }
            if !(d.temp_min_c < d.temp_max_c) {
                return Err(ScenarioError::at(p("temp_max_c"), "must exceed temp_min_c"));
            }
        }
        validate_visitors(&self.visitors, "visitors")?;
        if !(0.0..1.0).contains(&self.channel.loss_probability) {
            return Err(ScenarioError::at("channel.loss_probability", "must lie in [0, 1)"));
        }
        self.power
            .validate()
            .map_err(|e| ScenarioError::at("power", e.to_string()))?;
        if !(self.battery.usable_energy_mwh > 0.0) {
            return Err(ScenarioError::at("battery.usable_energy_mwh", "must be positive"));
        }
        Ok(())
    }

    /// Two squares, sixteen chairs, two months, five chairs lost on the way.
    pub fn field_trial() -> Self {
        let sq = |id: &str, name: &str, pts: &[(f64, f64)], visitors: Option<VisitorModel>| ScenarioSquare {
            square: SquareDefinition::new(
                id,
                name,
                pts.iter().map(|&(la, lo)| GeoPosition::from_degrees(la, lo, 0, 0)).collect(),
            ),
            visitors,
        };
        let squares = vec![
            sq(
                "M",
                "Market square (old town)",
                &[
                    (47.37690, 8.54160),
                    (47.37695, 8.54260),
                    (47.37640, 8.54275),
                    (47.37610, 8.54210),
                    (47.37630, 8.54150),
                ],
                None,
            ),
            sq(
                "V",
                "Station forecourt",
                &[(47.37800, 8.53980), (47.37800, 8.54080), (47.37760, 8.54080), (47.37760, 8.53980)],
                Some(VisitorModel {
                    weekday_lunch_intensity: 3.5,
                    evening_intensity: 0.15,
                    weekend_intensity: 0.3,
                    mean_stay_min: 18.0,
                    ..VisitorModel::default()
                }),
            ),
        ];
        let m_spots = [
            (47.37660, 8.54180),
            (47.37665, 8.54200),
            (47.37670, 8.54220),
            (47.37675, 8.54240),
            (47.37650, 8.54190),
            (47.37655, 8.54210),
            (47.37640, 8.54230),
            (47.37680, 8.54170),
            (47.37645, 8.54250),
        ];
        let v_spots = [
            (47.37790, 8.53990),
            (47.37790, 8.54010),
            (47.37785, 8.54030),
            (47.37780, 8.54050),
            (47.37775, 8.54070),
            (47.37770, 8.54000),
            (47.37770, 8.54040),
        ];
        let m_sun = [true, false, true, false, false, true, false, false, false];
        let v_sun = [false, true, false, false, true, false, false];
        let dropouts: [(&str, usize, f64); 5] = [("M", 1, 12.0), ("M", 6, 27.5), ("V", 2, 19.0), ("M", 8, 38.0), ("V", 5, 50.0)];
        let mut nodes = Vec::new();
        for (square, spots, sun) in [("M", &m_spots[..], &m_sun[..]), ("V", &v_spots[..], &v_sun[..])] {
            for (i, &(lat, lon)) in spots.iter().enumerate() {
                let n = nodes.len() as u64 + 1;
                let dropout_day = dropouts
                    .iter()
                    .find(|(s, k, _)| *s == square && *k == i)
                    .map(|d| d.2);
                nodes.push(ScenarioNode {
                    dev_eui: DevEui::from_u64(0x70b3_d57e_d005_0000 + n),
                    label: format!("{square}-{:02}", i + 1),
                    square: square.to_string(),
                    lat,
                    lon,
                    sun_exposed: sun[i],
                    dropout_day,
                });
            }
        }
        let rain = |day, start_hour, duration_h| RainEvent {
            day,
            start_hour,
            duration_h,
        };
        Scenario {
            seed: 2022,
            duration_days: 61,
            epoch_utc: Utc.with_ymd_and_hms(2022, 6, 1, 0, 0, 0).unwrap(),
            squares,
            nodes,
            weather: WeatherModel {
                rain_events: vec![
                    rain(3, 10.0, 6.0),
                    rain(9, 14.5, 4.0),
                    rain(14, 7.0, 9.0),
                    rain(22, 11.5, 5.0),
                    rain(29, 17.0, 5.0),
                    rain(33, 9.0, 7.5),
                    rain(44, 12.0, 3.5),
                    rain(52, 5.5, 10.0),
                ],
                day_overrides: vec![
                    DayOverride {
                        day: 40,
                        temp_min_c: 8.0,
                        temp_max_c: 16.0,
                    },
                    DayOverride {
                        day: 41,
                        temp_min_c: 7.0,
                        temp_max_c: 15.0,
                    },
                    DayOverride {
                        day: 42,
                        temp_min_c: 9.0,
                        temp_max_c: 17.5,
                    },
                ],
                ..WeatherModel::default()
            },
            visitors: VisitorModel::default(),
            channel: ChannelSettings::default(),
            power: PowerProfile::default(),
            battery: BatteryModel::default(),
        }
    }
}

fn validate_visitors(v: &VisitorModel, at: &str) -> Result<(), ScenarioError> {
    let rates = [
        ("weekday_lunch_intensity", v.weekday_lunch_intensity),
        ("evening_intensity", v.evening_intensity),
        ("weekend_intensity", v.weekend_intensity),
        ("daytime_intensity", v.daytime_intensity),
        ("night_intensity", v.night_intensity),
    ];
    for (name, r) in rates {
        if !(r >= 0.0 && r <= 60.0) {
            return Err(ScenarioError::at(format!("{at}.{name}"), "must lie in [0, 60] arrivals per hour"));
        }
    }
    if !(0.0..=1.0).contains(&v.rain_aversion) {
        return Err(ScenarioError::at(format!("{at}.rain_aversion"), "must lie in [0, 1]"));
    }
    if !v.cold_cutoff_c.is_finite() {
        return Err(ScenarioError::at(format!("{at}.cold_cutoff_c"), "must be finite"));
    }
    if !(v.mean_stay_min >= 1.0 && v.max_stay_min >= v.mean_stay_min && v.max_stay_min <= 600.0) {
        return Err(ScenarioError::at(
            format!("{at}.mean_stay_min"),
            "need 1 <= mean_stay_min <= max_stay_min <= 600",
        ));
    }
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioLoadError {
    #[error("cannot read scenario file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid scenario: {0}")]
    Invalid(ScenarioError),
}
