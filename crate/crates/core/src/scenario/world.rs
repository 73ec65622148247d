//! Synthetic weather, visitors and per-node sensor traces.

use std::f64::consts::PI;
use std::sync::Arc;

use chrono::{DateTime, Datelike, Duration, Utc, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Scenario, ScenarioError, ScenarioNode, VisitorModel};
use crate::analytics::{ReferenceSample, ReferenceSeries};
use crate::channel::ChannelModel;
use crate::model::{DevEui, GeoPosition};
use crate::node::EnvTrace;
use crate::rng::{hash3, mix64, signed_unit, unit};

const DAY_S: u64 = 86_400;
const HOUR_S: u64 = 3_600;
const RAIN_FLOOR_RH: f64 = 80.0;
const RAIN_RAMP_H: f64 = 3.0;
const DRYING_TAU_S: f64 = 3_600.0;

const STREAM_DAY: u64 = 0x6461_7973;
const STREAM_NODE: u64 = 0x6e6f_6465;
const STREAM_VISITORS: u64 = 0x7669_7369;
const STREAM_CHANNEL: u64 = 0x6368_616e;
const STREAM_RADIO: u64 = 0x7261_6469;

/// Shared outdoor conditions of a run, as a pure function of time.
#[derive(Debug, Clone, PartialEq)]
pub struct Weather {
    epoch: DateTime<Utc>,
    span_s: u64,
    warmest_hour: f64,
    sun_offset_c: f64,
    /// Per-day (min, max), one extra day past the end.
    ranges: Vec<(f64, f64)>,
    /// Merged `[start, end)` seconds.
    rain: Vec<(u64, u64)>,
    clear: Vec<bool>,
}

impl Weather {
    pub fn from_scenario(s: &Scenario) -> Self {
        let w = &s.weather;
        let days = s.duration_days as usize + 1;
        let mut ranges: Vec<(f64, f64)> = (0..days)
            .map(|d| {
                let h = hash3(s.seed, STREAM_DAY, d as u64);
                let lo = w.temp_min_c + w.day_to_day_c * signed_unit(h);
                let hi = w.temp_max_c + w.day_to_day_c * signed_unit(h.rotate_left(32));
                (lo, hi.max(lo + 0.5))
            })
            .collect();
        for o in &w.day_overrides {
            ranges[o.day as usize] = (o.temp_min_c, o.temp_max_c);
        }
        let mut rain: Vec<(u64, u64)> = w
            .rain_events
            .iter()
            .map(|r| {
                let start = r.day as u64 * DAY_S + (r.start_hour * HOUR_S as f64).round() as u64;
                (start, start + (r.duration_h * HOUR_S as f64).round() as u64)
            })
            .collect();
        rain.sort();
        let mut merged: Vec<(u64, u64)> = Vec::with_capacity(rain.len());
        for (a, b) in rain {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        let mut weather = Self {
            epoch: s.epoch_utc,
            span_s: s.duration_s(),
            warmest_hour: w.warmest_hour,
            sun_offset_c: w.sun_offset_c,
            ranges,
            rain: merged,
            clear: Vec::new(),
        };
        // a day is clear when none of its hourly reference samples sees rain,
        // the same rule the analytics apply
        weather.clear = (0..days as u64)
            .map(|d| (0..24).all(|h| !weather.raining(d * DAY_S + h * HOUR_S)))
            .collect();
        weather
    }

    pub fn epoch(&self) -> DateTime<Utc> {
        self.epoch
    }

    pub fn day_index(&self, t_s: u64) -> usize {
        ((t_s / DAY_S) as usize).min(self.ranges.len() - 1)
    }

    fn hour(t_s: u64) -> f64 {
        (t_s % DAY_S) as f64 / HOUR_S as f64
    }

    pub fn weekday(&self, t_s: u64) -> Weekday {
        (self.epoch + Duration::seconds(t_s as i64)).weekday()
    }

    pub fn day_range_c(&self, day: usize) -> (f64, f64) {
        self.ranges[day.min(self.ranges.len() - 1)]
    }

    /// Mean of the day's sinusoid, equal to the mean of its 24 hourly samples.
    pub fn day_mean_c(&self, day: usize) -> f64 {
        let (lo, hi) = self.day_range_c(day);
        (lo + hi) / 2.0
    }

    pub fn is_clear_day(&self, day: usize) -> bool {
        self.clear.get(day).copied().unwrap_or(true)
    }

    pub fn reference_temperature_c(&self, t_s: u64) -> f64 {
        let (lo, hi) = self.day_range_c(self.day_index(t_s));
        let phase = 2.0 * PI * (Self::hour(t_s) - self.warmest_hour) / 24.0;
        (lo + hi) / 2.0 + (hi - lo) / 2.0 * phase.cos()
    }

    fn rain_index(&self, t_s: u64) -> Option<usize> {
        let i = self.rain.partition_point(|&(a, _)| a <= t_s);
        i.checked_sub(1)
    }

    pub fn raining(&self, t_s: u64) -> bool {
        self.rain_index(t_s).is_some_and(|i| t_s < self.rain[i].1)
    }

    /// Start of the next rain strictly after `t_s`.
    pub fn next_rain_start(&self, t_s: u64) -> Option<u64> {
        let i = self.rain.partition_point(|&(a, _)| a <= t_s);
        self.rain.get(i).map(|r| r.0)
    }

    fn rain_humidity(elapsed_s: u64) -> f64 {
        let e = elapsed_s as f64 / HOUR_S as f64;
        RAIN_FLOOR_RH + (100.0 - RAIN_FLOOR_RH) * (e / RAIN_RAMP_H).min(1.0)
    }

    fn dry_humidity(&self, t_s: u64) -> f64 {
        let phase = 2.0 * PI * (Self::hour(t_s) - self.warmest_hour) / 24.0;
        56.0 - 16.0 * phase.cos()
    }

    /// Noise-free relative humidity: ramps up from 80 %RH while it rains and
    /// decays back to the dry cycle afterwards.
    pub fn humidity_rh(&self, t_s: u64) -> f64 {
        let dry = self.dry_humidity(t_s);
        match self.rain_index(t_s) {
            Some(i) if t_s < self.rain[i].1 => Self::rain_humidity(t_s - self.rain[i].0),
            Some(i) => {
                let (a, b) = self.rain[i];
                let peak = Self::rain_humidity(b - a);
                let since = (t_s - b) as f64;
                dry + (peak - dry).max(0.0) * (-since / DRYING_TAU_S).exp()
            }
            None => dry,
        }
    }

    /// Fraction of the peak solar heating reaching an exposed casing.
    pub fn sun_gain(&self, t_s: u64) -> f64 {
        if !self.is_clear_day(self.day_index(t_s)) {
            return 0.0;
        }
        let h = Self::hour(t_s);
        if !(7.0..19.0).contains(&h) {
            return 0.0;
        }
        (PI * (h - 7.0) / 12.0).sin()
    }

    pub fn sun_offset_c(&self) -> f64 {
        self.sun_offset_c
    }

    /// Hourly reference station series over the whole run, both ends included.
    pub fn reference_series(&self) -> ReferenceSeries {
        let samples = (0..=self.span_s / HOUR_S)
            .map(|k| {
                let t = k * HOUR_S;
                ReferenceSample {
                    time: self.epoch + Duration::seconds(t as i64),
                    temperature_c: self.reference_temperature_c(t),
                    raining: self.raining(t),
                }
            })
            .collect();
        ReferenceSeries::new(samples).expect("hourly samples are ordered")
    }
}


fn bump(h: f64, centre: f64, width: f64) -> f64 {
    let z = (h - centre) / width;
    (-0.5 * z * z).exp()
}

/// Expected arrivals per chair and hour at hour-of-day `h`, before rain and
/// cold are applied.
pub fn arrival_rate_per_h(v: &VisitorModel, weekday: Weekday, h: f64) -> f64 {
    let base = if (7.0..22.0).contains(&h) { v.daytime_intensity } else { v.night_intensity };
    let mut rate = base + v.evening_intensity * bump(h, 19.0, 1.2);
    if matches!(weekday, Weekday::Sat | Weekday::Sun) {
        rate += v.weekend_intensity * bump(h, 15.0, 2.5);
    } else {
        rate += v.weekday_lunch_intensity * bump(h, 12.4, 0.5);
    }
    rate
}

/// One person on the chair, `[start_s, end_s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Episode {
    pub start_s: u64,
    pub end_s: u64,
    /// Mean accelerometer displacement from the empty-chair baseline.
    pub deviation_g: [f64; 3],
}

fn deviation_vector(rng: &mut ChaCha8Rng) -> [f64; 3] {
    let magnitude = rng.gen_range(0.08..0.30);
    loop {
        let v: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.2 {
            return [magnitude * v[0] / n, magnitude * v[1] / n, magnitude * v[2] / n];
        }
    }
}

/// Sitting episodes of one chair from a minute-stepped Poisson process.
///
/// While it rains both the arrival rate and the stay length are scaled by the
/// aversion factor, and anyone seated when rain starts leaves. Nobody sits on
/// days colder than the cutoff.
pub fn visitor_episodes(weather: &Weather, v: &VisitorModel, span_s: u64, rng: &mut ChaCha8Rng) -> Vec<Episode> {
    let mut out = Vec::new();
    let mut free_from = 0u64;
    let mut t = 0u64;
    while t < span_s {
        let minute = t;
        t += 60;
        if minute < free_from {
            continue;
        }
        let day = weather.day_index(minute);
        if weather.day_mean_c(day) < v.cold_cutoff_c {
            continue;
        }
        let raining = weather.raining(minute);
        let mut rate = arrival_rate_per_h(v, weather.weekday(minute), Weather::hour(minute));
        if raining {
            rate *= v.rain_aversion;
        }
        let p = 1.0 - (-rate / 60.0).exp();
        if rng.gen::<f64>() >= p {
            continue;
        }
        let start = minute + rng.gen_range(0..60);
        let u: f64 = rng.gen();
        let mut stay_s = (-v.mean_stay_min * (1.0 - u).ln()).clamp(1.0, v.max_stay_min) * 60.0;
        let mut end;
        if weather.raining(start) {
            stay_s = (stay_s * v.rain_aversion).max(60.0);
            end = start + stay_s as u64;
        } else {
            end = start + stay_s as u64;
            if let Some(r) = weather.next_rain_start(start) {
                end = end.min(r);
            }
        }
        let midnight = (start / DAY_S + 1) * DAY_S;
        if end > midnight && weather.day_mean_c(day + 1) < v.cold_cutoff_c {
            end = midnight;
        }
        end = end.min(span_s);
        let deviation_g = deviation_vector(rng);
        if end > start {
            out.push(Episode {
                start_s: start,
                end_s: end,
                deviation_g,
            });
        }
        free_from = end + 60 + rng.gen_range(0..120);
    }
    out
}

/// Fills one second of accelerometer samples around the resting baseline.
pub fn accel_samples(key: u64, t_s: u64, deviation_g: Option<[f64; 3]>, out: &mut [[f64; 3]]) {
    const SCALE: f64 = 1.0 / (1u64 << 20) as f64;
    let (d, amp) = match deviation_g {
        Some(d) => (d, 0.05),
        None => ([0.0; 3], 0.02),
    };
    for (i, s) in out.iter_mut().enumerate() {
        let h = mix64(key ^ (t_s << 6 | i as u64));
        let n = |shift: u32| ((h >> shift) & 0x1f_ffff) as f64 * SCALE - 1.0;
        *s = [d[0] + amp * n(0), d[1] + amp * n(21), 1.0 + d[2] + amp * n(42)];
    }
}

/// Sensor view of one chair.
#[derive(Debug, Clone)]
pub struct NodeTrace {
    pub node: ScenarioNode,
    weather: Arc<Weather>,
    key: u64,
    placement: GeoPosition,
    episodes: Vec<Episode>,
    occupied: Vec<u64>,
    noise_offset_db: f64,
}

impl NodeTrace {
    pub fn dev_eui(&self) -> DevEui {
        self.node.dev_eui
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    pub fn weather(&self) -> &Weather {
        &self.weather
    }

    pub fn occupied(&self, t_s: u64) -> bool {
        let w = (t_s / 64) as usize;
        self.occupied.get(w).is_some_and(|bits| bits >> (t_s % 64) & 1 == 1)
    }

    fn episode_at(&self, t_s: u64) -> Option<&Episode> {
        let i = self.episodes.partition_point(|e| e.start_s <= t_s);
        self.episodes[..i].last().filter(|e| t_s < e.end_s)
    }

    fn hashed(&self, stream: u64, t_s: u64) -> f64 {
        signed_unit(mix64(self.key ^ stream.rotate_left(40) ^ t_s))
    }
}

impl EnvTrace for NodeTrace {
    fn temperature_c(&self, t_s: u64) -> f64 {
        let mut t = self.weather.reference_temperature_c(t_s);
        if self.node.sun_exposed {
            t += self.weather.sun_offset_c * self.weather.sun_gain(t_s);
        }
        t + 0.3 * self.hashed(1, t_s)
    }

    fn humidity_rh(&self, t_s: u64) -> f64 {
        let h = self.weather.humidity_rh(t_s) + self.hashed(2, t_s);
        if self.weather.raining(t_s) {
            h.clamp(RAIN_FLOOR_RH, 100.0)
        } else {
            h.clamp(0.0, 100.0)
        }
    }

    fn noise_db(&self, t_s: u64) -> f64 {
        let h = Weather::hour(t_s);
        let mut db = 42.0 + 16.0 * (0.5 - 0.5 * (2.0 * PI * (h - 2.0) / 24.0).cos());
        if self.weather.raining(t_s) {
            db += 5.0;
        }
        if self.occupied(t_s) {
            db += 4.0;
        }
        (db + self.noise_offset_db + 3.0 * self.hashed(3, t_s)).clamp(0.0, 140.0)
    }

    fn accel_second(&self, t_s: u64, out: &mut [[f64; 3]]) {
        let dev = if self.occupied(t_s) {
            self.episode_at(t_s).map(|e| e.deviation_g)
        } else {
            None
        };
        accel_samples(self.key, t_s, dev, out);
    }

    fn gnss_fix_delay_s(&self, t_s: u64) -> u32 {
        let h = hash3(self.key, STREAM_RADIO, t_s);
        if unit(h) < 0.04 {
            301 + (h >> 40) as u32 % 300
        } else {
            let u = unit(mix64(h));
            10 + (170.0 * u * u) as u32
        }
    }

    fn gnss_position(&self, t_s: u64) -> GeoPosition {
        let h = hash3(self.key, STREAM_RADIO ^ 1, t_s);
        let jitter = |x: u64| (signed_unit(x) * 60.0).round() as i32;
        GeoPosition::new(
            self.placement.latitude_e7 + jitter(h),
            self.placement.longitude_e7 + jitter(mix64(h)),
            15 + (h % 120) as u16,
            0,
        )
    }
}

/// Everything a multi-node run needs.
#[derive(Debug, Clone)]
pub struct World {
    pub weather: Arc<Weather>,
    pub nodes: Vec<NodeTrace>,
    pub reference: ReferenceSeries,
    pub channel: ChannelModel,
}

pub fn build_world(s: &Scenario) -> Result<World, ScenarioError> {
    s.validate()?;
    let weather = Arc::new(Weather::from_scenario(s));
    let span_s = s.duration_s();
    let nodes = s
        .nodes
        .iter()
        .map(|n| {
            let eui = n.dev_eui.as_u64();
            let mut rng = ChaCha8Rng::seed_from_u64(hash3(s.seed, STREAM_VISITORS, eui));
            let episodes = visitor_episodes(&weather, s.visitors_for(&n.square), span_s, &mut rng);
            let mut occupied = vec![0u64; span_s.div_ceil(64) as usize];
            for e in &episodes {
                for t in e.start_s..e.end_s {
                    occupied[(t / 64) as usize] |= 1 << (t % 64);
                }
            }
            let key = hash3(s.seed, STREAM_NODE, eui);
            NodeTrace {
                node: n.clone(),
                weather: Arc::clone(&weather),
                key,
                placement: n.placement(),
                episodes,
                occupied,
                noise_offset_db: 2.0 * signed_unit(hash3(key, 4, 0)),
            }
        })
        .collect();
    let mut channel = ChannelModel::new(s.channel.loss_probability, hash3(s.seed, STREAM_CHANNEL, 0))
        .map_err(|e| ScenarioError {
            path: "channel.loss_probability".into(),
            line: None,
            column: None,
            message: e.to_string(),
        })?;
    for n in &s.nodes {
        if let Some(day) = n.dropout_day {
            let at = s.epoch_utc + Duration::seconds((day * DAY_S as f64).round() as i64);
            channel = channel.with_dropout(n.dev_eui, at);
        }
    }
    Ok(World {
        reference: weather.reference_series(),
        weather,
        nodes,
        channel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node::{run_node, NodeConfig};
    use crate::model::NodeIdentity;

    fn small() -> Scenario {
        let mut s = Scenario::field_trial();
        s.duration_days = 14;
        s.nodes.retain(|n| n.dropout_day.map_or(true, |d| d <= 14.0));
        for n in &mut s.nodes {
            n.dropout_day = None;
        }
        s.weather.rain_events.retain(|r| r.day < 14);
        s.weather.day_overrides.clear();
        s
    }

    #[test]
    fn reference_temperatures_in_band() {
        let s = Scenario::field_trial();
        let w = build_world(&s).unwrap();
        let cold: Vec<u32> = s.weather.day_overrides.iter().map(|d| d.day).collect();
        for r in w.reference.samples() {
            let day = ((r.time - s.epoch_utc).num_seconds() / 86_400) as u32;
            if !cold.contains(&day) {
                assert!((15.0..=30.0).contains(&r.temperature_c), "{r:?}");
            }
        }
    }

    #[test]
    fn daily_means_match_sample_means() {
        let s = Scenario::field_trial();
        let w = build_world(&s).unwrap();
        let means = w.reference.daily_mean_temperature();
        for (d, m) in means.iter().take(s.duration_days as usize) {
            let day = (*d - s.epoch_utc.date_naive()).num_days() as usize;
            assert!((w.weather.day_mean_c(day) - m).abs() < 1e-9);
        }
    }

    #[test]
    fn sun_node_exceeds_forty_at_clear_noon() {
        let mut s = small();
        s.weather.temp_max_c = 29.5;
        s.weather.day_to_day_c = 0.0;
        s.weather.warmest_hour = 13.0;
        s.weather.sun_offset_c = 12.0;
        let w = build_world(&s).unwrap();
        let day = (0..14).find(|&d| w.weather.is_clear_day(d)).unwrap() as u64;
        let t = day * DAY_S + 13 * HOUR_S;
        let sun = w.nodes.iter().find(|n| n.node.sun_exposed).unwrap();
        let shade = w.nodes.iter().find(|n| !n.node.sun_exposed).unwrap();
        let r = w.weather.reference_temperature_c(t);
        assert!((r - 29.5).abs() < 1e-9);
        assert!(sun.temperature_c(t) >= r + 12.0 - 0.3);
        assert!(sun.temperature_c(t) > 40.0);
        assert!((shade.temperature_c(t) - r).abs() <= 0.3);
    }

    #[test]
    fn humidity_bounds() {
        let s = Scenario::field_trial();
        let w = build_world(&s).unwrap();
        let n = &w.nodes[0];
        for t in (0..s.duration_s()).step_by(300) {
            let h = n.humidity_rh(t);
            assert!((0.0..=100.0).contains(&h));
            if w.weather.raining(t) {
                assert!((80.0..=100.0).contains(&h), "t={t} h={h}");
            } else if w.weather.humidity_rh(t) < 75.0 {
                assert!(h < 80.0);
            }
        }
    }

    #[test]
    fn deterministic_traces() {
        let a = build_world(&small()).unwrap();
        let b = build_world(&small()).unwrap();
        for (x, y) in a.nodes.iter().zip(&b.nodes) {
            assert_eq!(x.episodes, y.episodes);
            let mut bx = vec![[0.0; 3]; 26];
            let mut by = vec![[0.0; 3]; 26];
            for t in (0..1_000_000).step_by(977) {
                x.accel_second(t, &mut bx);
                y.accel_second(t, &mut by);
                assert_eq!(bx, by);
                assert_eq!(x.temperature_c(t), y.temperature_c(t));
                assert_eq!(x.noise_db(t), y.noise_db(t));
            }
        }
        assert_eq!(a.reference, b.reference);
    }

    #[test]
    fn no_visitors_on_cold_days() {
        let s = Scenario::field_trial();
        let w = build_world(&s).unwrap();
        for d in &s.weather.day_overrides {
            let (a, b) = (d.day as u64 * DAY_S, (d.day as u64 + 1) * DAY_S);
            for n in &w.nodes {
                assert!(n.episodes.iter().all(|e| e.end_s <= a || e.start_s >= b));
            }
        }
    }

    #[test]
    fn nobody_stays_long_in_rain() {
        let s = Scenario::field_trial();
        let w = build_world(&s).unwrap();
        for n in &w.nodes {
            for e in &n.episodes {
                let wet = (e.start_s..e.end_s).filter(|&t| w.weather.raining(t)).count() as u64;
                assert!(wet <= 6 * 60, "{e:?}");
            }
        }
    }

    #[test]
    fn rain_aversion_scales_occupancy() {
        // same hours of the day, dry versus permanently wet, many seeds
        let mut dry_s = 0u64;
        let mut wet_s = 0u64;
        let v = VisitorModel::default();
        for seed in 0..40u64 {
            let mut s = small();
            s.seed = seed;
            s.duration_days = 7;
            s.weather.rain_events.clear();
            let dry = Weather::from_scenario(&s);
            s.weather.rain_events = (0..7)
                .map(|day| super::super::RainEvent {
                    day,
                    start_hour: 0.0,
                    duration_h: 24.0,
                })
                .collect();
            let wet = Weather::from_scenario(&s);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            dry_s += visitor_episodes(&dry, &v, 7 * DAY_S, &mut rng).iter().map(|e| e.end_s - e.start_s).sum::<u64>();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            wet_s += visitor_episodes(&wet, &v, 7 * DAY_S, &mut rng).iter().map(|e| e.end_s - e.start_s).sum::<u64>();
        }
        assert!(dry_s > 0);
        assert!((wet_s as f64) <= v.rain_aversion * dry_s as f64, "wet {wet_s} dry {dry_s}");
    }

    #[test]
    fn detector_tracks_world_occupancy() {
        let s = small();
        let w = build_world(&s).unwrap();
        let trace = &w.nodes[0];
        let cfg = NodeConfig::new(
            NodeIdentity {
                dev_eui: trace.dev_eui(),
                label: trace.node.label.clone(),
            },
            s.epoch_utc,
        );
        let run = run_node(&cfg, trace, 2 * DAY_S, 1).unwrap();
        let reported: u64 = run
            .envelopes
            .iter()
            .map(|e| e.decode().unwrap().sitting_min.iter().map(|&m| m as u64).sum::<u64>())
            .sum();
        let truth = (0..2 * DAY_S).filter(|&t| trace.occupied(t)).count() as u64;
        let truth_min = truth as f64 / 60.0;
        assert!(truth_min > 60.0);
        assert!((reported as f64 - truth_min).abs() <= 0.05 * truth_min + 12.0, "{reported} vs {truth_min}");
    }
}
