//! Deterministic simulation of one chair node.
//!
//! The node repeats a cycle of four 30-minute sampling intervals. Sitting
//! detection and noise averaging run for every second of every interval, the
//! GNSS receiver is powered at the start of the second-last interval, and
//! the uplink goes out at the end of the fourth, right after temperature and
//! humidity are read.

pub mod detector;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{
    encode_frame_hex, CodecError, SensorFrame, DEBUG_BATTERY_LOW, DEBUG_GNSS_FIX, DEBUG_GNSS_TIMEOUT, LAYOUT_V1,
    MAX_HUMIDITY_CRH, MAX_NOISE_DB,
};
use crate::energy::{energy_ledger, BatteryModel, EnergyError, EnergyLedger, PowerProfile, Task, TaskActivity};
use crate::envelope::UplinkEnvelope;
use crate::model::{rfc3339, DevEui, GeoPosition, NodeIdentity, SimTime};
use crate::rng::{hash3, unit};

pub use detector::{DetectorConfig, DetectorError, OccupancyDetector, SeatState};

/// Seconds the radio is busy per uplink event.
pub const LORA_TX_S: f64 = 10.2;

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("invalid schedule: {0}")]
    Schedule(&'static str),
    #[error("interval index {0} outside 1..=4")]
    Interval(u32),
    #[error("duration {0} s is not a whole number of intervals")]
    Duration(u64),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub interval_s: u32,
    pub intervals_per_cycle: u32,
    /// 1-based interval in which the GNSS session runs.
    pub gnss_interval_index: u32,
    pub gnss_max_s: u32,
    pub accel_rate_hz: u32,
    pub noise_rate_hz: u32,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            interval_s: 1800,
            intervals_per_cycle: 4,
            gnss_interval_index: 3,
            gnss_max_s: 300,
            accel_rate_hz: 26,
            noise_rate_hz: 1,
        }
    }
}

impl ScheduleConfig {
    pub fn cycle_s(&self) -> u64 {
        self.interval_s as u64 * self.intervals_per_cycle as u64
    }

    pub fn validate(&self) -> Result<(), NodeError> {
        if self.intervals_per_cycle != 4 {
            return Err(NodeError::Schedule("the frame carries exactly 4 intervals"));
        }
        if self.gnss_interval_index != self.intervals_per_cycle - 1 {
            return Err(NodeError::Schedule("GNSS must run in the second-last interval"));
        }
        if self.interval_s == 0 || self.interval_s > 30 * 60 {
            return Err(NodeError::Schedule("interval must be 1..=1800 s to fit sitting minutes"));
        }
        if self.gnss_max_s > self.interval_s {
            return Err(NodeError::Schedule("GNSS cap longer than its interval"));
        }
        if self.accel_rate_hz == 0 {
            return Err(NodeError::Schedule("accelerometer rate must be positive"));
        }
        if self.noise_rate_hz != 1 {
            return Err(NodeError::Schedule("the microphone is read once per second"));
        }
        Ok(())
    }
}

/// Everything fixed about a node for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub identity: NodeIdentity,
    pub epoch_utc: DateTime<Utc>,
    pub schedule: ScheduleConfig,
    pub detector: DetectorConfig,
    pub power: PowerProfile,
    pub battery: BatteryModel,
    pub port: u8,
    pub battery_low_pct: u8,
}

impl NodeConfig {
    pub fn new(identity: NodeIdentity, epoch_utc: DateTime<Utc>) -> Self {
        Self {
            identity,
            epoch_utc,
            schedule: ScheduleConfig::default(),
            detector: DetectorConfig::default(),
            power: PowerProfile::default(),
            battery: BatteryModel::default(),
            port: 1,
            battery_low_pct: 10,
        }
    }
}

/// The physical world as seen by one node's sensors.
///
/// Implementations must be pure functions of their construction seed and `t_s`
/// (seconds since the run epoch).
pub trait EnvTrace {
    fn temperature_c(&self, t_s: u64) -> f64;
    fn humidity_rh(&self, t_s: u64) -> f64;
    fn noise_db(&self, t_s: u64) -> f64;
    /// Fills `out` with the accelerometer samples of second `t_s`, in g.
    fn accel_second(&self, t_s: u64, out: &mut [[f64; 3]]);
    /// Time to first fix for a session starting at `t_s`.
    fn gnss_fix_delay_s(&self, t_s: u64) -> u32;
    /// Fix reported by the receiver (accuracy in dm is part of the position).
    fn gnss_position(&self, t_s: u64) -> GeoPosition;
}

/// Constant environment with optional sitting episodes; the default trace
/// for standalone node runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyTrace {
    pub temperature_c: f64,
    pub humidity_rh: f64,
    pub noise_db: f64,
    pub gnss_fix_delay_s: u32,
    pub position: GeoPosition,
    /// Half-open `[start, end)` seconds during which someone sits.
    pub episodes: Vec<(u64, u64)>,
    pub sitting_deviation_g: f64,
}

impl Default for SteadyTrace {
    fn default() -> Self {
        Self {
            temperature_c: 21.5,
            humidity_rh: 55.0,
            noise_db: 55.0,
            // worst case: the receiver needs the whole cap to fix
            gnss_fix_delay_s: 300,
            position: GeoPosition::new(473_661_230, 85_517_310, 25, 0),
            episodes: Vec::new(),
            sitting_deviation_g: 0.10,
        }
    }
}

impl SteadyTrace {
    fn sitting(&self, t_s: u64) -> bool {
        self.episodes.iter().any(|&(a, b)| (a..b).contains(&t_s))
    }
}

impl EnvTrace for SteadyTrace {
    fn temperature_c(&self, _: u64) -> f64 {
        self.temperature_c
    }

    fn humidity_rh(&self, _: u64) -> f64 {
        self.humidity_rh
    }

    fn noise_db(&self, _: u64) -> f64 {
        self.noise_db
    }

    fn accel_second(&self, t_s: u64, out: &mut [[f64; 3]]) {
        let dev = if self.sitting(t_s) { self.sitting_deviation_g } else { 0.0 };
        out.fill([dev, 0.0, 1.0]);
    }

    fn gnss_fix_delay_s(&self, _: u64) -> u32 {
        self.gnss_fix_delay_s
    }

    fn gnss_position(&self, _: u64) -> GeoPosition {
        self.position
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    GnssFix,
    GnssTimeout,
    Uplink,
    BatteryLow,
}

/// One line of the node event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    #[serde(with = "rfc3339")]
    pub time: DateTime<Utc>,
    pub node: DevEui,
    pub event: EventKind,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnssOutcome {
    NotRun,
    Fix(GeoPosition),
    Timeout,
}

#[derive(Debug, Clone)]
pub struct NodeState {
    pub identity: NodeIdentity,
    pub clock: SimTime,
    pub detector: OccupancyDetector,
    pub noise_sum_db: f64,
    pub noise_reads: u32,
    pub sitting_min: [u8; 4],
    pub noise_db: [u8; 4],
    pub gnss: GnssOutcome,
    pub last_fix: Option<GeoPosition>,
    pub battery_pct: u8,
    pub frame_counter: u32,
    pub activities: Vec<TaskActivity>,
    pub events: Vec<EventRecord>,
    gnss_mwh: f64,
    lora_mwh: f64,
    accel_buf: Vec<[f64; 3]>,
}

impl NodeState {
    pub fn new(cfg: &NodeConfig) -> Result<Self, NodeError> {
        cfg.schedule.validate()?;
        Ok(Self {
            identity: cfg.identity.clone(),
            clock: SimTime::new(cfg.epoch_utc, 0),
            detector: OccupancyDetector::new(cfg.detector.clone())?,
            noise_sum_db: 0.0,
            noise_reads: 0,
            sitting_min: [0; 4],
            noise_db: [0; 4],
            gnss: GnssOutcome::NotRun,
            last_fix: None,
            battery_pct: 100,
            frame_counter: 0,
            activities: Vec::new(),
            events: Vec::new(),
            gnss_mwh: 0.0,
            lora_mwh: 0.0,
            accel_buf: vec![[0.0; 3]; cfg.schedule.accel_rate_hz as usize],
        })
    }

    /// True when no per-cycle measurement is pending.
    pub fn accumulators_clear(&self) -> bool {
        self.noise_sum_db == 0.0
            && self.noise_reads == 0
            && self.detector.occupied_s_this_interval == 0
            && self.sitting_min == [0; 4]
            && self.noise_db == [0; 4]
            && self.gnss == GnssOutcome::NotRun
    }

    fn consumed_mwh(&self, power: &PowerProfile) -> f64 {
        power.p_background_mw * self.clock.t_s as f64 / 3600.0 + self.gnss_mwh + self.lora_mwh
    }

    fn log(&mut self, event: EventKind, detail: String) {
        self.events.push(EventRecord {
            time: self.clock.utc(),
            node: self.identity.dev_eui,
            event,
            detail,
        });
    }
}

/// Arithmetic mean rounded half-up and clamped to the payload's dB range.
pub fn interval_noise_db(sum_db: f64, reads: u32) -> u8 {
    if reads == 0 {
        return 0;
    }
    (sum_db / reads as f64 + 0.5).floor().clamp(0.0, MAX_NOISE_DB as f64) as u8
}

/// Occupied seconds to whole minutes, rounding half-up.
pub fn sitting_minutes(occupied_s: u32) -> u8 {
    ((occupied_s + 30) / 60) as u8
}

fn run_gnss<T: EnvTrace>(state: &mut NodeState, cfg: &NodeConfig, trace: &T) {
    let start = state.clock.t_s;
    let delay = trace.gnss_fix_delay_s(start);
    let cap = cfg.schedule.gnss_max_s;
    let active = delay.min(cap);
    state.activities.push(TaskActivity {
        task: Task::Gnss,
        start_s: start as f64,
        duration_s: active as f64,
    });
    state.gnss_mwh += cfg.power.p_gnss_mw * active as f64 / 3600.0;
    let end_unix = (state.clock.unix_s() + active as i64).clamp(0, u32::MAX as i64) as u32;
    if delay <= cap {
        let mut fix = trace.gnss_position(start + delay as u64);
        fix.fix_time_s = end_unix;
        state.gnss = GnssOutcome::Fix(fix);
        state.last_fix = Some(fix);
        state.log(
            EventKind::GnssFix,
            format!("delay={delay}s lat={:.7} lon={:.7}", fix.latitude_deg(), fix.longitude_deg()),
        );
    } else {
        state.gnss = GnssOutcome::Timeout;
        state.log(EventKind::GnssTimeout, format!("cap={cap}s"));
    }
}

/// Runs sampling interval `idx` (1-based) and advances the clock by one interval.
pub fn run_interval<T: EnvTrace>(
    state: &mut NodeState,
    cfg: &NodeConfig,
    trace: &T,
    idx: u32,
) -> Result<(), NodeError> {
    let sched = &cfg.schedule;
    if !(1..=sched.intervals_per_cycle).contains(&idx) {
        return Err(NodeError::Interval(idx));
    }
    if idx == sched.gnss_interval_index {
        run_gnss(state, cfg, trace);
    }
    let mut buf = std::mem::take(&mut state.accel_buf);
    for _ in 0..sched.interval_s {
        let t = state.clock.t_s;
        trace.accel_second(t, &mut buf);
        state.detector.step(&buf)?;
        state.noise_sum_db += trace.noise_db(t);
        state.noise_reads += 1;
        state.clock.advance(1);
    }
    state.accel_buf = buf;

    let slot = (idx - 1) as usize;
    state.sitting_min[slot] = sitting_minutes(state.detector.take_interval());
    state.noise_db[slot] = interval_noise_db(state.noise_sum_db, state.noise_reads);
    state.noise_sum_db = 0.0;
    state.noise_reads = 0;
    Ok(())
}

fn link_metrics(seed: u64, eui: DevEui, fcnt: u32) -> (i32, f64) {
    let h = hash3(seed, eui.as_u64(), fcnt as u64);
    let rssi = -125 + (unit(h) * 30.0) as i32;
    let snr = (-15.0 + unit(h.rotate_left(29)) * 20.0) * 4.0;
    (rssi, snr.round() / 4.0)
}

/// Runs one full cycle and returns the resulting uplink.
pub fn run_cycle<T: EnvTrace>(
    state: &mut NodeState,
    cfg: &NodeConfig,
    trace: &T,
    seed: u64,
) -> Result<UplinkEnvelope, NodeError> {
    for idx in 1..=cfg.schedule.intervals_per_cycle {
        run_interval(state, cfg, trace, idx)?;
    }
    let t = state.clock.t_s;
    let temperature_cc = (trace.temperature_c(t) * 100.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
    let humidity_crh = (trace.humidity_rh(t) * 100.0).round().clamp(0.0, MAX_HUMIDITY_CRH as f64) as u16;

    let remaining = 1.0 - state.consumed_mwh(&cfg.power) / cfg.battery.usable_energy_mwh;
    state.battery_pct = (remaining * 100.0).round().clamp(0.0, 100.0) as u8;

    let mut debug = 0;
    let position = match state.gnss {
        GnssOutcome::Fix(p) => {
            debug |= DEBUG_GNSS_FIX;
            p
        }
        GnssOutcome::Timeout => {
            debug |= DEBUG_GNSS_TIMEOUT;
            GeoPosition::no_fix(state.clock.unix_s().clamp(0, u32::MAX as i64) as u32)
        }
        GnssOutcome::NotRun => GeoPosition::no_fix(0),
    };
    if state.battery_pct < cfg.battery_low_pct {
        debug |= DEBUG_BATTERY_LOW;
        state.log(EventKind::BatteryLow, format!("battery={}%", state.battery_pct));
    }
    let frame = SensorFrame {
        header: LAYOUT_V1,
        debug,
        position,
        battery_pct: state.battery_pct,
        temperature_cc,
        humidity_crh,
        sitting_min: state.sitting_min,
        noise_db: state.noise_db,
    };
    let payload_hex = encode_frame_hex(&frame)?;

    state.activities.push(TaskActivity {
        task: Task::LoraTx,
        start_s: t as f64,
        duration_s: LORA_TX_S,
    });
    state.lora_mwh += cfg.power.e_uplink_mwh;

    let fcnt = state.frame_counter;
    let (rssi_dbm, snr_db) = link_metrics(seed, state.identity.dev_eui, fcnt);
    let env = UplinkEnvelope {
        dev_eui: state.identity.dev_eui,
        fcnt,
        port: cfg.port,
        payload_hex,
        rssi_dbm,
        snr_db,
        received_at: state.clock.utc(),
    };
    state.log(EventKind::Uplink, format!("fcnt={fcnt} payload={}", env.payload_hex));
    state.frame_counter += 1;
    state.sitting_min = [0; 4];
    state.noise_db = [0; 4];
    state.gnss = GnssOutcome::NotRun;
    Ok(env)
}

/// Output of a complete node run.
#[derive(Debug, Clone)]
pub struct NodeRun {
    pub envelopes: Vec<UplinkEnvelope>,
    pub activities: Vec<TaskActivity>,
    pub events: Vec<EventRecord>,
    pub span_s: u64,
}

impl NodeRun {
    pub fn ledger(&self, power: &PowerProfile) -> Result<EnergyLedger, EnergyError> {
        energy_ledger(&self.activities, self.span_s as f64, power)
    }
}

/// Simulates `duration_s` seconds; a trailing partial cycle runs its
/// intervals but emits no uplink.
pub fn run_node<T: EnvTrace>(cfg: &NodeConfig, trace: &T, duration_s: u64, seed: u64) -> Result<NodeRun, NodeError> {
    let interval = cfg.schedule.interval_s as u64;
    if duration_s % interval != 0 {
        return Err(NodeError::Duration(duration_s));
    }
    let mut state = NodeState::new(cfg)?;
    let cycle = cfg.schedule.cycle_s();
    let mut envelopes = Vec::with_capacity((duration_s / cycle) as usize);
    for _ in 0..duration_s / cycle {
        envelopes.push(run_cycle(&mut state, cfg, trace, seed)?);
    }
    let tail = (duration_s % cycle) / interval;
    for idx in 1..=tail as u32 {
        run_interval(&mut state, cfg, trace, idx)?;
    }
    Ok(NodeRun {
        envelopes,
        activities: state.activities,
        events: state.events,
        span_s: duration_s,
    })
}

/// Receive time of the uplink with counter `fcnt` for a node started at `epoch`.
pub fn uplink_time(epoch: DateTime<Utc>, schedule: &ScheduleConfig, fcnt: u32) -> DateTime<Utc> {
    epoch + Duration::seconds(((fcnt as u64 + 1) * schedule.cycle_s()) as i64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::decode_frame_hex;
    use crate::energy::daily_energy_mwh;
    use chrono::TimeZone;

    fn cfg() -> NodeConfig {
        NodeConfig::new(
            NodeIdentity {
                dev_eui: DevEui::from_u64(0xa1),
                label: "chair-1".into(),
            },
            Utc.with_ymd_and_hms(2022, 6, 1, 0, 0, 0).unwrap(),
        )
    }

    #[test]
    fn rounding_rules() {
        assert_eq!(sitting_minutes(0), 0);
        assert_eq!(sitting_minutes(29), 0);
        assert_eq!(sitting_minutes(30), 1);
        assert_eq!(sitting_minutes(89), 1);
        assert_eq!(sitting_minutes(90), 2);
        assert_eq!(sitting_minutes(1800), 30);
        assert_eq!(interval_noise_db(55.0 * 1800.0, 1800), 55);
        assert_eq!(interval_noise_db(54.5 * 10.0, 10), 55);
        assert_eq!(interval_noise_db(54.49 * 10.0, 10), 54);
        assert_eq!(interval_noise_db(200.0, 1), 140);
        assert_eq!(interval_noise_db(-3.0, 1), 0);
    }

    #[test]
    fn constant_noise_interval() {
        let c = cfg();
        let mut s = NodeState::new(&c).unwrap();
        run_interval(&mut s, &c, &SteadyTrace::default(), 1).unwrap();
        assert_eq!(s.noise_db[0], 55);
        assert_eq!(s.clock.t_s, 1800);
        assert_eq!(s.sitting_min[0], 0);
        assert!(s.activities.is_empty());
    }

    #[test]
    fn gnss_fix_after_delay() {
        let c = cfg();
        let trace = SteadyTrace {
            gnss_fix_delay_s: 42,
            ..Default::default()
        };
        let mut s = NodeState::new(&c).unwrap();
        run_interval(&mut s, &c, &trace, 3).unwrap();
        assert_eq!(s.activities.len(), 1);
        assert_eq!(s.activities[0].task, Task::Gnss);
        assert_eq!(s.activities[0].duration_s, 42.0);
        assert!(matches!(s.gnss, GnssOutcome::Fix(p) if p.latitude_e7 == 473_661_230));
    }

    #[test]
    fn gnss_timeout_capped() {
        let c = cfg();
        let trace = SteadyTrace {
            gnss_fix_delay_s: 400,
            ..Default::default()
        };
        let mut s = NodeState::new(&c).unwrap();
        let env = run_cycle(&mut s, &c, &trace, 1).unwrap();
        assert_eq!(s.activities[0].duration_s, 300.0);
        let f = decode_frame_hex(&env.payload_hex).unwrap();
        assert_eq!(f.debug & DEBUG_GNSS_TIMEOUT, DEBUG_GNSS_TIMEOUT);
        assert_eq!(f.debug & DEBUG_GNSS_FIX, 0);
        assert!(!f.position.has_fix());
    }

    #[test]
    fn interval_index_checked() {
        let c = cfg();
        let mut s = NodeState::new(&c).unwrap();
        assert!(matches!(
            run_interval(&mut s, &c, &SteadyTrace::default(), 5),
            Err(NodeError::Interval(5))
        ));
        assert!(matches!(
            run_interval(&mut s, &c, &SteadyTrace::default(), 0),
            Err(NodeError::Interval(0))
        ));
    }

    #[test]
    fn cycle_emits_and_resets() {
        let c = cfg();
        let trace = SteadyTrace {
            episodes: vec![(100, 700)],
            ..Default::default()
        };
        let mut s = NodeState::new(&c).unwrap();
        let env = run_cycle(&mut s, &c, &trace, 9).unwrap();
        assert!(s.accumulators_clear());
        assert_eq!(s.frame_counter, 1);
        assert_eq!(env.fcnt, 0);
        assert_eq!(env.received_at, c.epoch_utc + Duration::seconds(7200));
        let f = decode_frame_hex(&env.payload_hex).unwrap();
        // 607 occupied seconds -> 10 minutes
        assert_eq!(f.sitting_min, [10, 0, 0, 0]);
        assert_eq!(f.noise_db, [55; 4]);
        assert_eq!(f.temperature_cc, 2150);
        assert_eq!(f.humidity_crh, 5500);
        assert_eq!(f.debug, DEBUG_GNSS_FIX);
        assert_eq!(f.battery_pct, 100);
    }

    #[test]
    fn one_day_schedule() {
        let c = cfg();
        let run = run_node(&c, &SteadyTrace::default(), 86_400, 3).unwrap();
        assert_eq!(run.envelopes.len(), 12);
        for (i, e) in run.envelopes.iter().enumerate() {
            assert_eq!(e.fcnt, i as u32);
            assert_eq!(e.received_at, uplink_time(c.epoch_utc, &c.schedule, e.fcnt));
        }
        for a in run.activities.iter().filter(|a| a.task == Task::Gnss) {
            let offset = a.start_s as u64 % 7200;
            assert!(offset >= 3600 && offset + a.duration_s as u64 <= 5400);
            assert!(a.duration_s <= 300.0);
        }
        let ledger = run.ledger(&c.power).unwrap();
        let closed = daily_energy_mwh(&c.power, true).total;
        assert!((ledger.total_mwh() - closed).abs() / closed < 1e-3);
    }

    #[test]
    fn duration_must_align() {
        assert!(matches!(
            run_node(&cfg(), &SteadyTrace::default(), 1000, 0),
            Err(NodeError::Duration(1000))
        ));
        let run = run_node(&cfg(), &SteadyTrace::default(), 7200 + 1800, 0).unwrap();
        assert_eq!(run.envelopes.len(), 1);
    }

    #[test]
    fn deterministic() {
        let trace = SteadyTrace {
            episodes: vec![(5000, 9000), (20_000, 20_500)],
            ..Default::default()
        };
        let a = run_node(&cfg(), &trace, 86_400, 11).unwrap();
        let b = run_node(&cfg(), &trace, 86_400, 11).unwrap();
        assert_eq!(a.envelopes, b.envelopes);
        assert_eq!(a.events, b.events);
    }

    #[test]
    fn schedule_validation() {
        let bad = ScheduleConfig {
            gnss_interval_index: 2,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = ScheduleConfig {
            intervals_per_cycle: 3,
            gnss_interval_index: 2,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(ScheduleConfig::default().cycle_s(), 7200);
    }
}
