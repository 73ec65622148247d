//! Duty-cycle energy accounting and battery lifetime.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnergyError {
    #[error("daily energy must be positive, got {0} mWh")]
    Domain(f64),
    #[error("trace entry {index} has negative duration {duration_s} s")]
    Trace { index: usize, duration_s: f64 },
    #[error("invalid power profile: {0}")]
    Profile(&'static str),
    #[error("usable battery energy must be positive, got {0} mWh")]
    Battery(f64),
}

/// Per-task power draw of the node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerProfile {
    /// Continuous draw of the sitting and noise tasks, mW.
    pub p_background_mw: f64,
    /// Draw while the GNSS receiver is searching, mW.
    pub p_gnss_mw: f64,
    /// Energy of one complete uplink event, mWh.
    pub e_uplink_mwh: f64,
    pub gnss_active_s_per_call: f64,
    pub gnss_calls_per_day: u32,
    pub uplinks_per_day: u32,
}

impl Default for PowerProfile {
    fn default() -> Self {
        Self {
            p_background_mw: 0.39,
            p_gnss_mw: 22.9,
            e_uplink_mwh: 1.91 / 12.0,
            gnss_active_s_per_call: 300.0,
            gnss_calls_per_day: 12,
            uplinks_per_day: 12,
        }
    }
}

impl PowerProfile {
    pub fn validate(&self) -> Result<(), EnergyError> {
        let non_negative = [
            self.p_background_mw,
            self.p_gnss_mw,
            self.e_uplink_mwh,
            self.gnss_active_s_per_call,
        ];
        if non_negative.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(EnergyError::Profile("power and energy values must be finite and non-negative"));
        }
        // one GNSS session and one uplink per 2-hour cycle at most
        if self.gnss_calls_per_day > 12 || self.uplinks_per_day > 12 {
            return Err(EnergyError::Profile("at most 12 GNSS calls and uplinks per day"));
        }
        if self.gnss_active_s_per_call > 7200.0 {
            return Err(EnergyError::Profile("GNSS session longer than a cycle"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryModel {
    /// Usable energy after derating, mWh.
    pub usable_energy_mwh: f64,
    pub nominal_capacity_mah: f64,
    pub nominal_voltage_v: f64,
}

impl Default for BatteryModel {
    fn default() -> Self {
        Self {
            usable_energy_mwh: 2053.0,
            nominal_capacity_mah: 2000.0,
            nominal_voltage_v: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyEnergy {
    pub background: f64,
    pub gnss: f64,
    pub lora: f64,
    pub total: f64,
}

pub fn daily_energy_mwh(p: &PowerProfile, gnss_enabled: bool) -> DailyEnergy {
    let background = p.p_background_mw * 24.0;
    let gnss = if gnss_enabled {
        p.p_gnss_mw * (p.gnss_active_s_per_call * p.gnss_calls_per_day as f64 / 3600.0)
    } else {
        0.0
    };
    let lora = p.e_uplink_mwh * p.uplinks_per_day as f64;
    DailyEnergy {
        background,
        gnss,
        lora,
        total: background + gnss + lora,
    }
}

pub fn lifetime_days(b: &BatteryModel, daily_total_mwh: f64) -> Result<f64, EnergyError> {
    if !(b.usable_energy_mwh > 0.0 && b.usable_energy_mwh.is_finite()) {
        return Err(EnergyError::Battery(b.usable_energy_mwh));
    }
    if !(daily_total_mwh > 0.0) {
        return Err(EnergyError::Domain(daily_total_mwh));
    }
    Ok(b.usable_energy_mwh / daily_total_mwh)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Gnss,
    LoraTx,
}

/// One duty-cycled activity in a node's energy trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskActivity {
    pub task: Task,
    pub start_s: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerPoint {
    pub t_s: f64,
    pub cumulative_mwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub span_s: f64,
    pub background_mwh: f64,
    pub gnss_mwh: f64,
    pub lora_mwh: f64,
    /// Cumulative energy at the end of each activity and at the end of the span.
    pub timeline: Vec<LedgerPoint>,
}

impl EnergyLedger {
    pub fn total_mwh(&self) -> f64 {
        self.background_mwh + self.gnss_mwh + self.lora_mwh
    }

    pub fn mean_daily_mwh(&self) -> f64 {
        self.total_mwh() / (self.span_s / 86_400.0)
    }
}

/// Integrates a trace over `[0, span_s]` with background power throughout.
///
/// GNSS sessions draw `p_gnss_mw` for their duration; each uplink costs a
/// fixed `e_uplink_mwh` regardless of its recorded duration.
pub fn energy_ledger(trace: &[TaskActivity], span_s: f64, p: &PowerProfile) -> Result<EnergyLedger, EnergyError> {
    if let Some((index, a)) = trace
        .iter()
        .enumerate()
        .find(|(_, a)| !(a.duration_s >= 0.0))
    {
        return Err(EnergyError::Trace {
            index,
            duration_s: a.duration_s,
        });
    }
    let mut order: Vec<&TaskActivity> = trace.iter().collect();
    order.sort_by(|a, b| (a.start_s + a.duration_s).total_cmp(&(b.start_s + b.duration_s)));

    let bg_at = |t: f64| p.p_background_mw * t / 3600.0;
    let mut gnss_mwh = 0.0;
    let mut lora_mwh = 0.0;
    let mut timeline = Vec::with_capacity(order.len() + 1);
    for a in order {
        match a.task {
            Task::Gnss => gnss_mwh += p.p_gnss_mw * a.duration_s / 3600.0,
            Task::LoraTx => lora_mwh += p.e_uplink_mwh,
        }
        let end = a.start_s + a.duration_s;
        timeline.push(LedgerPoint {
            t_s: end,
            cumulative_mwh: bg_at(end) + gnss_mwh + lora_mwh,
        });
    }
    let background_mwh = bg_at(span_s);
    timeline.push(LedgerPoint {
        t_s: span_s,
        cumulative_mwh: background_mwh + gnss_mwh + lora_mwh,
    });
    Ok(EnergyLedger {
        span_s,
        background_mwh,
        gnss_mwh,
        lora_mwh,
        timeline,
    })
}

/// Table-style breakdown rows: (task, mWh/day).
pub fn breakdown_rows(d: &DailyEnergy) -> [(&'static str, f64); 4] {
    [
        ("Noise and Sitting", d.background),
        ("GNSS", d.gnss),
        ("LoRaWAN", d.lora),
        ("Total", d.total),
    ]
}

/// Daily breakdown plus projected lifetime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub gnss_enabled: bool,
    pub daily: DailyEnergy,
    pub lifetime_days: f64,
}

pub fn energy_report(p: &PowerProfile, b: &BatteryModel, gnss_enabled: bool) -> Result<EnergyReport, EnergyError> {
    p.validate()?;
    let daily = daily_energy_mwh(p, gnss_enabled);
    Ok(EnergyReport {
        gnss_enabled,
        daily,
        lifetime_days: lifetime_days(b, daily.total)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_battery_rejected() {
        let b = BatteryModel {
            usable_energy_mwh: 0.0,
            ..BatteryModel::default()
        };
        assert!(matches!(lifetime_days(&b, 34.0), Err(EnergyError::Battery(_))));
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn default_breakdown() {
        let d = daily_energy_mwh(&PowerProfile::default(), true);
        assert!(close(d.background, 9.36, 1e-9));
        assert!(close(d.gnss, 22.9, 1e-9));
        assert!(close(d.lora, 1.91, 1e-9));
        assert!(close(d.total, 34.17, 1e-9));
        assert!((d.total - 33.65).abs() / 33.65 < 0.02);
    }

    #[test]
    fn gnss_off_drops_only_gnss_term() {
        let p = PowerProfile::default();
        let on = daily_energy_mwh(&p, true);
        let off = daily_energy_mwh(&p, false);
        assert_eq!(off.gnss, 0.0);
        assert_eq!(off.background, on.background);
        assert_eq!(off.lora, on.lora);
        assert!(close(off.total, on.total - on.gnss, 1e-12));
    }

    #[test]
    fn lifetimes() {
        let b = BatteryModel::default();
        assert!(close(lifetime_days(&b, 33.65).unwrap(), 61.01, 0.01));
        assert!(close(lifetime_days(&b, 11.15).unwrap(), 184.13, 0.01));
        for x in [0.5, 3.0, 1e4] {
            let b = BatteryModel {
                usable_energy_mwh: x,
                ..Default::default()
            };
            assert_eq!(lifetime_days(&b, x).unwrap(), 1.0);
        }
        assert_eq!(lifetime_days(&b, 0.0), Err(EnergyError::Domain(0.0)));
        assert!(lifetime_days(&b, -1.0).is_err());
    }

    #[test]
    fn lifetime_homogeneous() {
        for k in [0.25, 2.0, 7.5] {
            let b = BatteryModel::default();
            let scaled = BatteryModel {
                usable_energy_mwh: b.usable_energy_mwh * k,
                ..b.clone()
            };
            let a = lifetime_days(&b, 34.17).unwrap();
            let s = lifetime_days(&scaled, 34.17 * k).unwrap();
            assert!(close(a, s, 1e-9 * a));
        }
    }

    #[test]
    fn ledger_background_only() {
        let l = energy_ledger(&[], 86_400.0, &PowerProfile::default()).unwrap();
        assert!(close(l.total_mwh(), 9.36, 1e-9));
        assert_eq!(l.timeline.len(), 1);
    }

    #[test]
    fn ledger_single_gnss_session() {
        let trace = [TaskActivity {
            task: Task::Gnss,
            start_s: 100.0,
            duration_s: 300.0,
        }];
        let p = PowerProfile::default();
        let l = energy_ledger(&trace, 86_400.0, &p).unwrap();
        assert!(close(l.gnss_mwh, 22.9 * 300.0 / 3600.0, 1e-12));
        assert!(close(l.gnss_mwh, 1.908, 1e-3));
        assert!(close(l.timeline[0].cumulative_mwh, 0.39 * 400.0 / 3600.0 + l.gnss_mwh, 1e-12));
    }

    #[test]
    fn ledger_rejects_negative_duration() {
        let trace = [
            TaskActivity {
                task: Task::LoraTx,
                start_s: 0.0,
                duration_s: 10.2,
            },
            TaskActivity {
                task: Task::Gnss,
                start_s: 5.0,
                duration_s: -1.0,
            },
        ];
        assert_eq!(
            energy_ledger(&trace, 100.0, &PowerProfile::default()),
            Err(EnergyError::Trace {
                index: 1,
                duration_s: -1.0
            })
        );
    }

    #[test]
    fn ledger_of_closed_form_day_matches() {
        let p = PowerProfile::default();
        let mut trace = Vec::new();
        for c in 0..12 {
            let start = c as f64 * 7200.0;
            trace.push(TaskActivity {
                task: Task::Gnss,
                start_s: start + 3600.0,
                duration_s: 300.0,
            });
            trace.push(TaskActivity {
                task: Task::LoraTx,
                start_s: start + 7200.0 - 10.2,
                duration_s: 10.2,
            });
        }
        let l = energy_ledger(&trace, 86_400.0, &p).unwrap();
        let d = daily_energy_mwh(&p, true);
        assert!((l.total_mwh() - d.total).abs() / d.total < 1e-3);
        let cum: Vec<f64> = l.timeline.iter().map(|pt| pt.cumulative_mwh).collect();
        assert!(cum.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn profile_validation() {
        assert!(PowerProfile::default().validate().is_ok());
        let p = PowerProfile {
            gnss_calls_per_day: 13,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = PowerProfile {
            p_gnss_mw: -1.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}
