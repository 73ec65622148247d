//! Sitting detection on the chair accelerometer.
//!
//! Once per second the detector averages that second's samples and measures
//! how far the mean gravity vector has moved from the empty-chair baseline.
//! A two-threshold hysteresis with debounce turns the deviation into an
//! IDLE/OCCUPIED state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DetectorError {
    #[error("no accelerometer samples for this second")]
    Sample,
    #[error("enter threshold must exceed exit threshold")]
    Hysteresis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeatState {
    Idle,
    Occupied,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub baseline_g: [f64; 3],
    pub enter_threshold_g: f64,
    pub exit_threshold_g: f64,
    pub enter_debounce_s: u32,
    pub exit_debounce_s: u32,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            baseline_g: [0.0, 0.0, 1.0],
            enter_threshold_g: 0.05,
            exit_threshold_g: 0.03,
            enter_debounce_s: 3,
            exit_debounce_s: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyDetector {
    pub config: DetectorConfig,
    pub state: SeatState,
    pub occupied_s_this_interval: u32,
    // consecutive seconds on the far side of the active threshold
    run_s: u32,
}

impl OccupancyDetector {
    pub fn new(config: DetectorConfig) -> Result<Self, DetectorError> {
        if !(config.enter_threshold_g > config.exit_threshold_g) {
            return Err(DetectorError::Hysteresis);
        }
        Ok(Self {
            config,
            state: SeatState::Idle,
            occupied_s_this_interval: 0,
            run_s: 0,
        })
    }

    /// Re-centres the baseline on the mean of an empty-chair recording.
    pub fn calibrate(&mut self, samples: &[[f64; 3]]) -> Result<(), DetectorError> {
        self.config.baseline_g = mean(samples)?;
        Ok(())
    }

    /// Magnitude of the mean sample's distance from the baseline.
    pub fn deviation_g(&self, samples: &[[f64; 3]]) -> Result<f64, DetectorError> {
        let m = mean(samples)?;
        let b = self.config.baseline_g;
        let d = [m[0] - b[0], m[1] - b[1], m[2] - b[2]];
        Ok((d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt())
    }

    /// Consumes one second of samples; returns whether the second counts as
    /// occupied (the state after this second's update).
    pub fn step(&mut self, second_of_samples: &[[f64; 3]]) -> Result<bool, DetectorError> {
        let dev = self.deviation_g(second_of_samples)?;
        Ok(self.step_deviation(dev))
    }

    pub fn step_deviation(&mut self, dev: f64) -> bool {
        let c = &self.config;
        match self.state {
            SeatState::Idle => {
                if dev >= c.enter_threshold_g {
                    self.run_s += 1;
                    if self.run_s >= c.enter_debounce_s {
                        self.state = SeatState::Occupied;
                        self.run_s = 0;
                    }
                } else {
                    self.run_s = 0;
                }
            }
            SeatState::Occupied => {
                if dev < c.exit_threshold_g {
                    self.run_s += 1;
                    if self.run_s >= c.exit_debounce_s {
                        self.state = SeatState::Idle;
                        self.run_s = 0;
                    }
                } else {
                    self.run_s = 0;
                }
            }
        }
        let occupied = self.state == SeatState::Occupied;
        if occupied {
            self.occupied_s_this_interval += 1;
        }
        occupied
    }

    pub fn take_interval(&mut self) -> u32 {
        std::mem::take(&mut self.occupied_s_this_interval)
    }
}

fn mean(samples: &[[f64; 3]]) -> Result<[f64; 3], DetectorError> {
    if samples.is_empty() {
        return Err(DetectorError::Sample);
    }
    let mut acc = [0.0; 3];
    for s in samples {
        acc[0] += s[0];
        acc[1] += s[1];
        acc[2] += s[2];
    }
    let n = samples.len() as f64;
    Ok([acc[0] / n, acc[1] / n, acc[2] / n])
}
