//! Seeded accelerometer recordings with known sitting episodes, for scoring
//! the occupancy detector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::world::accel_samples;
use crate::node::detector::{DetectorConfig, DetectorError, OccupancyDetector};

/// Labelled recording. Episodes last at least 60 s and are separated by at
/// least 30 s of empty chair. Idle gaps may contain knocks of one or two
/// seconds; episodes may contain short fidgets where the load shifts.
#[derive(Debug, Clone)]
pub struct LabeledTrace {
    key: u64,
    truth: Vec<bool>,
    /// Per-second deviation from the baseline, `None` for the resting chair.
    deviation: Vec<Option<[f64; 3]>>,
}

impl LabeledTrace {
    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = rng.gen_range(3_600..7_200);
        let mut truth = Vec::with_capacity(target + 1_000);
        let mut deviation = Vec::with_capacity(target + 1_000);
        while truth.len() < target {
            let gap = rng.gen_range(30..600);
            let start = deviation.len();
            deviation.extend(std::iter::repeat(None).take(gap));
            truth.extend(std::iter::repeat(false).take(gap));
            if gap >= 10 && rng.gen_bool(0.5) {
                let at = start + rng.gen_range(2..gap - 4);
                let len = rng.gen_range(1..=2);
                let d = random_vector(&mut rng, 0.1, 0.3);
                deviation[at..at + len].fill(Some(d));
            }

            let len = rng.gen_range(60..900);
            let start = deviation.len();
            let d = random_vector(&mut rng, 0.08, 0.30);
            deviation.extend(std::iter::repeat(Some(d)).take(len));
            truth.extend(std::iter::repeat(true).take(len));
            for _ in 0..len / 120 {
                let at = start + rng.gen_range(5..len - 10);
                let n = rng.gen_range(1..=5);
                deviation[at..at + n].fill(None);
            }
        }
        Self {
            key: rng.gen(),
            truth,
            deviation,
        }
    }

    pub fn len_s(&self) -> usize {
        self.truth.len()
    }

    pub fn truth(&self) -> &[bool] {
        &self.truth
    }

    pub fn fill_second(&self, t: usize, out: &mut [[f64; 3]]) {
        accel_samples(self.key, t as u64, self.deviation[t], out);
    }
}

fn random_vector(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 3] {
    let m = rng.gen_range(lo..hi);
    loop {
        let v = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let n: f64 = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        if n > 0.2 {
            return [m * v[0] / n, m * v[1] / n, m * v[2] / n];
        }
    }
}

/// Per-second confusion counts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DetectionScore {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl DetectionScore {
    pub fn precision(&self) -> f64 {
        self.true_pos as f64 / (self.true_pos + self.false_pos).max(1) as f64
    }

    pub fn recall(&self) -> f64 {
        self.true_pos as f64 / (self.true_pos + self.false_neg).max(1) as f64
    }

    pub fn merge(&mut self, o: &DetectionScore) {
        self.true_pos += o.true_pos;
        self.false_pos += o.false_pos;
        self.false_neg += o.false_neg;
        self.true_neg += o.true_neg;
    }
}

pub fn score_detector(cfg: &DetectorConfig, trace: &LabeledTrace, rate_hz: usize) -> Result<DetectionScore, DetectorError> {
    let mut det = OccupancyDetector::new(cfg.clone())?;
    let mut buf = vec![[0.0; 3]; rate_hz];
    let mut s = DetectionScore::default();
    for (t, &truth) in trace.truth.iter().enumerate() {
        trace.fill_second(t, &mut buf);
        match (det.step(&buf)?, truth) {
            (true, true) => s.true_pos += 1,
            (true, false) => s.false_pos += 1,
            (false, true) => s.false_neg += 1,
            (false, false) => s.true_neg += 1,
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_respect_minimum_lengths() {
        for seed in 0..20 {
            let tr = LabeledTrace::generate(seed);
            let mut runs = Vec::new();
            let mut cur = (tr.truth[0], 0usize);
            for &b in tr.truth() {
                if b == cur.0 {
                    cur.1 += 1;
                } else {
                    runs.push(cur);
                    cur = (b, 1);
                }
            }
            runs.push(cur);
            for (b, n) in runs {
                assert!(n >= if b { 60 } else { 30 });
            }
        }
    }

    #[test]
    fn detector_scores_well_on_a_few_traces() {
        let mut total = DetectionScore::default();
        for seed in 0..10 {
            total.merge(&score_detector(&DetectorConfig::default(), &LabeledTrace::generate(seed), 26).unwrap());
        }
        assert!(total.precision() >= 0.95 && total.recall() >= 0.95, "{total:?}");
    }

    #[test]
    fn knocks_do_not_trigger() {
        let tr = LabeledTrace::generate(3);
        let mut det = OccupancyDetector::new(DetectorConfig::default()).unwrap();
        let mut buf = vec![[0.0; 3]; 26];
        for t in 0..tr.len_s() {
            tr.fill_second(t, &mut buf);
            let occ = det.step(&buf).unwrap();
            // one knock is at most 2 s, debounce needs 3
            if occ {
                let back = t.saturating_sub(20);
                assert!(tr.truth[back..=t].iter().any(|&b| b));
            }
        }
    }
}
