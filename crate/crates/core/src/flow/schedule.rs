use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Sorted time grid `{0} ∪ {t_min·rᵏ} ∪ {T}` with optional extra times and step cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    times: Vec<f64>,
}

const MERGE_TOL: f64 = 1e-12;

impl StepSchedule {
    pub fn geometric(t_min: f64, ratio: f64, horizon: f64) -> Result<Self> {
        if !(t_min > 0.0) {
            return Err(Error::InvalidArgument(format!("t_min must be positive, got {t_min}")));
        }
        if !(ratio > 1.0 && ratio <= 2.0) {
            return Err(Error::InvalidArgument(format!("ratio must lie in (1, 2], got {ratio}")));
        }
        if !(horizon >= t_min) {
            return Err(Error::InvalidArgument(format!(
                "horizon {horizon} must be at least t_min {t_min}"
            )));
        }
        let mut times = vec![0.0];
        let mut k = 0;
        loop {
            let t = t_min * ratio.powi(k);
            if t >= horizon * (1.0 - MERGE_TOL) {
                break;
            }
            times.push(t);
            k += 1;
        }
        times.push(horizon);
        Ok(Self { times })
    }

    pub fn from_times(mut times: Vec<f64>) -> Result<Self> {
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidArgument("schedule times must be finite and ≥ 0".into()));
        }
        times.sort_by(f64::total_cmp);
        times.dedup_by(|a, b| (*a - *b).abs() <= MERGE_TOL * b.abs().max(1e-300));
        if times.len() < 2 {
            return Err(Error::InvalidArgument("schedule needs at least two times".into()));
        }
        Ok(Self { times })
    }

    /// Adds the given times (clipped to the schedule's range).
    pub fn with_times(&self, extra: &[f64]) -> Self {
        let (lo, hi) = (self.start(), self.end());
        let mut all = self.times.clone();
        all.extend(extra.iter().copied().filter(|t| *t >= lo && *t <= hi));
        Self::from_times(all).expect("merging keeps the range")
    }

    /// Subdivides every step longer than `max_step` uniformly.
    pub fn capped(&self, max_step: f64) -> Self {
        let mut out = vec![self.times[0]];
        for w in self.times.windows(2) {
            let pieces = ((w[1] - w[0]) / max_step * (1.0 - MERGE_TOL)).ceil().max(1.0) as usize;
            for k in 1..=pieces {
                out.push(if k == pieces {
                    w[1]
                } else {
                    w[0] + (w[1] - w[0]) * k as f64 / pieces as f64
                });
            }
        }
        Self { times: out }
    }

    /// Inserts the midpoint of every step.
    pub fn refined(&self) -> Self {
        let mut out = Vec::with_capacity(2 * self.times.len());
        for w in self.times.windows(2) {
            out.push(w[0]);
            out.push(0.5 * (w[0] + w[1]));
        }
        out.push(self.end());
        Self { times: out }
    }

    /// Restarts the schedule at `t0`, keeping the later times.
    pub fn starting_at(&self, t0: f64) -> Result<Self> {
        let mut times = vec![t0];
        times.extend(self.times.iter().copied().filter(|t| *t > t0 * (1.0 + MERGE_TOL)));
        Self::from_times(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    pub fn max_step(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Index of a schedule time within the merge tolerance.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times
            .iter()
            .position(|s| (s - t).abs() <= MERGE_TOL * t.abs().max(1e-300))
    }
}
