use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::options::{fixture_options, validate_options, AnswerOption};
use crate::topology::TopologyKind;

/// Every tunable of one deliberation. Times are in seconds of session clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmConfig {
    pub min_size: usize,
    pub max_size: usize,
    pub topology_kind: TopologyKind,
    pub duration: f64,
    pub relay_interval: f64,
    pub snapshot_interval: f64,
    pub options: Vec<AnswerOption>,
    pub seed: u64,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        Self {
            min_size: 5,
            max_size: 6,
            topology_kind: TopologyKind::DirectedRing,
            duration: 240.0,
            relay_interval: 30.0,
            snapshot_interval: 15.0,
            options: fixture_options(),
            seed: 0,
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_size == 0 || self.min_size > self.max_size {
            return Err(Error::Config(format!(
                "group size bounds must satisfy 1 <= min <= max, got ({}, {})",
                self.min_size, self.max_size
            )));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::Config("duration must be positive".into()));
        }
        for (name, v) in [
            ("snapshot_interval", self.snapshot_interval),
            ("relay_interval", self.relay_interval),
        ] {
            if !(v.is_finite() && v > 0.0 && v <= self.duration) {
                return Err(Error::Config(format!("{name} must lie in (0, duration]")));
            }
        }
        validate_options(&self.options)
    }

    pub fn snapshot_count(&self) -> usize {
        boundaries(self.duration, self.snapshot_interval)
    }

    pub fn relay_rounds(&self) -> usize {
        boundaries(self.duration, self.relay_interval)
    }
}

/// Number of k >= 1 with k * interval <= duration.
pub(crate) fn boundaries(duration: f64, interval: f64) -> usize {
    let mut k = 0usize;
    while boundary(k + 1, interval) <= duration + TIME_EPS {
        k += 1;
    }
    k
}

pub(crate) const TIME_EPS: f64 = 1e-9;

pub(crate) fn boundary(k: usize, interval: f64) -> f64 {
    k as f64 * interval
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_give_sixteen_snapshots_and_eight_rounds() {
        let c = SwarmConfig::default();
        c.validate().unwrap();
        assert_eq!(c.snapshot_count(), 16);
        assert_eq!(c.relay_rounds(), 8);
    }

    #[test]
    fn rejects_bad_values() {
        let base = SwarmConfig::default();
        let mut c = base.clone();
        c.duration = 0.0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.snapshot_interval = 241.0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.relay_interval = 0.0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.min_size = 7;
        assert!(c.validate().is_err());
        let mut c = base;
        c.options.clear();
        assert!(c.validate().is_err());
    }

    #[test]
    fn fractional_intervals_count_without_drift() {
        assert_eq!(boundaries(1.0, 0.1), 10);
        assert_eq!(boundaries(240.0, 7.0), 34);
    }
}
