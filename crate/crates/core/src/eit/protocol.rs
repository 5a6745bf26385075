use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Control-field schedule for one write/store/read cycle. Times in ns.
///
/// The control sits at `control_rabi` until `switch_off_time`, ramps to zero
/// over `ramp_duration` with a raised-cosine edge, stays dark, and ramps back
/// up starting at `switch_on_time`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageProtocol {
    /// Peak control Rabi frequency, rad/s.
    pub control_rabi: f64,
    pub switch_off_time: f64,
    pub switch_on_time: f64,
    pub ramp_duration: f64,
}

/// Calibrated control strength; 200 ns storage.
impl Default for StorageProtocol {
    fn default() -> Self {
        StorageProtocol {
            control_rabi: 5.945 * crate::modes::RB_D1_GAMMA,
            switch_off_time: 200.0,
            switch_on_time: 400.0,
            ramp_duration: 30.0,
        }
    }
}

impl StorageProtocol {
    /// Control held on for the whole run.
    pub fn constant(control_rabi: f64) -> Self {
        StorageProtocol {
            control_rabi,
            switch_off_time: f64::INFINITY,
            switch_on_time: f64::INFINITY,
            ramp_duration: 0.0,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.switch_off_time.is_infinite()
    }

    pub fn storage_time(&self) -> f64 {
        self.switch_on_time - self.switch_off_time
    }

    pub fn validate(&self) -> Result<()> {
        if !self.control_rabi.is_finite() || self.control_rabi < 0.0 {
            return Err(invalid("protocol: control_rabi must be finite and >= 0"));
        }
        if self.is_constant() {
            return Ok(());
        }
        if !(self.ramp_duration >= 0.0) || !self.ramp_duration.is_finite() {
            return Err(invalid("protocol: ramp_duration must be >= 0"));
        }
        if !self.switch_off_time.is_finite() || !self.switch_on_time.is_finite() {
            return Err(invalid("protocol: switch times must both be finite"));
        }
        if self.switch_on_time - self.switch_off_time < self.ramp_duration {
            return Err(invalid(
                "protocol: switch_on_time - switch_off_time must be at least ramp_duration",
            ));
        }
        Ok(())
    }

    /// Control Rabi frequency at time `t` (ns), rad/s.
    pub fn control_at(&self, t: f64) -> f64 {
        self.control_rabi * self.envelope(t)
    }

    fn envelope(&self, t: f64) -> f64 {
        if t <= self.switch_off_time {
            return 1.0;
        }
        let ramp = self.ramp_duration;
        if t < self.switch_on_time {
            if t >= self.switch_off_time + ramp {
                return 0.0;
            }
            return 0.5 * (1.0 + (PI * (t - self.switch_off_time) / ramp).cos());
        }
        if t >= self.switch_on_time + ramp {
            return 1.0;
        }
        0.5 * (1.0 - (PI * (t - self.switch_on_time) / ramp).cos())
    }
}
