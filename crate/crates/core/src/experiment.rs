//! A complete single-mode storage run as one immutable value, plus the
//! named-parameter edits used by scans and optimizers.

use serde::{Deserialize, Serialize};

use crate::eit::{
    full_gaussian, simulate_storage, truncated_gaussian, truncated_gaussian_peak, MemoryResult, SimGrid,
    StorageProtocol, Waveform,
};
use crate::error::{invalid, Result};
use crate::modes::{effective_od, EnsembleConfig, LGMode};

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    #[default]
    Truncated,
    /// Untruncated Gaussian with the same FWHM and peak time as the
    /// truncated pulse; the reference for pulse-shaping comparisons.
    FullGaussian,
}

/// Truncated-Gaussian probe parameters.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeShape {
    #[serde(default)]
    pub kind: ProbeKind,
    /// Intensity FWHM, ns.
    pub fwhm: f64,
    /// Amplitude fraction at which the trailing edge is cut (0 = no cut).
    pub truncation_fraction: f64,
    /// Probe window, ns.
    pub duration: f64,
}

/// Calibrated truncation.
impl Default for ProbeShape {
    fn default() -> Self {
        ProbeShape {
            kind: ProbeKind::Truncated,
            fwhm: 130.0,
            truncation_fraction: 0.576,
            duration: 200.0,
        }
    }
}

impl ProbeShape {
    pub fn waveform(&self, dt: f64) -> Result<Waveform> {
        match self.kind {
            ProbeKind::Truncated => truncated_gaussian(self.fwhm, self.truncation_fraction, self.duration, dt),
            ProbeKind::FullGaussian => full_gaussian(self.fwhm, self.peak_time(), dt),
        }
    }

    pub fn peak_time(&self) -> f64 {
        truncated_gaussian_peak(self.fwhm, self.truncation_fraction, self.duration)
    }

    /// The same pulse without the trailing cut.
    pub fn full_reference(&self) -> ProbeShape {
        ProbeShape {
            kind: ProbeKind::FullGaussian,
            ..*self
        }
    }
}

/// Everything needed to run one OAM mode through the memory.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageSetup {
    pub ensemble: EnsembleConfig,
    pub mode: LGMode,
    pub probe: ProbeShape,
    pub protocol: StorageProtocol,
    pub grid: SimGrid,
    /// Use this optical depth instead of the mode/ensemble overlap.
    #[serde(default)]
    pub od_override: Option<f64>,
}

impl Default for StorageSetup {
    fn default() -> Self {
        StorageSetup {
            ensemble: EnsembleConfig::default(),
            mode: LGMode { l: 1, w0: 100.0 },
            probe: ProbeShape::default(),
            protocol: StorageProtocol::default(),
            grid: SimGrid::default(),
            od_override: None,
        }
    }
}

/// Names accepted by [`StorageSetup::with_param`].
pub const PARAM_NAMES: &[&str] = &[
    "l",
    "w0",
    "od",
    "peak_od",
    "sigma_t",
    "gamma_12",
    "control_rabi",
    "fwhm",
    "truncation_fraction",
    "switch_off_time",
    "switch_off_offset",
    "ramp_duration",
];

impl StorageSetup {
    /// Optical depth seen by this mode.
    pub fn od(&self) -> Result<f64> {
        match self.od_override {
            Some(od) => Ok(od),
            None => effective_od(&self.mode, &self.ensemble),
        }
    }

    pub fn run(&self) -> Result<MemoryResult> {
        let od = self.od()?;
        let probe = self.probe.waveform(self.grid.dt)?;
        simulate_storage(&probe, &self.protocol, od, &self.ensemble, &self.grid)
    }

    /// Storage efficiency only.
    pub fn se(&self) -> Result<f64> {
        Ok(self.run()?.se)
    }

    /// Copy with one named parameter changed. `switch_off_offset` moves both
    /// switch times, keeping the storage time; so does `switch_off_time`.
    pub fn with_param(&self, name: &str, value: f64) -> Result<StorageSetup> {
        if !value.is_finite() {
            return Err(invalid(format!("{name} = {value} is not finite")));
        }
        let mut s = *self;
        match name {
            "l" => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(invalid(format!("l must be a nonnegative integer, got {value}")));
                }
                s.mode.l = value as i32;
            }
            "w0" => s.mode.w0 = value,
            "od" => s.od_override = Some(value),
            "peak_od" => s.ensemble.peak_od = value,
            "sigma_t" => s.ensemble.sigma_t = value,
            "gamma_12" => s.ensemble.gamma_12 = value,
            "control_rabi" => s.protocol.control_rabi = value,
            "fwhm" => s.probe.fwhm = value,
            "truncation_fraction" => s.probe.truncation_fraction = value,
            "switch_off_time" => {
                let storage = s.protocol.storage_time();
                s.protocol.switch_off_time = value;
                s.protocol.switch_on_time = value + storage;
            }
            "switch_off_offset" => {
                s.protocol.switch_off_time += value;
                s.protocol.switch_on_time += value;
            }
            "ramp_duration" => s.protocol.ramp_duration = value,
            other => {
                return Err(invalid(format!(
                    "unknown parameter {other:?}; expected one of {}",
                    PARAM_NAMES.join(", ")
                )))
            }
        }
        Ok(s)
    }

    /// Copy driven by the untruncated reference pulse.
    pub fn full_reference(&self) -> StorageSetup {
        StorageSetup {
            probe: self.probe.full_reference(),
            ..*self
        }
    }

    pub fn with_params(&self, names: &[String], values: &[f64]) -> Result<StorageSetup> {
        names
            .iter()
            .zip(values)
            .try_fold(*self, |s, (n, v)| s.with_param(n, *v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_edits() {
        let s = StorageSetup::default();
        let t = s.with_param("switch_off_offset", -20.0).unwrap();
        assert_eq!(t.protocol.switch_off_time, s.protocol.switch_off_time - 20.0);
        assert_eq!(t.protocol.storage_time(), s.protocol.storage_time());
        let t = s.with_param("switch_off_time", 150.0).unwrap();
        assert_eq!(t.protocol.switch_on_time, 150.0 + s.protocol.storage_time());
        assert_eq!(s.with_param("l", 3.0).unwrap().mode.l, 3);
        assert!(s.with_param("l", 1.5).is_err());
        assert!(s.with_param("bogus", 1.0).is_err());
        assert_eq!(s.with_param("od", 7.0).unwrap().od().unwrap(), 7.0);
    }

    #[test]
    fn full_reference_shares_peak() {
        let p = ProbeShape::default();
        let a = p.waveform(0.25).unwrap();
        let b = p.full_reference().waveform(0.25).unwrap();
        assert!((a.peak_time().unwrap() - b.peak_time().unwrap()).abs() < 0.01);
        assert!(b.energy() > a.energy());
        assert!(b.t0 < 0.0);
    }
}
