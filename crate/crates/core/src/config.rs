//! Experiment configuration: built-in defaults, a JSON file and
//! `key=value` overrides merged in that order, then validated with the
//! location of any bad key reported.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::calibration::CalibrationSpec;
use crate::eit::{SimGrid, StorageProtocol};
use crate::error::{invalid, Error, Result};
use crate::experiment::{ProbeShape, StorageSetup};
use crate::modes::{EnsembleConfig, LGMode};
use crate::optim::{OptimizationSpec, ParamBound};
use crate::quantum::{BasisLabel, QubitKet};
use crate::stats::{CoherentSource, DetectorModel};

/// Qubit `alpha|G> + beta e^{i phi}|R>` and the OAM orders carrying its
/// basis modes. Only `|l|` matters for storage, so `l_g = l_r = 1` models
/// the `l = +1 / -1` pair.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitConfig {
    pub alpha: f64,
    pub beta: f64,
    pub phi: f64,
    pub l_g: u32,
    pub l_r: u32,
    /// Extra phase the memory puts on `|R>`, rad.
    pub dphi: f64,
}

impl Default for QubitConfig {
    fn default() -> Self {
        QubitConfig {
            alpha: 1.0,
            beta: 1.0,
            phi: 0.0,
            l_g: 1,
            l_r: 1,
            dphi: 0.0,
        }
    }
}

impl QubitConfig {
    pub fn ket(&self) -> Result<QubitKet> {
        QubitKet::from_coeffs(self.alpha, self.beta, self.phi)
    }

    /// Coefficients of one of the six basis states.
    pub fn set_label(&mut self, label: BasisLabel) {
        use std::f64::consts::FRAC_PI_2;
        let (a, b, p) = match label {
            BasisLabel::G => (1.0, 0.0, 0.0),
            BasisLabel::R => (0.0, 1.0, 0.0),
            BasisLabel::H => (1.0, 1.0, 0.0),
            BasisLabel::V => (1.0, 1.0, std::f64::consts::PI),
            BasisLabel::D => (1.0, 1.0, FRAC_PI_2),
            BasisLabel::A => (1.0, 1.0, -FRAC_PI_2),
        };
        self.alpha = a;
        self.beta = b;
        self.phi = p;
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Collection time the expected-count histogram is scaled to, s.
    pub histogram_time_s: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { histogram_time_s: 1200.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    /// Highest OAM order for `scan-oam`; orders run from 0.
    pub l_max: u32,
    /// Parameter and values for the generic `scan`.
    pub param: String,
    pub values: Vec<f64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            l_max: 5,
            param: "od".into(),
            values: vec![0.0, 20.0, 50.0, 100.0, 150.0, 220.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographyConfig {
    /// Send the qubit through the memory before measuring.
    pub stored: bool,
    pub collection_time_s: f64,
    pub resamples: usize,
    /// Subtract `background_rate * time` from every count first.
    pub background_subtraction: bool,
    /// Extra runs at these mean photon numbers, one table row each.
    pub nbar_scan: Vec<f64>,
}

impl Default for TomographyConfig {
    fn default() -> Self {
        TomographyConfig {
            stored: false,
            collection_time_s: 1200.0,
            resamples: 1000,
            background_subtraction: false,
            nbar_scan: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    pub nbar: Vec<f64>,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            nbar: vec![0.1, 0.5, 1.0, 2.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub spec: OptimizationSpec,
    /// Search on the half-resolution grid, then re-run the best point.
    pub coarse_search: bool,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            spec: OptimizationSpec {
                params: vec![ParamBound::new("truncation_fraction", 0.05, 1.0)],
                budget: 40,
                tolerance: 1e-3,
            },
            coarse_search: true,
        }
    }
}

/// Everything a command needs. Output location and thread count are not
/// part of it since they never change results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ensemble: EnsembleConfig,
    pub mode: LGMode,
    pub probe: ProbeShape,
    pub protocol: StorageProtocol,
    pub grid: SimGrid,
    /// Fixed optical depth instead of the mode/ensemble overlap.
    pub od_override: Option<f64>,
    pub qubit: QubitConfig,
    pub source: CoherentSource,
    pub detector: DetectorModel,
    pub seed: u64,
    pub simulate: SimulateConfig,
    pub scan: ScanConfig,
    pub tomography: TomographyConfig,
    pub threshold: ThresholdConfig,
    pub optimize: OptimizeConfig,
    pub calibrate: CalibrationSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let setup = StorageSetup::default();
        ExperimentConfig {
            ensemble: setup.ensemble,
            mode: setup.mode,
            probe: setup.probe,
            protocol: setup.protocol,
            grid: setup.grid,
            od_override: None,
            qubit: QubitConfig::default(),
            source: CoherentSource::default(),
            detector: DetectorModel::default(),
            seed: 1,
            simulate: SimulateConfig::default(),
            scan: ScanConfig::default(),
            tomography: TomographyConfig::default(),
            threshold: ThresholdConfig::default(),
            optimize: OptimizeConfig::default(),
            calibrate: CalibrationSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn setup(&self) -> StorageSetup {
        StorageSetup {
            ensemble: self.ensemble,
            mode: self.mode,
            probe: self.probe,
            protocol: self.protocol,
            grid: self.grid,
            od_override: self.od_override,
        }
    }

    pub fn set_setup(&mut self, s: &StorageSetup) {
        self.ensemble = s.ensemble;
        self.mode = s.mode;
        self.probe = s.probe;
        self.protocol = s.protocol;
        self.grid = s.grid;
        self.od_override = s.od_override;
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble.validate()?;
        self.mode.validate()?;
        self.protocol.validate()?;
        self.grid.validate()?;
        if let Some(od) = self.od_override {
            if !(od >= 0.0 && od.is_finite()) {
                return Err(invalid("od_override must be finite and >= 0"));
            }
        }
        self.qubit.ket()?;
        self.source.validate()?;
        self.detector.validate()?;
        if !(self.simulate.histogram_time_s > 0.0) {
            return Err(invalid("simulate.histogram_time_s must be > 0"));
        }
        if !(self.tomography.collection_time_s > 0.0) {
            return Err(invalid("tomography.collection_time_s must be > 0"));
        }
        self.optimize.spec.validate()?;
        self.calibrate.validate()?;
        Ok(())
    }

    /// Built-in defaults, then `file`, then each `key=value` override
    /// (dotted key path, value parsed as JSON or else taken as a string).
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = serde_json::to_value(ExperimentConfig::default())?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)?;
            let layer: Value = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            merge(&mut value, layer);
        }
        for ov in overrides {
            apply_override(&mut value, ov)?;
        }
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_path_to_error::deserialize(value).map_err(|e| Error::Config(format!("{}: {}", e.path(), e.inner())))?;
        cfg.validate().map_err(|e| match e {
            Error::InvalidArgument(m) => Error::Config(m),
            other => other,
        })?;
        Ok(cfg)
    }
}

fn merge(base: &mut Value, layer: Value) {
    match (base, layer) {
        (Value::Object(b), Value::Object(l)) => {
            for (k, v) in l {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn apply_override(value: &mut Value, ov: &str) -> Result<()> {
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {ov:?} is not key=value")))?;
    let parsed = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = value;
    for part in key.split('.') {
        let obj = slot
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override {key}: {part} is not inside an object")))?;
        slot = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    *slot = parsed;
    Ok(())
}
