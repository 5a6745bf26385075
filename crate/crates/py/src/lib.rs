//! Python bindings: storage runs, mode overlaps, qubit storage, tomography
//! and the command harness.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use oam_memory::config::ExperimentConfig;
use oam_memory::eit::{self, PerModeEfficiency};
use oam_memory::experiment;
use oam_memory::harness::{self, Command};
use oam_memory::modes::{self, EnsembleConfig, LGMode};
use oam_memory::quantum::{self, BasisLabel, QubitKet, StokesVector};
use oam_memory::stats::{self, CoherentSource, CountRecord, DetectorModel};
use oam_memory::tomography::{self, TomographyRecord};
use oam_memory::Error;

fn py_err(e: Error) -> PyErr {
    match harness::exit_code(&e) {
        2 => PyValueError::new_err(e.to_string()),
        4 => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn label(s: &str) -> PyResult<BasisLabel> {
    s.parse().map_err(py_err)
}

fn paths(ps: Vec<PathBuf>) -> Vec<String> {
    ps.into_iter().map(|p| p.display().to_string()).collect()
}

/// Resolved experiment configuration.
#[pyclass(name = "Config", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    /// Defaults, then an optional JSON file, then `key=value` overrides.
    #[new]
    #[pyo3(signature = (path=None, overrides=Vec::new()))]
    fn new(path: Option<PathBuf>, overrides: Vec<String>) -> PyResult<Self> {
        let inner = ExperimentConfig::load(path.as_deref(), &overrides).map_err(py_err)?;
        Ok(PyConfig { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let value = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let inner = ExperimentConfig::from_value(value).map_err(py_err)?;
        Ok(PyConfig { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn setup(&self) -> PyStorageSetup {
        PyStorageSetup {
            inner: self.inner.setup(),
        }
    }

    /// Runs a command (`simulate`, `scan_oam`, ...) and returns the files written.
    fn run(&self, command: &str, out: PathBuf) -> PyResult<Vec<String>> {
        let cmd: Command = command.parse().map_err(py_err)?;
        harness::run_command(cmd, &self.inner, &out).map(paths).map_err(py_err)
    }
}

/// Outcome of one storage run.
#[pyclass(name = "MemoryResult", get_all, skip_from_py_object)]
struct PyMemoryResult {
    input_energy: f64,
    transmitted_energy: f64,
    retrieved_energy: f64,
    dissipated_energy: f64,
    se: f64,
    balance_error: f64,
    /// Exit-face times (ns) and complex envelope.
    exit_times: Vec<f64>,
    exit_field: Vec<(f64, f64)>,
}

/// Ensemble, mode, probe, protocol and grid of one storage run.
#[pyclass(name = "StorageSetup", skip_from_py_object)]
#[derive(Clone)]
struct PyStorageSetup {
    inner: experiment::StorageSetup,
}

#[pymethods]
impl PyStorageSetup {
    #[new]
    fn new() -> Self {
        PyStorageSetup {
            inner: experiment::StorageSetup::default(),
        }
    }

    /// Copy with one named parameter changed.
    fn with_param(&self, name: &str, value: f64) -> PyResult<Self> {
        let inner = self.inner.with_param(name, value).map_err(py_err)?;
        Ok(PyStorageSetup { inner })
    }

    #[staticmethod]
    fn param_names() -> Vec<&'static str> {
        experiment::PARAM_NAMES.to_vec()
    }

    fn od(&self) -> PyResult<f64> {
        self.inner.od().map_err(py_err)
    }

    fn se(&self, py: Python<'_>) -> PyResult<f64> {
        let s = self.inner;
        py.detach(move || s.se()).map_err(py_err)
    }

    fn run(&self, py: Python<'_>) -> PyResult<PyMemoryResult> {
        let s = self.inner;
        let r = py.detach(move || s.run()).map_err(py_err)?;
        let w = &r.exit_waveform;
        Ok(PyMemoryResult {
            input_energy: r.input_energy,
            transmitted_energy: r.transmitted_energy,
            retrieved_energy: r.retrieved_energy,
            dissipated_energy: r.dissipated_energy,
            se: r.se,
            balance_error: r.balance_error(),
            exit_times: (0..w.len()).map(|k| w.time(k)).collect(),
            exit_field: w.samples.iter().map(|c| (c.re, c.im)).collect(),
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

/// Intensity-weighted optical depth of LG mode `l` in a Gaussian cloud.
#[pyfunction]
#[pyo3(signature = (l, w0=100.0, peak_od=220.0, sigma_t=None))]
fn effective_od(l: i32, w0: f64, peak_od: f64, sigma_t: Option<f64>) -> PyResult<f64> {
    let d = EnsembleConfig::default();
    let ens = EnsembleConfig {
        peak_od,
        sigma_t: sigma_t.unwrap_or(d.sigma_t),
        ..d
    };
    let mode = LGMode::new(l, w0).map_err(py_err)?;
    modes::effective_od(&mode, &ens).map_err(py_err)
}

/// Classical fidelity bound for a coherent input of mean photon number `nbar`.
#[pyfunction]
fn fidelity_threshold(nbar: f64) -> PyResult<f64> {
    stats::coherent_fidelity_threshold(nbar).map_err(py_err)
}

/// Fidelity of two states given by their Stokes vectors.
#[pyfunction]
fn fidelity(a: (f64, f64, f64), b: (f64, f64, f64)) -> PyResult<f64> {
    let rho = |s: (f64, f64, f64)| quantum::density_from_stokes(StokesVector::new(s.0, s.1, s.2));
    quantum::fidelity(&rho(a), &rho(b)).map_err(py_err)
}

/// Stokes vector of `alpha|G> + beta e^{i phi}|R>`.
#[pyfunction]
fn qubit_stokes(alpha: f64, beta: f64, phi: f64) -> PyResult<(f64, f64, f64)> {
    let s = QubitKet::from_coeffs(alpha, beta, phi).map_err(py_err)?.stokes();
    Ok((s.s1, s.s2, s.s3))
}

/// Stores a qubit with per-mode efficiencies; returns the output Stokes
/// vector, the overall efficiency and the fidelity with the input.
#[pyfunction]
#[pyo3(signature = (alpha, beta, phi, eta_g, eta_r, dphi=0.0))]
fn store_qubit(alpha: f64, beta: f64, phi: f64, eta_g: f64, eta_r: f64, dphi: f64) -> PyResult<((f64, f64, f64), f64, f64)> {
    let ket = QubitKet::from_coeffs(alpha, beta, phi).map_err(py_err)?;
    let (out, eta) = eit::store_qubit(&ket, &PerModeEfficiency { eta_g, eta_r, dphi }).map_err(py_err)?;
    let s = out.stokes();
    Ok(((s.s1, s.s2, s.s3), eta, ket.overlap(&out)))
}

/// Six-basis counts for a state given by its Stokes vector.
#[pyfunction]
#[pyo3(signature = (stokes, time_s, seed, throughput=1.0, nbar=0.5, rep_rate=2.5e5, efficiency=0.3, background_rate=300.0))]
#[allow(clippy::too_many_arguments)]
fn simulate_tomography(
    stokes: (f64, f64, f64),
    time_s: f64,
    seed: u64,
    throughput: f64,
    nbar: f64,
    rep_rate: f64,
    efficiency: f64,
    background_rate: f64,
) -> PyResult<Vec<(String, u64)>> {
    let rho = quantum::density_from_stokes(StokesVector::new(stokes.0, stokes.1, stokes.2));
    let source = CoherentSource { nbar, rep_rate };
    let det = DetectorModel {
        efficiency,
        background_rate,
        ..DetectorModel::default()
    };
    let rec = tomography::simulate_tomography(&rho, throughput, &source, &det, time_s, seed).map_err(py_err)?;
    Ok(rec.records().iter().map(|r| (r.basis.to_string(), r.counts)).collect())
}

/// Reconstructs the Stokes vector from `(basis, counts)` pairs; with
/// `rho_in` as a Stokes vector also returns fidelity and bootstrap sigma.
#[pyfunction]
#[pyo3(signature = (counts, time_s=1.0, rho_in=None, resamples=1000, seed=0))]
fn reconstruct(
    counts: Vec<(String, u64)>,
    time_s: f64,
    rho_in: Option<(f64, f64, f64)>,
    resamples: usize,
    seed: u64,
) -> PyResult<((f64, f64, f64), Option<(f64, f64)>)> {
    let records = counts
        .iter()
        .map(|(b, n)| {
            Ok(CountRecord {
                basis: label(b)?,
                counts: *n,
                collection_time_s: time_s,
            })
        })
        .collect::<PyResult<Vec<_>>>()?;
    let rec = TomographyRecord::new(records).map_err(py_err)?;
    let s = tomography::reconstruct(&rec).map_err(py_err)?.stokes;
    let est = match rho_in {
        Some(t) => {
            let rho = quantum::density_from_stokes(StokesVector::new(t.0, t.1, t.2));
            let e = tomography::fidelity_with_error(&rec, &rho, resamples, seed).map_err(py_err)?;
            Some((e.fidelity, e.sigma))
        }
        None => None,
    };
    Ok(((s.s1, s.s2, s.s3), est))
}

/// Re-runs the command recorded in a result JSON into `out`.
#[pyfunction]
fn replay(result: PathBuf, out: PathBuf) -> PyResult<Vec<String>> {
    harness::replay(Path::new(&result), &out).map(paths).map_err(py_err)
}

#[pymodule]
fn oam_memory_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyStorageSetup>()?;
    m.add_class::<PyMemoryResult>()?;
    m.add_function(wrap_pyfunction!(effective_od, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(qubit_stokes, m)?)?;
    m.add_function(wrap_pyfunction!(store_qubit, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_tomography, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(replay, m)?)?;
    Ok(())
}
