//! Python module `rrmag`.

use std::collections::HashMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rrmag::estimator::{self, EstimatorConfig, MotionMatrix};
use rrmag::frame_io::{load_sequence, save_y8};
use rrmag::pipeline::{run_estimate, RunConfig};
use rrmag::synth::SynthSpec;
use rrmag::{eval, temporal};

fn err(e: rrmag::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// `key=value` settings; values go through `str()` so numbers work too.
fn pairs(settings: Option<HashMap<String, Bound<'_, PyAny>>>) -> PyResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (k, v) in settings.unwrap_or_default() {
        out.push((k, v.str()?.to_string()));
    }
    // Deterministic order; a profile key is applied first by the config parser anyway.
    out.sort();
    Ok(out)
}

#[pyclass(name = "Quaternion", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyQuaternion(rrmag::quaternion::Quaternion);

#[pymethods]
impl PyQuaternion {
    #[new]
    fn new(s: f64, i: f64, j: f64, k: f64) -> Self {
        Self(rrmag::quaternion::Quaternion::new(s, i, j, k))
    }

    #[getter]
    fn s(&self) -> f64 {
        self.0.s
    }

    #[getter]
    fn i(&self) -> f64 {
        self.0.i
    }

    #[getter]
    fn j(&self) -> f64 {
        self.0.j
    }

    #[getter]
    fn k(&self) -> f64 {
        self.0.k
    }

    fn __mul__(&self, other: &Self) -> Self {
        Self(self.0 * other.0)
    }

    fn conj(&self) -> Self {
        Self(self.0.conj())
    }

    fn norm(&self) -> f64 {
        self.0.norm()
    }

    fn inv(&self) -> PyResult<Self> {
        self.0.inv().map(Self).map_err(err)
    }

    /// Log of a unit quaternion as `(pure quaternion, singular)`.
    fn log_unit(&self) -> PyResult<(Self, bool)> {
        let l = self.0.log_unit().map_err(err)?;
        Ok((Self(l.value), l.singular))
    }

    fn __repr__(&self) -> String {
        let q = self.0;
        format!("Quaternion({}, {}, {}, {})", q.s, q.i, q.j, q.k)
    }
}

#[pyclass(name = "Bandpass", frozen)]
struct PyBandpass(temporal::BandpassDesign);

#[pymethods]
impl PyBandpass {
    #[new]
    fn new(f_lo_hz: f64, f_hi_hz: f64, fs_hz: f64) -> PyResult<Self> {
        temporal::design_bandpass(f_lo_hz, f_hi_hz, fs_hz).map(Self).map_err(err)
    }

    fn magnitude_db(&self, f_hz: f64) -> f64 {
        self.0.magnitude_db(f_hz)
    }

    fn warmup_samples(&self) -> usize {
        self.0.warmup_samples()
    }

    /// Filters one sequence from a zero initial state.
    fn filter(&self, x: Vec<f64>) -> Vec<f64> {
        temporal::filter_signal(&x, &self.0)
    }
}

/// Breathing frequency of a `[level][component][sample]` signal.
#[pyfunction]
#[pyo3(signature = (signals, fs_hz, f_min_hz, f_max_hz, grid_step_hz = EstimatorConfig::DEFAULT_GRID_STEP_HZ))]
fn estimate_f0<'py>(
    py: Python<'py>,
    signals: Vec<Vec<Vec<f64>>>,
    fs_hz: f64,
    f_min_hz: f64,
    f_max_hz: f64,
    grid_step_hz: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let x = MotionMatrix::from_nested(&signals, fs_hz).map_err(err)?;
    let cfg = EstimatorConfig {
        f_min_hz,
        f_max_hz,
        grid_step_hz,
        eta: 0.0,
    };
    let est = estimator::estimate_f0(&x, &cfg).map_err(err)?;
    let amps = estimator::estimate_amplitudes(&x, est.f0_hz).map_err(err)?;
    let (stat, _) = estimator::periodicity_test(&amps, x.len(), x.levels(), x.comps(), 0.0);
    let d = PyDict::new(py);
    d.set_item("f0_hz", est.f0_hz)?;
    d.set_item("grid_f0_hz", est.grid_f0_hz)?;
    d.set_item("amplitudes", amps)?;
    d.set_item("periodicity_stat", stat)?;
    d.set_item("short_window", est.short_window)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (est, reference, skip = None))]
fn normalized_rmse(est: Vec<f64>, reference: Vec<f64>, skip: Option<Vec<bool>>) -> PyResult<f64> {
    eval::normalized_rmse(&est, &reference, skip.as_deref()).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (rmse, factor = 20.0))]
fn to_db(rmse: f64, factor: f64) -> f64 {
    eval::to_db(rmse, factor)
}

#[pyfunction]
fn genie_correct(est: Vec<f64>, reference: Vec<f64>) -> Vec<f64> {
    eval::genie_correct(&est, &reference)
}

/// Renders a synthetic video to a `.y8` file and returns its ground truth.
#[pyfunction]
#[pyo3(signature = (path, seed = 0, settings = None))]
fn synth<'py>(
    py: Python<'py>,
    path: PathBuf,
    seed: u64,
    settings: Option<HashMap<String, Bound<'py, PyAny>>>,
) -> PyResult<Bound<'py, PyDict>> {
    let text: String = pairs(settings)?.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    let spec = SynthSpec::parse(&text).map_err(err)?;
    let (seq, truth) = rrmag::synth::generate(&spec, seed).map_err(err)?;
    save_y8(&seq, &path).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("f0_hz", truth.f0_hz)?;
    d.set_item("fs_hz", truth.fs_hz)?;
    d.set_item("num_frames", truth.num_frames)?;
    d.set_item("centers", truth.centers)?;
    Ok(d)
}

/// Runs the full pipeline on a video file; one dict per window.
#[pyfunction]
#[pyo3(signature = (path, settings = None))]
fn estimate<'py>(
    py: Python<'py>,
    path: PathBuf,
    settings: Option<HashMap<String, Bound<'py, PyAny>>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let kv = pairs(settings)?;
    let cfg = RunConfig::from_pairs(kv.iter().map(|(k, v)| (k.as_str(), v.as_str()))).map_err(err)?;
    let seq = load_sequence(&path, cfg.fs_hz).map_err(err)?;
    let out = py.detach(|| run_estimate(&seq, &cfg)).map_err(err)?;
    out.results
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("window", r.window_index)?;
            d.set_item("t_start_s", r.t_start_s)?;
            d.set_item("t_end_s", r.t_end_s)?;
            d.set_item("f0_hz", r.f0_hat_hz)?;
            d.set_item("rr_bpm", r.rr_bpm())?;
            d.set_item("stat", r.periodicity_stat)?;
            d.set_item("periodic", r.periodic)?;
            d.set_item("warmup", r.warmup)?;
            d.set_item("valid", r.valid)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
#[pyo3(name = "rrmag")]
fn rrmag_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyQuaternion>()?;
    m.add_class::<PyBandpass>()?;
    m.add_function(wrap_pyfunction!(estimate_f0, m)?)?;
    m.add_function(wrap_pyfunction!(normalized_rmse, m)?)?;
    m.add_function(wrap_pyfunction!(to_db, m)?)?;
    m.add_function(wrap_pyfunction!(genie_correct, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    Ok(())
}
