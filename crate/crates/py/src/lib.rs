//! Python bindings.
//!
//! Structured values cross the boundary as plain dicts and lists (via JSON),
//! so the Python side sees the same field names as the documents and the API.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyString;
use serde::de::DeserializeOwned;
use serde::Serialize;

use pathpref_core::experiments::{
    read_batch_csv, run_batch as core_run_batch, summarize as core_summarize, write_batch_csv,
    ExperimentConfig,
};
use pathpref_core::graph::WeightVector;
use pathpref_core::problem::LearningProblem;
use pathpref_core::regions::DEFAULT_SAMPLE_COUNT;
use pathpref_core::scenario::Scenario;
use pathpref_core::scenarios::{preset, preset_names as core_preset_names};
use pathpref_core::session::{Feedback, Session as CoreSession, SessionConfig};
use pathpref_core::users::calibrate_beta as core_calibrate_beta;
use pathpref_core::Error;

fn err(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::Csv(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Accepts a JSON string or any JSON-serializable Python object.
fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = if let Ok(s) = obj.cast::<PyString>() {
        s.to_string()
    } else {
        obj.py()
            .import("json")?
            .call_method1("dumps", (obj,))?
            .extract()?
    };
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn load_scenario(spec: &str) -> PyResult<Scenario> {
    if core_preset_names().contains(&spec) {
        preset(spec).map_err(err)
    } else if spec.trim_start().starts_with('{') {
        Scenario::from_json_str(spec).map_err(err)
    } else {
        Scenario::load(spec).map_err(err)
    }
}

fn feedback(choice: &str) -> PyResult<Feedback> {
    match choice {
        "current" => Ok(Feedback::Current),
        "new" => Ok(Feedback::New),
        _ => Err(PyValueError::new_err(format!(
            "choice must be \"current\" or \"new\", got {choice:?}"
        ))),
    }
}

/// Sampled equivalence regions of one task.
#[pyclass(frozen)]
struct Problem {
    inner: Arc<LearningProblem>,
}

#[pymethods]
impl Problem {
    /// `scenario` is a preset name, a scenario document (JSON text) or a file path.
    #[new]
    #[pyo3(signature = (scenario, task=0, samples=DEFAULT_SAMPLE_COUNT, seed=0))]
    fn new(
        py: Python<'_>,
        scenario: &str,
        task: usize,
        samples: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let scenario = Arc::new(load_scenario(scenario)?);
        let inner = py
            .detach(|| LearningProblem::build(scenario, task, samples, seed))
            .map_err(err)?;
        Ok(Self {
            inner: Arc::new(inner),
        })
    }

    #[getter]
    fn region_count(&self) -> usize {
        self.inner.region_count()
    }

    #[getter]
    fn sample_count(&self) -> usize {
        self.inner.sample_count()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.regions().dim()
    }

    /// Region dump: bounds, and per region its path and representative weight.
    fn regions(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.regions().export())
    }

    /// Cost of every region's path under `w`.
    fn path_costs(&self, w: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.path_costs(&WeightVector(w)).map_err(err)
    }

    /// Region whose path is optimal at `w`, if sampling found it.
    fn region_of_weight(&self, w: Vec<f64>) -> PyResult<Option<u32>> {
        Ok(self
            .inner
            .region_of_weight(&WeightVector(w))
            .map_err(err)?
            .map(|r| r.0))
    }

    /// β whose mean correct-answer probability over a random panel of
    /// region pairs is within `tolerance` of `target`.
    #[pyo3(signature = (w, target, tolerance=0.01, seed=0))]
    fn calibrate_beta(&self, w: Vec<f64>, target: f64, tolerance: f64, seed: u64) -> PyResult<f64> {
        core_calibrate_beta(&self.inner, &WeightVector(w), target, tolerance, seed).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Problem(regions={}, samples={})",
            self.inner.region_count(),
            self.inner.sample_count()
        )
    }
}

/// An interactive learning session.
#[pyclass]
struct Session {
    inner: CoreSession,
}

#[pymethods]
impl Session {
    /// `config` is a dict or JSON text with the session fields
    /// (`selector`, `p_hat`, `budget`, `beta`, ...); missing fields take defaults.
    #[new]
    #[pyo3(signature = (problem, config=None, seed=0))]
    fn new(problem: &Problem, config: Option<&Bound<'_, PyAny>>, seed: u64) -> PyResult<Self> {
        let config: SessionConfig = match config {
            Some(c) => from_py(c)?,
            None => SessionConfig::default(),
        };
        let inner = CoreSession::new(problem.inner.clone(), config, seed).map_err(err)?;
        Ok(Self { inner })
    }

    /// Rebuilds a session from recorded answers.
    #[staticmethod]
    #[pyo3(signature = (problem, answers, config=None, seed=0))]
    fn replay(
        problem: &Problem,
        answers: Vec<String>,
        config: Option<&Bound<'_, PyAny>>,
        seed: u64,
    ) -> PyResult<Self> {
        let mut s = Self::new(problem, config, seed)?;
        for a in answers {
            s.inner.step(feedback(&a)?).map_err(err)?;
        }
        Ok(s)
    }

    /// Pending `(current, proposed)` region ids, or `None` once finished.
    fn query(&self) -> Option<(u32, u32)> {
        self.inner
            .pending_query()
            .map(|q| (q.current.0, q.proposed.0))
    }

    /// Answers the pending query with `"current"` or `"new"`.
    fn step(&mut self, py: Python<'_>, choice: &str) -> PyResult<Py<PyAny>> {
        let f = feedback(choice)?;
        let out = self.inner.step(f).map_err(err)?;
        to_py(py, &out)
    }

    #[getter]
    fn status(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.status())
    }

    #[getter]
    fn iteration(&self) -> usize {
        self.inner.iteration()
    }

    #[getter]
    fn current(&self) -> u32 {
        self.inner.current_region().0
    }

    /// Reported belief over regions.
    fn belief(&self) -> Vec<f64> {
        self.inner.belief()
    }

    /// Bayesian posterior over regions, whatever the reported belief.
    fn posterior(&self) -> Vec<f64> {
        self.inner.posterior().probabilities().to_vec()
    }

    /// `(region id, representative weight)` of the top-belief region.
    fn best(&self) -> PyResult<(u32, Vec<f64>)> {
        let (r, w) = self.inner.best().map_err(err)?;
        Ok((r.0, w.0))
    }

    /// Observation log.
    fn log(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner.log())
    }
}

#[pyfunction]
fn preset_names() -> Vec<&'static str> {
    core_preset_names()
}

/// Scenario document of a bundled layout, as JSON text.
#[pyfunction]
fn preset_document(name: &str) -> PyResult<String> {
    Ok(preset(name).map_err(err)?.to_json_string())
}

/// Runs an experiment batch and returns the CSV text (without header line).
#[pyfunction]
#[pyo3(signature = (config, jobs=None))]
fn run_batch(py: Python<'_>, config: &Bound<'_, PyAny>, jobs: Option<usize>) -> PyResult<String> {
    let config: ExperimentConfig = from_py(config)?;
    config.validate().map_err(err)?;
    let rows = py.detach(|| core_run_batch(config, jobs)).map_err(err)?;
    let mut out = Vec::new();
    write_batch_csv(&rows, None, &mut out).map_err(err)?;
    String::from_utf8(out).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Summarizes batch CSV text into a report dict.
#[pyfunction]
fn summarize(py: Python<'_>, csv: &str) -> PyResult<Py<PyAny>> {
    let rows = read_batch_csv(csv.as_bytes()).map_err(err)?;
    to_py(py, &core_summarize(&rows).map_err(err)?)
}

#[pymodule]
fn pathpref(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_class::<Session>()?;
    m.add_function(wrap_pyfunction!(preset_names, m)?)?;
    m.add_function(wrap_pyfunction!(preset_document, m)?)?;
    m.add_function(wrap_pyfunction!(run_batch, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    Ok(())
}
