//! Python bindings for the emergent dialog library.

use std::path::PathBuf;

use edl_core::checkpoint::Checkpoint;
use edl_core::config::{ExperimentConfig, Mode};
use edl_core::dialog::{display_token, EpisodeRecord, FinalGuess, Side};
use edl_core::eval::{self, DialogAgents};
use edl_core::protocol::ScriptedProtocol;
use edl_core::run::{self, LoadedAgents};
use edl_core::tabular::TabularTrainer;
use edl_core::train::NeuralTrainer;
use edl_core::world::{self, Instance, PredictionPair, SynthImage};
use edl_core::EdlError;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

fn err(e: EdlError) -> PyErr {
    match e {
        EdlError::Config { .. } | EdlError::Contract(_) => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn parse_mode(mode: &str) -> PyResult<Mode> {
    mode.parse().map_err(|_| PyValueError::new_err(format!("unknown mode `{mode}`")))
}

fn to_toml_value(obj: &Bound<'_, PyAny>) -> PyResult<toml::Value> {
    if let Ok(b) = obj.extract::<bool>() {
        Ok(toml::Value::Boolean(b))
    } else if let Ok(i) = obj.extract::<i64>() {
        Ok(toml::Value::Integer(i))
    } else if let Ok(f) = obj.extract::<f64>() {
        Ok(toml::Value::Float(f))
    } else if let Ok(s) = obj.extract::<String>() {
        Ok(toml::Value::String(s))
    } else {
        Err(PyValueError::new_err(format!("unsupported config value {obj}")))
    }
}

/// Experiment configuration. Keyword arguments override the mode defaults.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (mode = "tabular", **overrides))]
    fn new(mode: &str, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let base = ExperimentConfig::default_for(parse_mode(mode)?);
        let mut table: toml::Table = toml::from_str(&base.to_toml()).expect("defaults parse");
        if let Some(kw) = overrides {
            for (k, v) in kw.iter() {
                table.insert(k.extract::<String>()?, to_toml_value(&v)?);
            }
        }
        let inner = ExperimentConfig::from_toml(&toml::to_string(&table).expect("table serializes")).map_err(err)?;
        inner.validate().map_err(err)?;
        Ok(PyConfig { inner })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let inner = ExperimentConfig::from_toml(text).map_err(err)?;
        inner.validate().map_err(err)?;
        Ok(PyConfig { inner })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    #[getter]
    fn mode(&self) -> String {
        format!("{:?}", self.inner.mode).to_lowercase()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn rounds(&self) -> usize {
        self.inner.rounds.unwrap_or(2)
    }

    fn __repr__(&self) -> String {
        format!("Config(mode={}, seed={})", self.mode(), self.inner.seed)
    }
}

fn instance_dict<'py>(py: Python<'py>, inst: &Instance) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("index", inst.index())?;
    d.set_item("image", inst.image.id())?;
    d.set_item("image_desc", inst.image.describe())?;
    d.set_item("task", inst.task.id())?;
    d.set_item("task_desc", inst.task.describe())?;
    Ok(d)
}

fn record_dict<'py>(py: Python<'py>, r: &EpisodeRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("instance", r.instance.index())?;
    let rounds: Vec<(Vec<String>, Vec<String>)> = r
        .rounds
        .iter()
        .map(|round| {
            (
                round.question.iter().map(|&t| display_token(Side::Q, t)).collect(),
                round.answer.iter().map(|&t| display_token(Side::A, t)).collect(),
            )
        })
        .collect();
    d.set_item("rounds", rounds)?;
    match r.final_guess {
        FinalGuess::Pair(p) => d.set_item("guess", PredictionPair::from_index(p).map_err(err)?.describe())?,
        FinalGuess::Image(i) => d.set_item("guess", SynthImage::from_id(i).map_err(err)?.describe())?,
    }
    d.set_item("correct", r.is_correct())?;
    Ok(d)
}

fn instance_at(index: usize) -> PyResult<Instance> {
    Instance::from_index(index).map_err(err)
}

/// Trained or loaded agents; either paradigm.
#[pyclass(name = "Checkpoint", from_py_object)]
#[derive(Clone)]
struct PyCheckpoint {
    inner: Checkpoint,
}

#[pymethods]
impl PyCheckpoint {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyCheckpoint { inner: Checkpoint::load(&path).map_err(err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(err)
    }

    #[getter]
    fn mode(&self) -> String {
        format!("{:?}", self.inner.mode()).to_lowercase()
    }

    fn block_names(&self) -> Vec<String> {
        self.inner.header.blocks.iter().map(|b| b.name.clone()).collect()
    }

    fn block(&self, name: &str) -> PyResult<(Vec<usize>, Vec<f64>)> {
        let (meta, values) = self.inner.block(name).map_err(err)?;
        Ok((meta.shape.clone(), values.to_vec()))
    }

    /// Greedy evaluation over all instances.
    fn evaluate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let (report, protocol) = run::evaluate(&self.inner).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("accuracy", report.accuracy)?;
        d.set_item("mean_return", report.mean_return)?;
        d.set_item("factorized", protocol.factorized)?;
        d.set_item("report", report.to_text())?;
        d.set_item("protocol", protocol.to_text())?;
        Ok(d)
    }

    /// One greedy dialog on the given instance.
    fn play<'py>(&self, py: Python<'py>, instance: usize) -> PyResult<Bound<'py, PyDict>> {
        let agents = LoadedAgents::from_checkpoint(&self.inner).map_err(err)?;
        record_dict(py, &agents.play(&instance_at(instance)?, 0))
    }
}

enum Inner {
    Tabular(Box<TabularTrainer>),
    Neural(Box<NeuralTrainer>),
}

/// Step-by-step training. `step` runs one iteration (tabular) or one
/// epoch (neural).
#[pyclass(name = "Trainer", unsendable)]
struct PyTrainer {
    config: ExperimentConfig,
    inner: Inner,
}

#[pymethods]
impl PyTrainer {
    #[new]
    fn new(config: &PyConfig) -> PyResult<Self> {
        let cfg = config.inner.clone();
        let inner = match cfg.mode {
            Mode::Tabular => Inner::Tabular(Box::new(
                TabularTrainer::new(cfg.tabular_shape(), cfg.init_value, cfg.schedule(), cfg.eps_greedy())
                    .map_err(err)?,
            )),
            Mode::Neural => Inner::Neural(Box::new(NeuralTrainer::new(&cfg).map_err(err)?)),
        };
        Ok(PyTrainer { config: cfg, inner })
    }

    fn is_done(&self) -> bool {
        match &self.inner {
            Inner::Tabular(t) => t.is_done(),
            Inner::Neural(t) => t.is_done(),
        }
    }

    /// Returns the greedy accuracy after the step.
    fn step(&mut self, py: Python<'_>) -> PyResult<f64> {
        py.detach(|| match &mut self.inner {
            Inner::Tabular(t) => t.run_iteration().map(|r| (r + 1.0) / 2.0),
            Inner::Neural(t) => t.run_epoch().map(|m| m.accuracy),
        })
        .map_err(err)
    }

    fn checkpoint(&self) -> PyCheckpoint {
        let inner = match &self.inner {
            Inner::Tabular(t) => Checkpoint::from_tabular(&self.config, t),
            Inner::Neural(t) => Checkpoint::from_neural(t),
        };
        PyCheckpoint { inner }
    }
}

/// Full run writing logs and checkpoints under the config's output directory.
#[pyfunction]
#[pyo3(signature = (config, out_dir = None, resume = None))]
fn train<'py>(
    py: Python<'py>,
    config: &PyConfig,
    out_dir: Option<PathBuf>,
    resume: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = config.inner.clone();
    if let Some(dir) = out_dir {
        cfg.out_dir = dir;
    }
    let summary = py.detach(|| run::train(&cfg, resume.as_deref())).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("steps", summary.steps)?;
    d.set_item("accuracy", summary.accuracy)?;
    d.set_item("out_dir", summary.out_dir)?;
    Ok(d)
}

#[pyfunction]
fn images<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
    let rows = world::enumerate_images()
        .into_iter()
        .map(|im| (im.id(), im.describe()))
        .collect::<Vec<_>>();
    PyList::new(py, rows)
}

#[pyfunction]
fn instance<'py>(py: Python<'py>, index: usize) -> PyResult<Bound<'py, PyDict>> {
    instance_dict(py, &instance_at(index)?)
}

#[pyfunction]
fn num_instances() -> usize {
    world::enumerate_instances().len()
}

#[pyfunction]
fn target_vector(image: usize) -> PyResult<Vec<f64>> {
    Ok(world::target_vector(SynthImage::from_id(image).map_err(err)?).0)
}

#[pyfunction]
fn nearest_image(prediction: Vec<f64>) -> usize {
    world::nearest_image(&prediction).id()
}

#[pyfunction]
fn percentile_rank(prediction: Vec<f64>, image: usize) -> PyResult<f64> {
    let im = SynthImage::from_id(image).map_err(err)?;
    eval::percentile_rank(&prediction, im, &world::enumerate_images()).map_err(err)
}

#[pyfunction]
fn mutual_information(joint: Vec<Vec<u64>>) -> f64 {
    eval::mutual_information(&joint)
}

/// Dialog played by the hand-written protocol with full coverage.
#[pyfunction]
#[pyo3(signature = (instance, rounds = 2))]
fn oracle_dialog<'py>(py: Python<'py>, instance: usize, rounds: usize) -> PyResult<Bound<'py, PyDict>> {
    let agents = eval::ScriptedAgents::new(ScriptedProtocol::oracle(), rounds);
    record_dict(py, &agents.play(&instance_at(instance)?, 0))
}

#[pymodule]
fn edl(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyCheckpoint>()?;
    m.add_class::<PyTrainer>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(images, m)?)?;
    m.add_function(wrap_pyfunction!(instance, m)?)?;
    m.add_function(wrap_pyfunction!(num_instances, m)?)?;
    m.add_function(wrap_pyfunction!(target_vector, m)?)?;
    m.add_function(wrap_pyfunction!(nearest_image, m)?)?;
    m.add_function(wrap_pyfunction!(percentile_rank, m)?)?;
    m.add_function(wrap_pyfunction!(mutual_information, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_dialog, m)?)?;
    Ok(())
}
