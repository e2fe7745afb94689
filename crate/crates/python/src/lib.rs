//! Python bindings for the `gols` crate.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gols::analysis::uniform_grid;
use gols::data::Dataset;
use gols::harness::{run_training, ExperimentConfig, ExperimentData, ReferencePoint};
use gols::linesearch::{fixed_step as rs_fixed_step, FixedRegime, LineFunction, LinePoint};
use gols::model::{hidden_units_heuristic, Sample};
use gols::{GolsiParams, MlpSpec, OptimizerKind, Vector};

create_exception!(gols, GolsError, PyException);

fn to_py(e: gols::Error) -> PyErr {
    GolsError::new_err(e.to_string())
}

/// Line restricted to a Python callable returning `F'(alpha)` or `(F, F')`.
struct PyLine<'py> {
    f: Bound<'py, PyAny>,
    norm: f64,
    evaluations: u64,
    error: Option<PyErr>,
}

impl LineFunction for PyLine<'_> {
    fn evaluate(&mut self, alpha: f64) -> gols::Result<LinePoint> {
        self.evaluations += 1;
        let out = self.f.call1((alpha,)).and_then(|r| {
            if let Ok((value, derivative)) = r.extract::<(f64, f64)>() {
                Ok(LinePoint { value, derivative })
            } else {
                r.extract::<f64>().map(|derivative| LinePoint {
                    value: f64::NAN,
                    derivative,
                })
            }
        });
        out.map_err(|e| {
            self.error = Some(e);
            gols::Error::InvalidArgument("python callback failed".into())
        })
    }

    fn direction_norm(&self) -> f64 {
        self.norm
    }

    fn evaluations(&self) -> u64 {
        self.evaluations
    }
}

/// Runs GOLS-I along a line given by `f(alpha)`.
///
/// `initial_derivative` is `F'(0)`; when omitted it is evaluated through `f`.
/// Returns a dict with `alpha`, `k`, `exit_reason`, `last_derivative` and the
/// probe `trace` as `(i, alpha, derivative, flag)` tuples.
#[pyfunction]
#[pyo3(signature = (f, direction_norm, alpha0 = 1e-8, initial_derivative = None, eta = 2.0, c2 = 0.9, alpha_min = 1e-8, alpha_max_cap = 1e7))]
#[allow(clippy::too_many_arguments)]
fn golsi<'py>(
    py: Python<'py>,
    f: Bound<'py, PyAny>,
    direction_norm: f64,
    alpha0: f64,
    initial_derivative: Option<f64>,
    eta: f64,
    c2: f64,
    alpha_min: f64,
    alpha_max_cap: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let params = GolsiParams {
        eta,
        c2,
        alpha_min,
        alpha_max_cap,
    };
    let mut line = PyLine {
        f,
        norm: direction_norm,
        evaluations: 0,
        error: None,
    };
    let result = gols::golsi(&mut line, alpha0, initial_derivative, &params);
    if let Some(e) = line.error.take() {
        return Err(e);
    }
    let r = result.map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("alpha", r.alpha)?;
    out.set_item("k", r.k)?;
    out.set_item("exit_reason", r.exit_reason.to_string())?;
    out.set_item("last_derivative", r.last_derivative)?;
    let trace: Vec<(usize, f64, f64, u8)> = r
        .trace
        .iter()
        .map(|p| (p.index, p.alpha, p.derivative, p.flag))
        .collect();
    out.set_item("trace", trace)?;
    Ok(out)
}

/// Hidden units per layer suggested for `m` samples, `d` inputs and `k` classes.
#[pyfunction]
#[pyo3(signature = (m, d, k, cr = 1.5))]
fn heuristic(m: usize, d: usize, k: usize, cr: f64) -> usize {
    hidden_units_heuristic(m, d, k, cr)
}

/// Fixed learning rate of a regime (`small`, `medium`, `large`) for an optimizer.
#[pyfunction]
fn fixed_step(regime: &str, optimizer: &str) -> PyResult<f64> {
    let regime: FixedRegime = regime.parse().map_err(to_py)?;
    let kind: OptimizerKind = optimizer.parse().map_err(to_py)?;
    rs_fixed_step(regime, kind).map_err(to_py)
}

/// Fully connected network.
#[pyclass(name = "Network", frozen)]
struct PyNetwork {
    spec: MlpSpec,
}

fn batch(features: Vec<Vec<f64>>, labels: Vec<usize>, classes: usize) -> PyResult<Vec<Sample>> {
    if features.len() != labels.len() {
        return Err(to_py(gols::Error::LengthMismatch {
            left: features.len(),
            right: labels.len(),
        }));
    }
    features
        .into_iter()
        .zip(labels)
        .map(|(f, c)| Sample::new(Vector::from(f), c, classes).map_err(to_py))
        .collect()
}

#[pymethods]
impl PyNetwork {
    #[new]
    #[pyo3(signature = (layer_sizes, activation = "sigmoid", loss = "mse"))]
    fn new(layer_sizes: Vec<usize>, activation: &str, loss: &str) -> PyResult<Self> {
        let spec = MlpSpec::new(
            layer_sizes,
            activation.parse().map_err(to_py)?,
            loss.parse().map_err(to_py)?,
        )
        .map_err(to_py)?;
        Ok(PyNetwork { spec })
    }

    #[getter]
    fn parameter_count(&self) -> usize {
        self.spec.parameter_count()
    }

    #[getter]
    fn layer_sizes(&self) -> Vec<usize> {
        self.spec.layer_sizes().to_vec()
    }

    /// Uniform random weights in `[lo, hi]`.
    #[pyo3(signature = (seed, lo = -0.1, hi = 0.1))]
    fn init(&self, seed: u64, lo: f64, hi: f64) -> PyResult<Vec<f64>> {
        let mut rng = gols::SeededRng::new(seed);
        gols::numeric::uniform_init(&mut rng, self.spec.parameter_count(), lo, hi)
            .map(Vector::into_inner)
            .map_err(to_py)
    }

    fn loss(&self, weights: Vec<f64>, features: Vec<Vec<f64>>, labels: Vec<usize>) -> PyResult<f64> {
        let samples = batch(features, labels, self.spec.outputs())?;
        self.spec
            .forward_loss(&Vector::from(weights), &samples)
            .map_err(to_py)
    }

    /// `(loss, gradient)` averaged over the samples.
    fn gradient(
        &self,
        weights: Vec<f64>,
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
    ) -> PyResult<(f64, Vec<f64>)> {
        let samples = batch(features, labels, self.spec.outputs())?;
        let eval = self
            .spec
            .backprop_gradient(&Vector::from(weights), &samples)
            .map_err(to_py)?;
        Ok((eval.loss, eval.gradient.into_inner()))
    }

    fn predict(&self, weights: Vec<f64>, features: Vec<f64>) -> PyResult<Vec<f64>> {
        self.spec
            .predict(&Vector::from(weights), &Vector::from(features))
            .map(Vector::into_inner)
            .map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Network({:?})", self.spec.layer_sizes())
    }
}

/// Dataset loaded from a manifest.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    data: ExperimentData,
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        ExperimentData::load(&path)
            .map(|data| PyDataset { data })
            .map_err(to_py)
    }

    #[getter]
    fn name(&self) -> String {
        self.data.dataset.name().to_string()
    }

    #[getter]
    fn inputs(&self) -> usize {
        self.data.dataset.inputs()
    }

    #[getter]
    fn classes(&self) -> usize {
        self.data.dataset.classes()
    }

    fn __len__(&self) -> usize {
        self.data.dataset.len()
    }

    /// `(features, labels)` as plain lists.
    fn arrays(&self) -> (Vec<Vec<f64>>, Vec<usize>) {
        let ds: &Dataset = &self.data.dataset;
        ds.samples()
            .iter()
            .map(|s| (s.features().as_slice().to_vec(), s.class()))
            .unzip()
    }
}

/// One training run. Keyword arguments use the CLI flag names with
/// underscores, e.g. `optimizer="adam", beta1=0.0, hidden_layers=4`.
#[pyfunction]
#[pyo3(signature = (dataset, seed = 0, **options))]
fn train<'py>(
    py: Python<'py>,
    dataset: &PyDataset,
    seed: u64,
    options: Option<&Bound<'py, PyDict>>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = ExperimentConfig {
        runs: 1,
        ..ExperimentConfig::default()
    };
    if let Some(opts) = options {
        for (key, value) in opts.iter() {
            let key: String = key.extract()?;
            cfg.apply(&key, &value.str()?.to_string()).map_err(to_py)?;
        }
    }
    let data = &dataset.data;
    let log = py.detach(|| run_training(&cfg, data, seed)).map_err(to_py)?;
    let out = PyDict::new(py);
    let column = |f: fn(&gols::optim::IterationRecord) -> f64| -> Vec<f64> { log.records.iter().map(f).collect() };
    out.set_item("alpha", column(|r| r.alpha))?;
    out.set_item("train_loss", column(|r| r.train_loss))?;
    out.set_item("val_loss", column(|r| r.val_loss))?;
    out.set_item("test_loss", column(|r| r.test_loss))?;
    out.set_item("direction_norm", column(|r| r.direction_norm))?;
    out.set_item("k", log.records.iter().map(|r| r.k).collect::<Vec<_>>())?;
    out.set_item("cum_evals", log.cumulative_k.clone())?;
    out.set_item("audited_evaluations", log.audited_evaluations)?;
    out.set_item("initial_train_loss", log.initial.train)?;
    out.set_item("mean_k", log.summary.mean_k)?;
    Ok(out)
}

/// Directional scans from a reference point file. Returns one dict per batch
/// size with SNN-GPP and local-minimum densities over the grid.
#[pyfunction]
#[pyo3(signature = (reference, batch_sizes = vec![10, 38, 76], runs = 500, seed = 0, grid_start = 0.0, grid_step = 0.002, grid_count = 101))]
#[allow(clippy::too_many_arguments)]
fn scan<'py>(
    py: Python<'py>,
    reference: PathBuf,
    batch_sizes: Vec<usize>,
    runs: usize,
    seed: u64,
    grid_start: f64,
    grid_step: f64,
    grid_count: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let studies = py
        .detach(|| {
            let point = ReferencePoint::load(&reference)?;
            let data = ExperimentData::load(&point.dataset)?;
            let cfg = ExperimentConfig {
                dataset: point.dataset.clone(),
                ..ExperimentConfig::default()
            };
            let grid = uniform_grid(grid_start, grid_step, grid_count);
            point.setup(&cfg, &data)?.study(&grid, &batch_sizes, runs, seed)
        })
        .map_err(to_py)?;
    studies
        .iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("batch_size", s.batch_size)?;
            d.set_item("mode", s.mode.to_string())?;
            d.set_item("alpha", s.snngpp.bin_centres.clone())?;
            d.set_item("snngpp_counts", s.snngpp.counts.clone())?;
            d.set_item("local_min_counts", s.local_min.counts.clone())?;
            d.set_item("snngpp_support_width", s.snngpp.support_width())?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
#[pyo3(name = "gols")]
fn gols_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("GolsError", m.py().get_type::<GolsError>())?;
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(golsi, m)?)?;
    m.add_function(wrap_pyfunction!(heuristic, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_step, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(scan, m)?)?;
    Ok(())
}
