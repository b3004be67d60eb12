//! Python bindings for `gepnet`.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use gepnet::config::parse_config;
use gepnet::data;
use gepnet::estimators::{self, kappa as kappa_fn};
use gepnet::model::{Activation, ActivationKind, GaussEquivParams, ModelSpec, Readout, ReadoutFn};
use gepnet::posterior::{ChainConfig, Sampler};
use gepnet::rng::substream;
use gepnet::runner;
use gepnet::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Argument(_) | Error::Config(_) | Error::Parse(_) | Error::AssumptionViolation | Error::Dimension(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn readout_fn(name: &str) -> PyResult<ReadoutFn> {
    match name {
        "zero" => Ok(ReadoutFn::Zero),
        "tanh" => Ok(ReadoutFn::Tanh),
        "identity" => Ok(ReadoutFn::Identity),
        other => Err(PyValueError::new_err(format!("unknown readout '{other}' (zero, tanh, identity)"))),
    }
}

fn sampler(method: &str, m: usize) -> PyResult<Sampler> {
    match method {
        "projected" => Ok(Sampler::Projected { m }),
        "importance" => Ok(Sampler::Importance { m, per_replica: 400 }),
        "mala" => Ok(Sampler::Mala(ChainConfig { n_steps: m.max(2), n_burn: m / 4, ..ChainConfig::default() })),
        other => Err(PyValueError::new_err(format!("unknown sampler '{other}' (projected, importance, mala)"))),
    }
}

/// A teacher-student problem: activation, readout, noise level and sizes.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: ModelSpec,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (d, p, n, activation="tanh", readout="tanh", delta=0.5, atoms=None, probs=None, allow_unbounded=false))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        d: usize,
        p: usize,
        n: usize,
        activation: &str,
        readout: &str,
        delta: f64,
        atoms: Option<Vec<f64>>,
        probs: Option<Vec<f64>>,
        allow_unbounded: bool,
    ) -> PyResult<Self> {
        let kind: ActivationKind = activation.parse().map_err(to_py)?;
        let atoms = atoms.unwrap_or_else(|| vec![1.0]);
        let probs = probs.unwrap_or_else(|| vec![1.0; atoms.len()]);
        let r = Readout::mixture(readout_fn(readout)?, atoms, probs).map_err(to_py)?;
        let inner = if allow_unbounded {
            ModelSpec::allow_unbounded_readout(kind, r, delta, d, p, n)
        } else {
            ModelSpec::new(kind, r, delta, d, p, n)
        }
        .map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }
    #[getter]
    fn p(&self) -> usize {
        self.inner.p
    }
    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }
    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta()
    }
    #[getter]
    fn rho(&self) -> f64 {
        self.inner.params.rho
    }
    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.params.epsilon
    }
    #[getter]
    fn kappa(&self) -> f64 {
        kappa_fn(self.inner.d, self.inner.p, self.inner.n)
    }

    fn with_dims(&self, d: usize, p: usize, n: usize) -> Self {
        Self { inner: self.inner.with_dims(d, p, n) }
    }

    fn __repr__(&self) -> String {
        let m = &self.inner;
        format!(
            "Model(d={}, p={}, n={}, activation='{}', readout='{}', delta={})",
            m.d,
            m.p,
            m.n,
            m.activation.kind,
            m.readout().describe(),
            m.delta()
        )
    }
}

/// A Monte Carlo estimate with its standard error and budget.
#[pyclass(name = "Estimate", frozen, get_all)]
struct PyEstimate {
    value: f64,
    stderr: f64,
    n_outer: usize,
    n_inner: usize,
    kappa: f64,
    seed: u64,
    d: usize,
    p: usize,
    n: usize,
    t: f64,
}

impl From<estimators::Estimate> for PyEstimate {
    fn from(e: estimators::Estimate) -> Self {
        Self {
            value: e.value,
            stderr: e.stderr,
            n_outer: e.n_outer,
            n_inner: e.n_inner,
            kappa: e.kappa,
            seed: e.seed,
            d: e.coords.d,
            p: e.coords.p,
            n: e.coords.n,
            t: e.coords.t,
        }
    }
}

#[pymethods]
impl PyEstimate {
    fn __repr__(&self) -> String {
        format!("Estimate(value={:.6e}, stderr={:.3e}, n_outer={})", self.value, self.stderr, self.n_outer)
    }
}

/// One sampled dataset.
#[pyclass(name = "Dataset", frozen)]
struct PyDataset {
    inner: data::Dataset,
}

#[pymethods]
impl PyDataset {
    #[getter]
    fn t(&self) -> f64 {
        self.inner.t
    }
    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        (0..self.inner.x.rows).map(|i| self.inner.x.row(i).to_vec()).collect()
    }
    #[getter]
    fn y(&self) -> Vec<f64> {
        self.inner.y.clone()
    }
    #[getter]
    fn s(&self) -> Vec<f64> {
        self.inner.s.clone()
    }

    /// The same latent draws at another interpolation time.
    fn at_time(&self, model: &PyModel, t: f64) -> PyResult<Self> {
        Ok(Self { inner: self.inner.at_time(&model.inner, t).map_err(to_py)? })
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __len__(&self) -> usize {
        self.inner.n
    }
}

/// `(rho, epsilon)` of an activation.
#[pyfunction]
fn constants(activation: &str) -> PyResult<(f64, f64)> {
    let kind: ActivationKind = activation.parse().map_err(to_py)?;
    let p = GaussEquivParams::for_activation(&Activation::new(kind)).map_err(to_py)?;
    Ok((p.rho, p.epsilon))
}

#[pyfunction]
fn kappa(d: usize, p: usize, n: usize) -> f64 {
    kappa_fn(d, p, n)
}

#[pyfunction]
#[pyo3(signature = (model, t=0.0, seed=0))]
fn gen_dataset(model: &PyModel, t: f64, seed: u64) -> PyResult<PyDataset> {
    let ds = data::gen_dataset(&model.inner, t, &mut substream(seed, &[])).map_err(to_py)?;
    Ok(PyDataset { inner: ds.with_seed(seed) })
}

#[pyfunction]
#[pyo3(signature = (model, t=0.0, n_outer=100, m=20000, seed=0, method="projected"))]
fn free_entropy(py: Python<'_>, model: &PyModel, t: f64, n_outer: usize, m: usize, seed: u64, method: &str) -> PyResult<PyEstimate> {
    let s = sampler(method, m)?;
    let e = py.detach(|| estimators::free_entropy(&model.inner, t, n_outer, &s, &mut substream(seed, &[])));
    Ok(e.map_err(to_py)?.into())
}

#[pyfunction]
#[pyo3(signature = (model, t=0.0, n_outer=100, m=20000, m_single=100000, seed=0, method="projected"))]
#[allow(clippy::too_many_arguments)]
fn mutual_information(
    py: Python<'_>,
    model: &PyModel,
    t: f64,
    n_outer: usize,
    m: usize,
    m_single: usize,
    seed: u64,
    method: &str,
) -> PyResult<PyEstimate> {
    let s = sampler(method, m)?;
    let e = py.detach(|| estimators::mutual_information(&model.inner, t, n_outer, &s, m_single, &mut substream(seed, &[])));
    Ok(e.map_err(to_py)?.into())
}

#[pyfunction]
#[pyo3(signature = (model, t=0.0, n_outer=100, n_test=20, m=20000, seed=0, method="projected"))]
#[allow(clippy::too_many_arguments)]
fn gen_error(
    py: Python<'_>,
    model: &PyModel,
    t: f64,
    n_outer: usize,
    n_test: usize,
    m: usize,
    seed: u64,
    method: &str,
) -> PyResult<PyEstimate> {
    let s = sampler(method, m)?;
    let e = py.detach(|| estimators::gen_error(&model.inner, t, n_outer, n_test, &s, &mut substream(seed, &[])));
    Ok(e.map_err(to_py)?.into())
}

/// Checks a configuration; returns its normalized text or raises with every error.
#[pyfunction]
fn normalize_config(text: &str) -> PyResult<String> {
    Ok(parse_config(text).map_err(to_py)?.serialize())
}

/// Runs a configuration; returns `(passed, manifest text)`.
#[pyfunction]
#[pyo3(signature = (text, workers=1))]
fn run_config(py: Python<'_>, text: &str, workers: usize) -> PyResult<(bool, String)> {
    let cfg = parse_config(text).map_err(to_py)?;
    let m = py.detach(|| runner::run(&cfg, workers)).map_err(to_py)?;
    Ok((m.passed(), m.to_text()))
}

#[pyfunction]
fn version() -> &'static str {
    runner::VERSION
}

#[pymodule]
pub fn gepnet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyEstimate>()?;
    m.add_class::<PyDataset>()?;
    m.add_function(wrap_pyfunction!(constants, m)?)?;
    m.add_function(wrap_pyfunction!(kappa, m)?)?;
    m.add_function(wrap_pyfunction!(gen_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(free_entropy, m)?)?;
    m.add_function(wrap_pyfunction!(mutual_information, m)?)?;
    m.add_function(wrap_pyfunction!(gen_error, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(version, m)?)?;
    Ok(())
}
