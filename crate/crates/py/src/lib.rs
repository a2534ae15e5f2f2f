//! Python bindings (`pamlab_py`).

use std::path::PathBuf;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use pamlab::chaos::{self, BoundConstants, InitialCondition, McParams};
use pamlab::holder::{self, IncrementMode, Lag};
use pamlab::noise::{self, GridSpec, NoiseSpec, Regime, SpaceMode, TestFunction, TimeMode};
use pamlab::solver::{self, EnsembleConfig, FieldEnsemble};
use pamlab::specfn::{self, SimplexParams};
use pamlab::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Config(_) | Error::Singular(_) | Error::Degenerate(_) | Error::UnsupportedRegime(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "NoiseSpec", frozen, from_py_object)]
#[derive(Clone)]
struct PyNoiseSpec {
    inner: NoiseSpec,
}

#[pymethods]
impl PyNoiseSpec {
    /// Regime (i) with `alphas`, or regime (ii) with `alpha`; white in time
    /// unless `alpha0` is given.
    #[new]
    #[pyo3(signature = (alphas=None, alpha=None, alpha0=None, amplitude=1.0))]
    fn new(alphas: Option<Vec<f64>>, alpha: Option<f64>, alpha0: Option<f64>, amplitude: f64) -> PyResult<Self> {
        let space = match (alphas, alpha) {
            (Some(a), None) => SpaceMode::RegimeI { alphas: a },
            (None, Some(a)) => SpaceMode::RegimeII { alpha: a },
            _ => return Err(PyValueError::new_err("give exactly one of alphas (regime i) or alpha (regime ii)")),
        };
        let time = alpha0.map_or(TimeMode::White, |a| TimeMode::Riesz { alpha0: a });
        Ok(Self { inner: NoiseSpec::new(time, space, amplitude).map_err(py_err)? })
    }

    #[staticmethod]
    fn space_time_white(d: usize) -> PyResult<Self> {
        Ok(Self { inner: NoiseSpec::space_time_white(d).map_err(py_err)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: serde_json::from_str(text).map_err(json_err)? })
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("spec serializes")
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn alpha0(&self) -> f64 {
        self.inner.alpha0()
    }

    #[getter]
    fn regime(&self) -> &'static str {
        match self.inner.regime() {
            Regime::I => "i",
            Regime::II => "ii",
        }
    }

    #[getter]
    fn amplitude(&self) -> f64 {
        self.inner.amplitude()
    }

    /// `α` of the bounds: `d + Σα_i` in regime (i), `α` in regime (ii).
    #[getter]
    fn bound_alpha(&self) -> f64 {
        self.inner.exponents().alpha
    }

    fn check_hypotheses(&self) -> PyResult<()> {
        self.inner.check_hypotheses().map_err(py_err)
    }

    fn spectral_density(&self, xi: Vec<f64>) -> f64 {
        self.inner.spectral_density(&xi)
    }

    fn __repr__(&self) -> String {
        format!("NoiseSpec({})", self.to_json())
    }
}

#[pyclass(name = "GridSpec", frozen, from_py_object)]
#[derive(Clone)]
struct PyGridSpec {
    inner: GridSpec,
}

#[pymethods]
impl PyGridSpec {
    #[new]
    fn new(d: usize, length: f64, points: usize, dt: f64, horizon: f64) -> PyResult<Self> {
        Ok(Self { inner: GridSpec::new(d, length, points, dt, horizon).map_err(py_err)? })
    }

    #[getter]
    fn dx(&self) -> f64 {
        self.inner.dx()
    }

    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    #[getter]
    fn points(&self) -> usize {
        self.inner.points
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    fn __repr__(&self) -> String {
        let g = &self.inner;
        format!("GridSpec(d={}, length={}, points={}, dt={}, horizon={})", g.d, g.length, g.points, g.dt, g.horizon)
    }
}

#[pyclass(name = "InitialCondition", frozen, from_py_object)]
#[derive(Clone)]
struct PyInitialCondition {
    inner: InitialCondition,
}

#[pymethods]
impl PyInitialCondition {
    #[staticmethod]
    fn constant_one() -> Self {
        Self { inner: InitialCondition::ConstantOne }
    }

    #[staticmethod]
    fn gaussian_bump(width: f64) -> PyResult<Self> {
        let inner = InitialCondition::GaussianBump { width };
        inner.validate().map_err(py_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn point_mass() -> Self {
        Self { inner: InitialCondition::PointMass }
    }

    fn __repr__(&self) -> String {
        format!("InitialCondition({})", serde_json::to_string(&self.inner).expect("serializes"))
    }
}

/// Stored or simulated solution ensemble.
#[pyclass(name = "Ensemble", frozen)]
struct PyEnsemble {
    inner: FieldEnsemble,
}

#[pymethods]
impl PyEnsemble {
    #[getter]
    fn replicas(&self) -> usize {
        self.inner.replicas
    }

    #[getter]
    fn snapshot_times(&self) -> Vec<f64> {
        self.inner.snapshot_times.clone()
    }

    fn field(&self, replica: usize, snapshot: usize) -> PyResult<Vec<f64>> {
        if replica >= self.inner.replicas || snapshot >= self.inner.snapshots() {
            return Err(PyValueError::new_err("replica or snapshot index out of range"));
        }
        Ok(self.inner.field(replica, snapshot).to_vec())
    }

    /// Space-averaged `E|u|^p` at a snapshot, `(mean, stderr)`.
    fn spatial_moment(&self, snapshot: usize, p: f64) -> PyResult<(f64, f64)> {
        if snapshot >= self.inner.snapshots() {
            return Err(PyValueError::new_err("snapshot index out of range"));
        }
        solver::spatial_moment(&self.inner, snapshot, p).map_err(py_err)
    }

    /// `(max |z|, mean z, max |deviation|)` of the ensemble mean against the
    /// heat flow of `u₀`.
    fn mean_check(&self) -> PyResult<(f64, f64, f64)> {
        let r = solver::mean_check(&self.inner).map_err(py_err)?;
        Ok((r.max_abs_z, r.mean_z, r.max_abs_dev))
    }

    fn save(&self, dir: PathBuf, stem: &str) -> PyResult<()> {
        solver::write_ensemble(&dir, stem, &self.inner).map_err(py_err)
    }

    #[staticmethod]
    fn load(dir: PathBuf, stem: &str) -> PyResult<Self> {
        Ok(Self { inner: solver::read_ensemble(&dir, stem).map_err(py_err)? })
    }
}

#[pyfunction]
fn heat_kernel(t: f64, x: Vec<f64>) -> PyResult<f64> {
    specfn::heat_kernel(t, &x).map_err(py_err)
}

#[pyfunction]
fn simplex_integral_exact(t: f64, alphas: Vec<f64>) -> PyResult<f64> {
    Ok(specfn::simplex_integral_exact(&SimplexParams::new(t, alphas).map_err(py_err)?))
}

/// `(estimate, stderr)`.
#[pyfunction]
fn simplex_integral_mc(py: Python<'_>, t: f64, alphas: Vec<f64>, samples: u64, seed: u64) -> PyResult<(f64, f64)> {
    let p = SimplexParams::new(t, alphas).map_err(py_err)?;
    py.detach(|| specfn::simplex_integral_mc(&p, samples, seed)).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (a, z, tol=1e-15))]
fn mittag_leffler_sum(a: f64, z: f64, tol: f64) -> PyResult<f64> {
    specfn::mittag_leffler_sum(a, z, tol).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (a, z, rel_tol=1e-15))]
fn ln_mittag_leffler_sum(a: f64, z: f64, rel_tol: f64) -> PyResult<f64> {
    specfn::ln_mittag_leffler_sum(a, z, rel_tol).map_err(py_err)
}

#[pyfunction]
fn smoothing_integral(s: f64, beta: f64, zeta: Vec<f64>, spec: &PyNoiseSpec) -> PyResult<f64> {
    specfn::smoothing_integral(s, beta, &zeta, &spec.inner).map_err(py_err)
}

#[pyfunction]
fn analytic_test_variance(spec: &PyNoiseSpec, horizon: f64, width: f64) -> PyResult<f64> {
    noise::analytic_test_variance(&spec.inner, horizon, width).map_err(py_err)
}

/// Sample variance of the noise paired with a Gaussian bump over the whole
/// horizon, `(variance, stderr)`.
#[pyfunction]
fn sampled_probe_variance(
    py: Python<'_>,
    spec: &PyNoiseSpec,
    grid: &PyGridSpec,
    width: f64,
    replicas: usize,
    seed: u64,
) -> PyResult<(f64, f64)> {
    let g = &grid.inner;
    let center = vec![g.length / 2.0; g.d];
    let probe = noise::Probe { t_start: 0.0, t_end: g.horizon, space: TestFunction::GaussianBump { width, center } };
    py.detach(|| {
        let v = noise::probe_ensemble(&spec.inner, g, seed, replicas, std::slice::from_ref(&probe))?;
        pamlab::stats::jackknife_covariance(&v[0], &v[0])
    })
    .map_err(py_err)
}

/// Monte Carlo chaos variance as a dict with `variance`, `stderr`, `bound`.
#[pyfunction]
#[pyo3(signature = (n, t, x, spec, u0=None, samples=100_000, seed=0))]
#[allow(clippy::too_many_arguments)]
fn chaos_variance<'py>(
    py: Python<'py>,
    n: usize,
    t: f64,
    x: Vec<f64>,
    spec: &PyNoiseSpec,
    u0: Option<PyInitialCondition>,
    samples: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let u0 = u0.map_or(InitialCondition::ConstantOne, |u| u.inner);
    let e = py
        .detach(|| chaos::chaos_variance(n, t, &x, &spec.inner, &u0, &McParams { samples, seed }))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("n", e.n)?;
    d.set_item("t", e.t)?;
    d.set_item("variance", e.variance)?;
    d.set_item("stderr", e.stderr)?;
    d.set_item("bound", e.bound_value)?;
    d.set_item("samples", e.samples)?;
    Ok(d)
}

#[pyfunction]
fn white_chaos_variance(n: usize, t: f64) -> f64 {
    chaos::white_chaos_variance(n, t)
}

#[pyfunction]
fn white_second_moment(t: f64) -> f64 {
    chaos::white_second_moment(t)
}

#[pyfunction]
#[pyo3(signature = (n, t, spec, c=1.0, big_c=1.0, alpha2=0.0))]
fn chaos_variance_bound(n: usize, t: f64, spec: &PyNoiseSpec, c: f64, big_c: f64, alpha2: f64) -> PyResult<f64> {
    chaos::chaos_variance_bound(n, t, &spec.inner, &BoundConstants { c, big_c, alpha2 }).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (p, t, spec, c=1.0, big_c=1.0, alpha2=0.0))]
fn moment_bound(p: f64, t: f64, spec: &PyNoiseSpec, c: f64, big_c: f64, alpha2: f64) -> PyResult<f64> {
    chaos::moment_bound(p, t, &spec.inner, &BoundConstants { c, big_c, alpha2 }).map_err(py_err)
}

/// `B` of the admissible region `2ᾱ₀ + ᾱ < B`.
#[pyfunction]
fn predicted_region(spec: &PyNoiseSpec) -> f64 {
    holder::predicted_region(&spec.inner).b
}

#[pyfunction]
#[pyo3(signature = (spec, grid, snapshot_times, replicas, master_seed, u0=None))]
fn run_ensemble(
    py: Python<'_>,
    spec: &PyNoiseSpec,
    grid: &PyGridSpec,
    snapshot_times: Vec<f64>,
    replicas: usize,
    master_seed: u64,
    u0: Option<PyInitialCondition>,
) -> PyResult<PyEnsemble> {
    let cfg = EnsembleConfig {
        spec: spec.inner.clone(),
        grid: grid.inner.clone(),
        u0: u0.map_or(InitialCondition::ConstantOne, |u| u.inner),
        snapshot_times,
        replicas,
        master_seed,
    };
    let inner = py.detach(|| solver::run_ensemble(&cfg)).map_err(py_err)?;
    Ok(PyEnsemble { inner })
}

fn parse_mode(mode: &str) -> PyResult<IncrementMode> {
    match mode {
        "rectangular" => Ok(IncrementMode::Rectangular),
        "time_marginal" => Ok(IncrementMode::TimeMarginal),
        "space_marginal" => Ok(IncrementMode::SpaceMarginal),
        other => Err(PyValueError::new_err(format!(
            "unknown mode {other:?}; use rectangular, time_marginal or space_marginal"
        ))),
    }
}

/// Rows `(dt_lag, dx_lag, estimate, stderr)`.
#[pyfunction]
#[pyo3(signature = (ensemble, lags, mode, p=2))]
fn increment_moments(
    ensemble: &PyEnsemble,
    lags: Vec<(f64, f64)>,
    mode: &str,
    p: u32,
) -> PyResult<Vec<(f64, f64, f64, f64)>> {
    let lags: Vec<Lag> = lags.into_iter().map(|(dt, dx)| Lag { dt, dx }).collect();
    let t = holder::increment_moments(&ensemble.inner, &lags, parse_mode(mode)?, p).map_err(py_err)?;
    Ok(t.rows.iter().map(|r| (r.dt_lag, r.dx_lag, r.estimate, r.stderr)).collect())
}

/// Exponent fit; unused exponents come back as NaN.
#[pyfunction]
#[pyo3(signature = (ensemble, lags, mode, p=2))]
fn fit_exponents<'py>(
    py: Python<'py>,
    ensemble: &PyEnsemble,
    lags: Vec<(f64, f64)>,
    mode: &str,
    p: u32,
) -> PyResult<Bound<'py, PyDict>> {
    let lags: Vec<Lag> = lags.into_iter().map(|(dt, dx)| Lag { dt, dx }).collect();
    let t = holder::increment_moments(&ensemble.inner, &lags, parse_mode(mode)?, p).map_err(py_err)?;
    let f = holder::fit_exponents(&t).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("alpha0", f.alpha0_hat)?;
    d.set_item("alpha", f.alpha_hat)?;
    d.set_item("ci", f.ci)?;
    d.set_item("r2", f.r2)?;
    d.set_item("reported", f.reported)?;
    Ok(d)
}

#[pymodule]
pub fn pamlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNoiseSpec>()?;
    m.add_class::<PyGridSpec>()?;
    m.add_class::<PyInitialCondition>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_function(wrap_pyfunction!(heat_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(simplex_integral_exact, m)?)?;
    m.add_function(wrap_pyfunction!(simplex_integral_mc, m)?)?;
    m.add_function(wrap_pyfunction!(mittag_leffler_sum, m)?)?;
    m.add_function(wrap_pyfunction!(ln_mittag_leffler_sum, m)?)?;
    m.add_function(wrap_pyfunction!(smoothing_integral, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_test_variance, m)?)?;
    m.add_function(wrap_pyfunction!(sampled_probe_variance, m)?)?;
    m.add_function(wrap_pyfunction!(chaos_variance, m)?)?;
    m.add_function(wrap_pyfunction!(white_chaos_variance, m)?)?;
    m.add_function(wrap_pyfunction!(white_second_moment, m)?)?;
    m.add_function(wrap_pyfunction!(chaos_variance_bound, m)?)?;
    m.add_function(wrap_pyfunction!(moment_bound, m)?)?;
    m.add_function(wrap_pyfunction!(predicted_region, m)?)?;
    m.add_function(wrap_pyfunction!(run_ensemble, m)?)?;
    m.add_function(wrap_pyfunction!(increment_moments, m)?)?;
    m.add_function(wrap_pyfunction!(fit_exponents, m)?)?;
    Ok(())
}
