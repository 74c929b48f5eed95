//! Python bindings: geometry, models, the exact oracle, update supports and
//! the Monte Carlo estimators.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use cutoff_lab_core::dynamics::{self, UpdateSequence};
use cutoff_lab_core::estimators::{self, XiCurve};
use cutoff_lab_core::lattice::{Region, SpinConfiguration, TorusGeometry};
use cutoff_lab_core::model::{Family, ModelSpec, RateRule};
use cutoff_lab_core::{oracle, support, Error};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Numerical(_) | Error::Io(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Torus", module = "cutoff_lab", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyTorus(TorusGeometry);

#[pymethods]
impl PyTorus {
    #[new]
    fn new(sides: Vec<usize>) -> PyResult<Self> {
        TorusGeometry::new(sides.len(), &sides).map(PyTorus).map_err(to_py)
    }

    #[getter]
    fn sides(&self) -> Vec<usize> {
        self.0.sides().to_vec()
    }

    #[getter]
    fn n_sites(&self) -> usize {
        self.0.n_sites()
    }

    fn neighbors(&self, site: usize) -> PyResult<Vec<usize>> {
        if site >= self.0.n_sites() {
            return Err(PyValueError::new_err("site out of range"));
        }
        Ok(self.0.neighbors(site).collect())
    }

    fn __repr__(&self) -> String {
        format!("Torus({:?})", self.0.sides())
    }
}

/// `family` is one of ising_ferro, ising_antiferro, hardcore; `rule` is heat_bath or metropolis.
#[pyclass(name = "Model", module = "cutoff_lab", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModel(ModelSpec);

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (beta, h = 0.0, family = "ising_ferro", rule = "heat_bath"))]
    fn new(beta: f64, h: f64, family: &str, rule: &str) -> PyResult<Self> {
        let family: Family = family.parse().map_err(to_py)?;
        let rule: RateRule = rule.parse().map_err(to_py)?;
        ModelSpec::new(family, beta, h, rule).map(PyModel).map_err(to_py)
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.0.beta
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.h
    }

    fn __repr__(&self) -> String {
        format!("Model({:?}, beta={}, h={}, {:?})", self.0.family, self.0.beta, self.0.h, self.0.rate_rule)
    }
}

/// Spectral decomposition of the generator on a small torus.
#[pyclass(name = "Spectrum", module = "cutoff_lab", frozen)]
struct PySpectrum(oracle::SpectralData, usize);

#[pymethods]
impl PySpectrum {
    #[new]
    fn new(model: &PyModel, torus: &PyTorus) -> PyResult<Self> {
        let l = oracle::build_generator(&model.0, &torus.0).map_err(to_py)?;
        oracle::spectral_gap_exact(&l).map(|(_, s)| PySpectrum(s, torus.0.n_sites())).map_err(to_py)
    }

    #[getter]
    fn gap(&self) -> f64 {
        self.0.gap()
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.0.eigenvalues().to_vec()
    }

    #[getter]
    fn stationary(&self) -> Vec<f64> {
        self.0.stationary().to_vec()
    }

    /// Law at time `t` from the start given as ±1 spins.
    fn heat_kernel(&self, start: Vec<i8>, t: f64) -> PyResult<Vec<f64>> {
        oracle::heat_kernel_row(&self.0, &spins(&start)?, t).map_err(to_py)
    }

    /// Total-variation distance to stationarity at time `t` from `start`.
    fn tv(&self, start: Vec<i8>, t: f64) -> PyResult<f64> {
        let row = self.heat_kernel(start, t)?;
        oracle::tv_distance(&row, self.0.stationary()).map_err(to_py)
    }

    fn mixing_time(&self, eps: f64) -> PyResult<f64> {
        estimators::exact_mixing_time(&self.0, eps).map_err(to_py)
    }

    /// The local L² quantity for the box `sites` at time `t`.
    fn m_t(&self, sites: Vec<usize>, t: f64) -> PyResult<f64> {
        let b = Region::new(sites, self.1).map_err(to_py)?;
        oracle::m_t_from_spectrum(&self.0, &b, t).map_err(to_py)
    }
}

fn spins(s: &[i8]) -> PyResult<SpinConfiguration> {
    if s.iter().any(|&v| v != 1 && v != -1) {
        return Err(PyValueError::new_err("spins must be +1 or -1"));
    }
    Ok(SpinConfiguration::from_spins(s))
}

/// A recorded Poisson clock realization on a torus.
#[pyclass(name = "UpdateSequence", module = "cutoff_lab", frozen)]
struct PyUpdates(UpdateSequence);

#[pymethods]
impl PyUpdates {
    #[new]
    fn new(torus: &PyTorus, t_end: f64, seed: u64) -> PyResult<Self> {
        dynamics::sample_update_sequence(&torus.0, t_end, seed).map(PyUpdates).map_err(to_py)
    }

    /// `(time, site, u)` triples in time order.
    fn events(&self) -> Vec<(f64, u32, f64)> {
        self.0.events().iter().map(|e| (e.time, e.site, e.u)).collect()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Sites whose initial spins can influence the state after the updates.
#[pyfunction]
#[pyo3(signature = (model, torus, updates, method = "exact", block_side = 4, halo = 2))]
fn update_support(
    model: &PyModel,
    torus: &PyTorus,
    updates: &PyUpdates,
    method: &str,
    block_side: usize,
    halo: usize,
) -> PyResult<Vec<usize>> {
    let set = match method {
        "exact" => support::exact_support(&model.0, &torus.0, &updates.0),
        "paths" => support::support_superset_paths(&torus.0, &updates.0, model.0.rate_rule),
        "blocks" => support::build_block_partition(&torus.0, block_side, halo)
            .and_then(|p| support::support_superset_blocks(&model.0, &p, &updates.0)),
        other => return Err(PyValueError::new_err(format!("unknown support method `{other}`"))),
    };
    set.map(|s| s.region.sites().to_vec()).map_err(to_py)
}

/// Exact stationary sample by coupling from the past, as ±1 spins.
#[pyfunction]
fn perfect_sample(model: &PyModel, torus: &PyTorus, seed: u64) -> PyResult<Vec<i8>> {
    dynamics::cftp_sample(&model.0, &torus.0, seed).map(|s| s.to_spins()).map_err(to_py)
}

/// Coalescence upper bound on the worst-start TV distance: `(values, se)`.
#[pyfunction]
fn tv_upper(model: &PyModel, torus: &PyTorus, times: Vec<f64>, replicas: usize, seed: u64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    estimators::tv_upper_via_coalescence(&model.0, &torus.0, &times, replicas, seed)
        .map(|c| (c.values, c.se))
        .map_err(to_py)
}

#[pyclass(name = "XiCurve", module = "cutoff_lab", frozen)]
struct PyXi(XiCurve);

#[pymethods]
impl PyXi {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.0.times.clone()
    }

    #[getter]
    fn xi(&self) -> Vec<f64> {
        self.0.xi.clone()
    }

    #[getter]
    fn se(&self) -> Vec<f64> {
        self.0.se.clone()
    }

    /// `(lambda_hat, se)` from the log-linear fit; `window` defaults to the automatic choice.
    #[pyo3(signature = (window = None))]
    fn gap(&self, window: Option<(f64, f64)>) -> PyResult<(f64, f64)> {
        estimators::gap_from_xi(&self.0, window).map(|g| (g.lambda_hat, g.se)).map_err(to_py)
    }
}

/// Site-averaged disagreement of the extreme chains on a torus.
#[pyfunction]
fn xi_curve(model: &PyModel, torus: &PyTorus, times: Vec<f64>, replicas: usize, seed: u64) -> PyResult<PyXi> {
    estimators::xi_t_curve(&model.0, &torus.0, &times, replicas, seed).map(PyXi).map_err(to_py)
}

#[pymodule]
fn cutoff_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTorus>()?;
    m.add_class::<PyModel>()?;
    m.add_class::<PySpectrum>()?;
    m.add_class::<PyUpdates>()?;
    m.add_class::<PyXi>()?;
    m.add_function(wrap_pyfunction!(update_support, m)?)?;
    m.add_function(wrap_pyfunction!(perfect_sample, m)?)?;
    m.add_function(wrap_pyfunction!(tv_upper, m)?)?;
    m.add_function(wrap_pyfunction!(xi_curve, m)?)?;
    Ok(())
}
