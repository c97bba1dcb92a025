//! Python bindings for the trimode toolkit.
//!
//! Model parameters and classical states are wrapped as classes; exact
//! diagonalization is held by `QuantumSystem` so the eigenvectors are
//! computed once and reused. Time series come back as dictionaries of lists.

use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use trimode::chaos::{self, CrossingDirection, LyapunovConfig, LyapunovMethod};
use trimode::dynamics::{integrate_at, IntegratorConfig};
use trimode::model::{self, CanonicalCoords, ClassicalState, ModelParams};
use trimode::quantum::{
    build_hamiltonian, coherent_state, diagonalize, husimi_grid, observable_ed, otoc_ed, parity_blocks, quadratic_response_protocol, FockBasis, Operator,
    OtocSeries, PhaseGrid, ProtocolSpec, QuantumState, Spectrum,
};
use trimode::spectral::{self, UnfoldConfig};
use trimode::twa::{self, DerivativeMethod, TwaConfig};
use trimode::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::InvalidConfig(_) | Error::UnknownOperator(_) | Error::Precondition(_) | Error::Resource { .. } => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py_err(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for trimode::Result<T> {
    fn py_err(self) -> PyResult<T> {
        self.map_err(to_py)
    }
}

/// Hamiltonian parameters `gN`, `q`, `r` and the atom number.
#[pyclass(name = "Params", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyParams(ModelParams);

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (gn = 1.0, q = 1.0, r = 0.0, n_atoms = 100))]
    fn new(gn: f64, q: f64, r: f64, n_atoms: usize) -> PyResult<Self> {
        ModelParams::new(gn, q, r, n_atoms).map(Self).py_err()
    }

    #[getter]
    fn gn(&self) -> f64 {
        self.0.gn
    }

    #[getter]
    fn q(&self) -> f64 {
        self.0.q
    }

    #[getter]
    fn r(&self) -> f64 {
        self.0.r
    }

    #[getter]
    fn n_atoms(&self) -> usize {
        self.0.n_atoms
    }

    fn __repr__(&self) -> String {
        format!("Params(gn={}, q={}, r={}, n_atoms={})", self.0.gn, self.0.q, self.0.r, self.0.n_atoms)
    }
}

/// Normalized mean-field spinor `(ζ₁, ζ₀, ζ₋₁)`.
#[pyclass(name = "State", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyState(ClassicalState);

#[pymethods]
impl PyState {
    /// Spinor from its three complex components; it must have unit norm.
    #[new]
    fn new(zeta: [num_complex::Complex64; 3]) -> PyResult<Self> {
        ClassicalState::new(zeta).map(Self).py_err()
    }

    #[staticmethod]
    #[pyo3(signature = (rho0, theta_s, m, theta_m = 0.0))]
    fn from_canonical(rho0: f64, theta_s: f64, m: f64, theta_m: f64) -> PyResult<Self> {
        let c = CanonicalCoords::new(rho0, theta_s, m, theta_m).py_err()?;
        Ok(Self(model::canonical_to_zeta(&c)))
    }

    /// State at `(ρ₀, Θ_s, Θ_m)` whose magnetization puts it on the shell of the given energy.
    #[staticmethod]
    #[pyo3(signature = (rho0, theta_s, energy, params, theta_m = 0.0))]
    fn on_shell(rho0: f64, theta_s: f64, energy: f64, params: &PyParams, theta_m: f64) -> PyResult<Self> {
        let m = model::solve_m_for_energy(rho0, theta_s, theta_m, energy, &params.0)
            .ok_or_else(|| PyValueError::new_err(format!("no magnetization reaches energy {energy} at rho0={rho0}, theta_s={theta_s}")))?;
        Self::from_canonical(rho0, theta_s, m, theta_m)
    }

    #[getter]
    fn zeta(&self) -> [num_complex::Complex64; 3] {
        self.0.zeta
    }

    /// `(rho0, theta_s, m, theta_m)`.
    fn canonical(&self) -> (f64, f64, f64, f64) {
        let c = model::zeta_to_canonical(&self.0).coords;
        (c.rho0, c.theta_s, c.m, c.theta_m)
    }

    fn energy(&self, params: &PyParams) -> f64 {
        model::mf_energy(&self.0, &params.0)
    }

    fn __repr__(&self) -> String {
        let (r, s, m, t) = self.canonical();
        format!("State(rho0={r}, theta_s={s}, m={m}, theta_m={t})")
    }
}

fn series_dict<'py>(py: Python<'py>, s: &OtocSeries) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("t", &s.times)?;
    d.set_item("C", &s.values)?;
    if let Some(e) = &s.errors {
        d.set_item("err", e)?;
    }
    Ok(d)
}

fn lyapunov_method(name: &str) -> PyResult<LyapunovMethod> {
    name.parse().map_err(|e: Error| to_py(e))
}

/// Mean-field trajectory sampled at `times`; returns a list of spinors.
#[pyfunction]
fn trajectory(state: &PyState, times: Vec<f64>, params: &PyParams) -> PyResult<Vec<[num_complex::Complex64; 3]>> {
    let rec = integrate_at(&state.0, &times, &IntegratorConfig::default(), &params.0).py_err()?;
    Ok(rec.states.iter().map(|z| z.zeta).collect())
}

/// Largest Lyapunov exponent as `(lambda, std_error)`.
#[pyfunction]
#[pyo3(signature = (state, params, t_total = 2000.0, t_min = 100.0, t_reset = 1.0, xi0 = 1e-8, seed = 0, method = "reset"))]
#[allow(clippy::too_many_arguments)]
fn lyapunov(py: Python<'_>, state: &PyState, params: &PyParams, t_total: f64, t_min: f64, t_reset: f64, xi0: f64, seed: u64, method: &str) -> PyResult<(f64, f64)> {
    let cfg = LyapunovConfig { xi0, t_reset, t_min, t_total, seed };
    let method = lyapunov_method(method)?;
    let (z, p) = (state.0, params.0);
    let est = py.detach(|| chaos::lyapunov(&z, &cfg, &p, method)).py_err()?;
    Ok((est.lambda, est.std_error))
}

/// Crossings with the `Θ_m = 0` surface, one list of `(rho0, theta_s)` per initial state.
#[pyfunction]
#[pyo3(signature = (states, t_end, params, direction = "both"))]
fn poincare_section(py: Python<'_>, states: Vec<PyRef<'_, PyState>>, t_end: f64, params: &PyParams, direction: &str) -> PyResult<Vec<Vec<(f64, f64)>>> {
    let dir: CrossingDirection = direction.parse().map_err(|e: Error| to_py(e))?;
    let zs: Vec<ClassicalState> = states.iter().map(|s| s.0).collect();
    let p = params.0;
    let section = py.detach(|| chaos::poincare_section(&zs, t_end, &p, dir, &IntegratorConfig::default())).py_err()?;
    Ok(section.crossings)
}

/// Brody parameter fitted to the given unfolded spacings.
#[pyfunction]
fn brody_fit(spacings: Vec<f64>) -> PyResult<(f64, f64)> {
    let f = spectral::brody_fit_spacings(&spacings).py_err()?;
    Ok((f.b, f.fit_stderr))
}

fn twa_config(samples: usize, seed: u64, method: &str, d0: f64) -> PyResult<TwaConfig> {
    let derivative = match method.parse::<DerivativeMethod>().map_err(to_py)? {
        DerivativeMethod::TwoTrajectory { .. } => DerivativeMethod::TwoTrajectory { d0 },
        m => m,
    };
    let cfg = TwaConfig { n_samples: samples, seed, derivative, ..TwaConfig::default() };
    cfg.validate().py_err()?;
    Ok(cfg)
}

/// Semi-classical `C(t)` of `ρ̂₀` with bootstrap errors.
#[pyfunction]
#[pyo3(signature = (state, times, params, samples = 1000, seed = 0, method = "fundamental", d0 = 1e-6))]
#[allow(clippy::too_many_arguments)]
fn twa_otoc<'py>(
    py: Python<'py>,
    state: &PyState,
    times: Vec<f64>,
    params: &PyParams,
    samples: usize,
    seed: u64,
    method: &str,
    d0: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = twa_config(samples, seed, method, d0)?;
    let (z, p) = (state.0, params.0);
    let r = py.detach(|| twa::twa_otoc(&z, p.n_atoms, &times, &cfg, &p)).py_err()?;
    let d = series_dict(py, &r.series)?;
    d.set_item("hbar_eff", r.hbar_eff)?;
    d.set_item("d0_sensitive", r.d0_sensitive)?;
    Ok(d)
}

/// Ensemble mean and spread of a mode observable such as `N0` or `Sz`.
#[pyfunction]
#[pyo3(signature = (state, observable, times, params, samples = 1000, seed = 0))]
fn twa_observable<'py>(py: Python<'py>, state: &PyState, observable: &str, times: Vec<f64>, params: &PyParams, samples: usize, seed: u64) -> PyResult<Bound<'py, PyDict>> {
    let cfg = twa_config(samples, seed, "fundamental", twa::DEFAULT_D0)?;
    let (z, p) = (state.0, params.0);
    let o = py.detach(|| twa::twa_observable(&z, p.n_atoms, observable, &times, &cfg, &p)).py_err()?;
    let d = PyDict::new(py);
    d.set_item("t", o.times)?;
    d.set_item("mean", o.mean)?;
    d.set_item("std", o.std)?;
    d.set_item("mean_err", o.mean_err)?;
    Ok(d)
}

fn series_from(t: Vec<f64>, c: Vec<f64>) -> OtocSeries {
    OtocSeries { times: t, values: c, v_label: String::new(), w_label: String::new(), errors: None }
}

/// Log-linear fit of `C(t)` over `window`: `(rate, log_amplitude, residual)`.
#[pyfunction]
fn growth_fit(t: Vec<f64>, c: Vec<f64>, window: (f64, f64)) -> PyResult<(f64, f64, f64)> {
    let f = twa::otoc_growth_fit(&series_from(t, c), window).py_err()?;
    Ok((f.rate, f.log_amplitude, f.residual))
}

/// Power-law fit of `C(t)` over `window`: `(exponent, log_amplitude, residual)`.
#[pyfunction]
fn power_law_fit(t: Vec<f64>, c: Vec<f64>, window: (f64, f64)) -> PyResult<(f64, f64, f64)> {
    let f = twa::power_law_fit(&series_from(t, c), window).py_err()?;
    Ok((f.exponent, f.log_amplitude, f.residual))
}

/// Exact diagonalization of the `N`-atom Hamiltonian, split by exchange parity.
#[pyclass(name = "QuantumSystem", frozen)]
struct PyQuantumSystem {
    params: ModelParams,
    spectrum: Spectrum,
}

impl PyQuantumSystem {
    fn coherent(&self, s: &PyState) -> QuantumState {
        coherent_state(&s.0, &self.spectrum.basis)
    }
}

#[pymethods]
impl PyQuantumSystem {
    #[new]
    fn new(py: Python<'_>, params: &PyParams) -> PyResult<Self> {
        let p = params.0;
        let spectrum = py
            .detach(|| {
                let basis = Arc::new(FockBasis::new(p.n_atoms)?);
                diagonalize(&parity_blocks(&build_hamiltonian(&basis, &p)), true)
            })
            .py_err()?;
        Ok(Self { params: p, spectrum })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    #[getter]
    fn params(&self) -> PyParams {
        PyParams(self.params)
    }

    /// Sorted eigenvalues of the even and odd blocks.
    fn eigenvalues(&self) -> (Vec<f64>, Vec<f64>) {
        (self.spectrum.even.eigen.values.clone(), self.spectrum.odd.eigen.values.clone())
    }

    /// Brody fit of the unfolded spacings of both blocks: `(b, std_error, n_spacings)`.
    #[pyo3(signature = (degree = spectral::DEFAULT_POLY_DEGREE, edge = spectral::DEFAULT_EDGE_DISCARD))]
    fn level_statistics(&self, degree: usize, edge: f64) -> PyResult<(f64, f64, usize)> {
        let cfg = UnfoldConfig { poly_degree: degree, edge_discard: edge };
        let ens = spectral::unfold(&[("even", &self.spectrum.even.eigen.values), ("odd", &self.spectrum.odd.eigen.values)], &cfg).py_err()?;
        let f = spectral::brody_fit(&ens).py_err()?;
        Ok((f.b, f.fit_stderr, f.n_spacings))
    }

    /// Squared commutator of two observables for the coherent state at `state`.
    #[pyo3(signature = (state, times, v = "rho0", w = "rho0"))]
    fn otoc<'py>(&self, py: Python<'py>, state: &PyState, times: Vec<f64>, v: &str, w: &str) -> PyResult<Bound<'py, PyDict>> {
        let psi = self.coherent(state);
        let s = py.detach(|| otoc_ed(&psi, v, w, &times, &self.spectrum)).py_err()?;
        series_dict(py, &s)
    }

    /// Exact mean and standard deviation of an observable for the coherent state at `state`.
    fn observable<'py>(&self, py: Python<'py>, state: &PyState, label: &str, times: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let psi = self.coherent(state);
        let s = py.detach(|| observable_ed(&psi, label, &times, &self.spectrum)).py_err()?;
        let d = PyDict::new(py);
        d.set_item("t", s.times)?;
        d.set_item("mean", s.mean)?;
        d.set_item("std", s.std)?;
        Ok(d)
    }

    /// Husimi distribution on a `rows × cols` grid of `(ρ₀, Θ_s)` at `Θ_m = 0`, after evolving for `time`.
    #[pyo3(signature = (state, time = 0.0, rows = 40, cols = 80, m_grid = trimode::quantum::husimi::DEFAULT_M_GRID))]
    fn husimi(&self, py: Python<'_>, state: &PyState, time: f64, rows: usize, cols: usize, m_grid: usize) -> PyResult<Vec<Vec<f64>>> {
        let psi = self.coherent(state);
        let h = py
            .detach(|| {
                let psi = if time > 0.0 { self.spectrum.evolve(&psi, time)? } else { psi };
                husimi_grid(&psi, &PhaseGrid::new(rows, cols), m_grid)
            })
            .py_err()?;
        Ok(h.values.chunks(cols).map(<[f64]>::to_vec).collect())
    }

    /// Quadratic-response estimate of `C(t)` starting from the Fock state `(n1, n0, nm1)`.
    #[pyo3(signature = (fock, times, a = "Sx", v = "N0", phi = 1e-3))]
    fn protocol<'py>(&self, py: Python<'py>, fock: (usize, usize, usize), times: Vec<f64>, a: &str, v: &str, phi: f64) -> PyResult<Bound<'py, PyDict>> {
        let a = Operator::parse(a).py_err()?;
        let v = Operator::parse(v).py_err()?;
        let psi = QuantumState::fock(Arc::clone(&self.spectrum.basis), fock.0, fock.1, fock.2).py_err()?;
        let lambda = psi.expectation(&v.matrix(&self.spectrum.basis));
        let spec = ProtocolSpec { a, v, phi, lambda };
        let r = py.detach(|| quadratic_response_protocol(&spec, &psi, &self.spectrum, &times)).py_err()?;
        let d = series_dict(py, &r.series)?;
        d.set_item("gamma_v", r.gamma_v)?;
        d.set_item("gamma_v2", r.gamma_v2)?;
        Ok(d)
    }
}

#[pymodule]
fn trimode_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PyState>()?;
    m.add_class::<PyQuantumSystem>()?;
    m.add_function(wrap_pyfunction!(trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(lyapunov, m)?)?;
    m.add_function(wrap_pyfunction!(poincare_section, m)?)?;
    m.add_function(wrap_pyfunction!(brody_fit, m)?)?;
    m.add_function(wrap_pyfunction!(twa_otoc, m)?)?;
    m.add_function(wrap_pyfunction!(twa_observable, m)?)?;
    m.add_function(wrap_pyfunction!(growth_fit, m)?)?;
    m.add_function(wrap_pyfunction!(power_law_fit, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
