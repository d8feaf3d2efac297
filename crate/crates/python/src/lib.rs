//! Python bindings for `nfp-core`.
//!
//! Coefficients are passed as dicts in the config-file form, e.g.
//! `{"kind": "quadratic", "lambda": 2.0}`. Densities go in and out as
//! plain lists of cell values in row-major order.

use nfp_core::analysis::{self, DecayFit};
use nfp_core::config::parse_config;
use nfp_core::equilibrium::{solve_equilibrium, EquilibriumResult};
use nfp_core::functionals::{dissipation, entropy_terms, free_energy};
use nfp_core::ineqlab::{self, Threshold};
use nfp_core::problem::validate_problem;
use nfp_core::solver::{self, Integrator};
use nfp_core::{CoefficientSpec, DiagnosticsRecord, Error, Field, Grid, ProblemSpec, SolverControls, State};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Solver(_) | Error::Equilibrium(_) | Error::Io(_) | Error::Json(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn solver_err(e: nfp_core::SolverError) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

/// Round-trip through JSON into plain Python objects.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn coefficient(obj: &Bound<'_, PyDict>) -> PyResult<CoefficientSpec> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| PyValueError::new_err(format!("bad coefficient {text}: {e}")))
}

fn field(grid: &Grid, values: Vec<f64>) -> PyResult<Field> {
    Field::new(*grid, values).map_err(py_err)
}

#[pyclass(name = "Problem", module = "nfp", frozen)]
struct PyProblem {
    inner: nfp_core::Problem,
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (alpha, bounds, cells, d, phi, rho0, t_end, lambda_=0.0, d_min=None, dt_init=1e-3, cfl=0.5, record_every=100))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        alpha: f64,
        bounds: Vec<(f64, f64)>,
        cells: Vec<usize>,
        d: &Bound<'_, PyDict>,
        phi: &Bound<'_, PyDict>,
        rho0: &Bound<'_, PyDict>,
        t_end: f64,
        lambda_: f64,
        d_min: Option<f64>,
        dt_init: f64,
        cfl: f64,
        record_every: usize,
    ) -> PyResult<Self> {
        let grid = Grid::new(bounds.len(), &bounds, &cells).map_err(py_err)?;
        let solver = SolverControls { dt_init, cfl, record_every, ..SolverControls::new(t_end) };
        let spec = ProblemSpec {
            alpha,
            grid,
            d: coefficient(d)?,
            phi: coefficient(phi)?,
            rho0: coefficient(rho0)?,
            lambda: lambda_,
            d_min,
            solver,
        };
        Ok(Self { inner: nfp_core::Problem::new(spec).map_err(py_err)? })
    }

    /// Build from the text of a TOML run config.
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        let cfg = parse_config(text).map_err(py_err)?;
        Ok(Self { inner: cfg.build_problem().map_err(py_err)? })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda()
    }

    #[getter]
    fn n_cells(&self) -> usize {
        self.inner.grid().n_cells()
    }

    #[getter]
    fn cell_volume(&self) -> f64 {
        self.inner.grid().cell_volume()
    }

    /// Cell centers as (x, y) pairs; y is 0 on intervals.
    fn centers(&self) -> Vec<(f64, f64)> {
        self.inner.grid().centers().map(|[x, y]| (x, y)).collect()
    }

    fn d(&self) -> Vec<f64> {
        self.inner.d().values().to_vec()
    }

    fn phi(&self) -> Vec<f64> {
        self.inner.phi().values().to_vec()
    }

    fn initial_density(&self) -> Vec<f64> {
        self.inner.rho0().values().to_vec()
    }

    fn free_energy(&self, rho: Vec<f64>) -> PyResult<f64> {
        let state = State::new(field(self.inner.grid(), rho)?, 0.0).map_err(py_err)?;
        Ok(free_energy(&state, &self.inner))
    }

    fn dissipation(&self, rho: Vec<f64>) -> PyResult<f64> {
        let state = State::new(field(self.inner.grid(), rho)?, 0.0).map_err(py_err)?;
        Ok(dissipation(&state, &self.inner))
    }

    /// The terms I₁…I₇ of d²F/dt² and their reconstructed sum.
    fn entropy_terms<'py>(&self, py: Python<'py>, rho: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
        let state = State::new(field(self.inner.grid(), rho)?, 0.0).map_err(py_err)?;
        to_py(py, &entropy_terms(&state, &self.inner))
    }

    fn validate<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &validate_problem(self.inner.spec()).map_err(py_err)?)
    }

    #[pyo3(signature = (tol=1e-13))]
    fn equilibrium(&self, tol: f64) -> PyResult<PyEquilibrium> {
        Ok(PyEquilibrium { inner: solve_equilibrium(&self.inner, tol).map_err(py_err)? })
    }

    /// Run to t_end with the GIL released.
    fn run(&self, py: Python<'_>) -> PyResult<PyRun> {
        let out = py.detach(|| solver::run(&self.inner)).map_err(solver_err)?;
        Ok(PyRun {
            problem: self.inner.clone(),
            records: out.records,
            final_density: out.final_state.into_rho().into_values(),
            accepted_steps: out.accepted_steps,
            rejected_steps: out.rejected_steps,
        })
    }

    #[pyo3(signature = (dt_list, n_list, horizon=0.01, t_mid=0.01, delta=1e-4))]
    fn identity_study<'py>(
        &self,
        py: Python<'py>,
        dt_list: Vec<f64>,
        n_list: Vec<usize>,
        horizon: f64,
        t_mid: f64,
        delta: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let options = analysis::StudyOptions { horizon, t_mid, delta };
        let study = py
            .detach(|| analysis::identity_convergence_study(&self.inner, &dt_list, &n_list, options))
            .map_err(py_err)?;
        to_py(py, &study)
    }

    fn __repr__(&self) -> String {
        let g = self.inner.grid();
        format!("Problem(alpha={}, dim={}, n_cells={})", self.inner.alpha(), g.dim(), g.n_cells())
    }
}

/// Stepwise access to the solver.
#[pyclass(name = "Simulation", module = "nfp")]
struct PySimulation {
    problem: nfp_core::Problem,
    state: State,
    accepted: usize,
}

#[pymethods]
impl PySimulation {
    #[new]
    fn new(problem: &PyProblem) -> Self {
        Self { problem: problem.inner.clone(), state: State::initial(&problem.inner), accepted: 0 }
    }

    #[getter]
    fn t(&self) -> f64 {
        self.state.t()
    }

    #[getter]
    fn accepted_steps(&self) -> usize {
        self.accepted
    }

    fn density(&self) -> Vec<f64> {
        self.state.rho().values().to_vec()
    }

    fn free_energy(&self) -> f64 {
        free_energy(&self.state, &self.problem)
    }

    fn dissipation(&self) -> f64 {
        dissipation(&self.state, &self.problem)
    }

    /// Take adaptive steps until time `t`, landing on it exactly.
    fn advance(&mut self, py: Python<'_>, t: f64) -> PyResult<()> {
        let (problem, start) = (&self.problem, self.state.clone());
        let (state, steps) = py
            .detach(|| {
                let mut integ = Integrator::from_state(problem, start);
                while integ.state().t() < t {
                    integ.step_adaptive(t)?;
                }
                let steps = integ.accepted_steps();
                Ok((integ.into_state(), steps))
            })
            .map_err(solver_err)?;
        self.state = state;
        self.accepted += steps;
        Ok(())
    }

    /// One explicit step of size `dt`; the state is unchanged on rejection.
    fn step(&mut self, dt: f64) -> PyResult<()> {
        let (next, _) = solver::step(&self.state, &self.problem, dt).map_err(solver_err)?;
        self.state = next;
        self.accepted += 1;
        Ok(())
    }
}

#[pyclass(name = "Run", module = "nfp", frozen)]
struct PyRun {
    problem: nfp_core::Problem,
    records: Vec<DiagnosticsRecord>,
    final_density: Vec<f64>,
    #[pyo3(get)]
    accepted_steps: usize,
    #[pyo3(get)]
    rejected_steps: usize,
}

impl PyRun {
    fn column(&self, f: impl Fn(&DiagnosticsRecord) -> f64) -> Vec<f64> {
        self.records.iter().map(f).collect()
    }
}

#[pymethods]
impl PyRun {
    #[getter]
    fn t(&self) -> Vec<f64> {
        self.column(|r| r.t)
    }

    #[getter]
    fn mass(&self) -> Vec<f64> {
        self.column(|r| r.mass)
    }

    #[getter]
    fn energy(&self) -> Vec<f64> {
        self.column(|r| r.energy)
    }

    #[getter]
    fn dissipation(&self) -> Vec<f64> {
        self.column(|r| r.dissipation)
    }

    #[getter]
    fn rho_min(&self) -> Vec<f64> {
        self.column(|r| r.rho_min)
    }

    #[getter]
    fn rho_max(&self) -> Vec<f64> {
        self.column(|r| r.rho_max)
    }

    #[getter]
    fn final_density(&self) -> Vec<f64> {
        self.final_density.clone()
    }

    fn __len__(&self) -> usize {
        self.records.len()
    }

    /// Decay fit over `window`, or the second half of the resolved run.
    #[pyo3(signature = (window=None, floor=1e-18))]
    fn fit_decay(&self, window: Option<(f64, f64)>, floor: f64) -> PyResult<PyDecayFit> {
        let window = match window {
            Some(w) => w,
            None => analysis::resolved_window(&self.records, floor).map_err(py_err)?,
        };
        Ok(PyDecayFit { inner: analysis::fit_decay(&self.records, window).map_err(py_err)? })
    }

    fn hypotheses<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &analysis::check_theorem_hypotheses(&self.problem, &self.records).map_err(py_err)?)
    }

    fn subsequence_decay<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &analysis::subsequence_decay(&self.records))
    }

    /// Diagnostics in the CSV format the CLI writes.
    fn to_csv(&self) -> PyResult<String> {
        nfp_core::config::diagnostics_csv(&self.records).map_err(py_err)
    }
}

#[pyclass(name = "Equilibrium", module = "nfp", frozen)]
struct PyEquilibrium {
    inner: EquilibriumResult,
}

#[pymethods]
impl PyEquilibrium {
    #[getter]
    fn constant(&self) -> f64 {
        self.inner.constant
    }

    #[getter]
    fn density(&self) -> Vec<f64> {
        self.inner.rho_inf.values().to_vec()
    }

    #[getter]
    fn mass_residual(&self) -> f64 {
        self.inner.mass_residual
    }

    #[getter]
    fn dissipation_residual(&self) -> f64 {
        self.inner.dissipation_residual
    }

    #[getter]
    fn positivity(&self) -> bool {
        self.inner.positivity
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }

    fn __repr__(&self) -> String {
        format!("Equilibrium(C={}, positivity={})", self.inner.constant, self.inner.positivity)
    }
}

#[pyclass(name = "DecayFit", module = "nfp", frozen)]
struct PyDecayFit {
    inner: DecayFit,
}

#[pymethods]
impl PyDecayFit {
    #[getter]
    fn window(&self) -> (f64, f64) {
        self.inner.window
    }

    #[getter]
    fn rate(&self) -> f64 {
        self.inner.rate
    }

    #[getter]
    fn amplitude(&self) -> f64 {
        self.inner.amplitude
    }

    #[getter]
    fn r_squared(&self) -> f64 {
        self.inner.r_squared
    }

    #[getter]
    fn samples(&self) -> usize {
        self.inner.samples
    }

    #[getter]
    fn valid(&self) -> bool {
        self.inner.valid
    }

    fn __repr__(&self) -> String {
        format!("DecayFit(rate={}, r_squared={})", self.inner.rate, self.inner.r_squared)
    }
}

/// Fit ln D = ln A − σt to samples inside `window`.
#[pyfunction]
fn fit_decay(t: Vec<f64>, d: Vec<f64>, window: (f64, f64)) -> PyResult<PyDecayFit> {
    if t.len() != d.len() {
        return Err(PyValueError::new_err("t and d differ in length"));
    }
    let records: Vec<_> = t
        .into_iter()
        .zip(d)
        .map(|(t, d)| DiagnosticsRecord { t, mass: 1.0, energy: 0.0, dissipation: d, rho_min: 0.0, rho_max: 0.0 })
        .collect();
    Ok(PyDecayFit { inner: analysis::fit_decay(&records, window).map_err(py_err)? })
}

/// Smallness threshold for g' ≤ −C7 g + C8 g^{3/2} + C9 g³; inf when none.
#[pyfunction]
fn gronwall_threshold(c7: f64, c8: f64, c9: f64) -> PyResult<f64> {
    let p = ineqlab::gronwall_threshold(c7, c8, c9).map_err(py_err)?;
    Ok(match p.threshold {
        Threshold::Infinite => f64::INFINITY,
        Threshold::Finite { value } => value,
    })
}

#[pyfunction]
#[pyo3(signature = (c7, c8, c9, g0, t_end=20.0, rtol=1e-6))]
fn gronwall_verify<'py>(
    py: Python<'py>,
    c7: f64,
    c8: f64,
    c9: f64,
    g0: f64,
    t_end: f64,
    rtol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let p = ineqlab::gronwall_threshold(c7, c8, c9).map_err(py_err)?;
    to_py(py, &ineqlab::gronwall_verify(&p, g0, t_end, rtol).map_err(py_err)?)
}

/// Sobolev-constant estimate followed by the interpolation check.
#[pyfunction]
#[pyo3(signature = (bounds, cells, c2=0.5, c3=2.0, trials=2000, samples=1000, seed=2024))]
#[allow(clippy::too_many_arguments)]
fn interp_check<'py>(
    py: Python<'py>,
    bounds: Vec<(f64, f64)>,
    cells: Vec<usize>,
    c2: f64,
    c3: f64,
    trials: usize,
    samples: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let grid = Grid::new(bounds.len(), &bounds, &cells).map_err(py_err)?;
    let report = py
        .detach(|| -> nfp_core::Result<_> {
            let sobolev =
                ineqlab::estimate_sobolev_constant(&grid, ineqlab::sobolev_exponent(grid.dim())?, trials, seed)?;
            ineqlab::check_interpolation(&grid, (c2, c3), &sobolev, samples, seed.wrapping_add(1))
        })
        .map_err(py_err)?;
    to_py(py, &report)
}

#[pymodule]
pub fn nfp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_class::<PySimulation>()?;
    m.add_class::<PyRun>()?;
    m.add_class::<PyEquilibrium>()?;
    m.add_class::<PyDecayFit>()?;
    m.add_function(wrap_pyfunction!(fit_decay, m)?)?;
    m.add_function(wrap_pyfunction!(gronwall_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(gronwall_verify, m)?)?;
    m.add_function(wrap_pyfunction!(interp_check, m)?)?;
    Ok(())
}
