//! Python bindings: configs, coupled simulations, analysis drivers and the
//! kinetic closure check.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use ::corotfsi::algebra::{corotation_term as corot, Mat2};
use ::corotfsi::analysis::{estimate_poincare_constants, DecayReport, MetricRange};
use ::corotfsi::cli;
use ::corotfsi::config::{parse_config, Config as CoreConfig};
use ::corotfsi::coupling::{run_trajectory, CoupledState, Coupler, Sample, Termination};
use ::corotfsi::Error;

create_exception!(corotfsi, CorotfsiError, PyException);
create_exception!(corotfsi, ConfigError, CorotfsiError);
create_exception!(corotfsi, DegeneracyError, CorotfsiError);
create_exception!(corotfsi, SolverError, CorotfsiError);

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.exit_code() {
        2 => ConfigError::new_err(msg),
        3 => DegeneracyError::new_err(msg),
        4 => SolverError::new_err(msg),
        _ => CorotfsiError::new_err(msg),
    }
}

fn mat(m: [[f64; 2]; 2]) -> Mat2 {
    Mat2(m)
}

fn sample_dict<'py>(py: Python<'py>, s: &Sample) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (k, v) in Sample::COLUMNS.iter().zip(s.values()) {
        d.set_item(*k, v)?;
    }
    Ok(d)
}

/// Column name → list of values.
fn columns<'py>(py: Python<'py>, samples: &[Sample]) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (c, name) in Sample::COLUMNS.iter().enumerate() {
        let col: Vec<f64> = samples.iter().map(|s| s.values()[c]).collect();
        d.set_item(*name, col)?;
    }
    Ok(d)
}

/// Run configuration, parsed from `key = value` text.
#[pyclass(module = "corotfsi", frozen)]
struct Config {
    inner: CoreConfig,
}

#[pymethods]
impl Config {
    #[new]
    fn new(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: parse_config(text).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_file(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: cli::load_config(&path).map_err(py_err)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    #[getter]
    fn nx(&self) -> usize {
        self.inner.nx
    }

    #[getter]
    fn ny(&self) -> usize {
        self.inner.ny
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.inner.eps
    }

    /// Relaxation time; infinite when `eps = 0`.
    #[getter]
    fn relaxation_time(&self) -> f64 {
        self.inner.lambda
    }

    #[getter]
    fn dt(&self) -> f64 {
        self.inner.dt
    }

    #[getter]
    fn t_max(&self) -> f64 {
        self.inner.t_max
    }

    fn __repr__(&self) -> String {
        format!("Config(nx={}, ny={}, eps={}, dt={}, t_max={})", self.inner.nx, self.inner.ny, self.inner.eps, self.inner.dt, self.inner.t_max)
    }
}

/// A coupled fluid, shell and stress state that can be stepped from Python.
#[pyclass(module = "corotfsi")]
struct Simulation {
    coupler: Coupler,
    state: CoupledState,
    cadence: usize,
}

#[pymethods]
impl Simulation {
    #[new]
    fn new(config: &Config) -> PyResult<Self> {
        let c = &config.inner;
        Ok(Self {
            coupler: Coupler::new(c.domain().map_err(py_err)?, c.params()).map_err(py_err)?,
            state: c.initial_state().map_err(py_err)?,
            cadence: c.cadence,
        })
    }

    #[getter]
    fn t(&self) -> f64 {
        self.state.t
    }

    /// Advances `n` steps; returns the last interface residual.
    #[pyo3(signature = (n = 1))]
    fn step(&mut self, py: Python<'_>, n: usize) -> PyResult<f64> {
        let (coupler, mut state) = (&self.coupler, self.state.clone());
        let state = py
            .detach(move || -> ::corotfsi::Result<CoupledState> {
                for _ in 0..n {
                    state = coupler.step(&state)?.0;
                }
                Ok(state)
            })
            .map_err(py_err)?;
        self.state = state;
        Ok(self.state.interface_residual)
    }

    /// Observer quantities of the current state.
    fn sample<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        sample_dict(py, &self.coupler.sample(&self.state, 0.0))
    }

    /// Energy parts of the current state.
    fn energy<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let e = self.coupler.energy(&self.state);
        let d = PyDict::new(py);
        d.set_item("kinetic", e.kinetic)?;
        d.set_item("shell_kinetic", e.shell_kinetic)?;
        d.set_item("shell_elastic", e.shell_elastic)?;
        d.set_item("viscous_dissipation", e.viscous_dissipation)?;
        d.set_item("shell_dissipation", e.shell_dissipation)?;
        d.set_item("stress_source", e.stress_source)?;
        d.set_item("total", e.total())?;
        Ok(d)
    }

    fn eta(&self) -> Vec<f64> {
        self.state.shell.eta.clone()
    }

    fn eta_dot(&self) -> Vec<f64> {
        self.state.shell.eta_dot.clone()
    }

    /// Stress components `(T11, T12, T22)` as flat row-major cell arrays.
    fn stress(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let s = &self.state.stress;
        (s.t11.clone(), s.t12.clone(), s.t22.clone())
    }

    /// Runs to `t_end` from the current state and returns the sampled columns
    /// plus the per-step energy defects.
    fn run<'py>(&mut self, py: Python<'py>, t_end: f64) -> PyResult<Bound<'py, PyDict>> {
        let span = t_end - self.state.t;
        let (coupler, init, cadence) = (&self.coupler, self.state.clone(), self.cadence);
        let tr = py.detach(move || run_trajectory(coupler, init, span, cadence, |_, _| {})).map_err(py_err)?;
        let d = columns(py, &tr.samples)?;
        let defects: Vec<f64> = tr.ledger.entries.iter().map(|e| e.defect).collect();
        d.set_item("energy_defect", defects)?;
        d.set_item("energy_scale", tr.ledger.scale())?;
        let term = match &tr.termination {
            Termination::Completed => "completed".to_string(),
            Termination::Degenerate { time, detail } => format!("degenerate at t = {time}: {detail}"),
        };
        d.set_item("termination", term)?;
        self.state = tr.final_state;
        Ok(d)
    }
}

/// Runs a configuration to `t_max` and evaluates the decay envelopes.
#[pyfunction]
fn decay<'py>(py: Python<'py>, config: &Config) -> PyResult<Bound<'py, PyDict>> {
    let c = config.inner.clone();
    let (tr, range): (_, MetricRange) = py.detach(|| cli::run_config(&c)).map_err(py_err)?;
    let pc = estimate_poincare_constants(&c.domain().map_err(py_err)?, &range);
    let rep = DecayReport::build(&tr.samples, &c.params(), pc, c.decay_tol, c.fit_from).map_err(py_err)?;
    let d = columns(py, &rep.samples)?;
    d.set_item("env_T", rep.env_t.clone())?;
    d.set_item("env_etadot", rep.env_etadot.clone())?;
    d.set_item("env_u", rep.env_u.clone())?;
    d.set_item("pass_T", rep.stress_passes())?;
    d.set_item("c1", pc.c1)?;
    d.set_item("c2", pc.c2)?;
    d.set_item("rate_T", rep.rate_t.map(|r| r.rate))?;
    Ok(d)
}

/// Vanishing-diffusion sweep over a strictly decreasing `eps_list`.
#[pyfunction]
fn sweep_eps<'py>(py: Python<'py>, config: &Config, eps_list: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let c = config.inner.clone();
    let sc = ::corotfsi::analysis::SweepConfig {
        domain: c.domain().map_err(py_err)?,
        params: c.params(),
        eps_list,
        t_max: c.t_max,
        cadence: c.cadence,
        initial: c.initial_state().map_err(py_err)?,
        parallel: c.parallel,
    };
    let r = py.detach(|| ::corotfsi::analysis::eps_sweep(&sc)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("eps", r.rows.iter().map(|w| w.eps).collect::<Vec<_>>())?;
    d.set_item("dist_T", r.rows.iter().map(|w| w.dist_t_linf_l2).collect::<Vec<_>>())?;
    d.set_item("dist_u", r.rows.iter().map(|w| w.dist_u_linf_l2).collect::<Vec<_>>())?;
    d.set_item("slope_T", r.slope_t)?;
    d.set_item("slope_u", r.slope_u)?;
    Ok(d)
}

/// Homogeneous kinetic run against the rotating closed form.
#[pyfunction]
#[pyo3(signature = (relaxation_time = 1.0, omega = 1.0, nq = 64, r_q = 6.0, delta = 0.3, dt = 1e-3, horizon = 1.0, every = 10))]
#[allow(clippy::too_many_arguments)]
fn closure<'py>(
    py: Python<'py>,
    relaxation_time: f64,
    omega: f64,
    nq: usize,
    r_q: f64,
    delta: f64,
    dt: f64,
    horizon: f64,
    every: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let w = Mat2::new(0.0, omega, -omega, 0.0);
    let r = py
        .detach(|| cli::closure_run(r_q, nq, relaxation_time, w, delta, dt, horizon, every))
        .map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("t", r.iter().map(|c| c.t).collect::<Vec<_>>())?;
    d.set_item("deviation", r.iter().map(|c| c.oracle_rel).collect::<Vec<_>>())?;
    d.set_item("residual", r.iter().map(|c| c.res_frob_rel).collect::<Vec<_>>())?;
    d.set_item("stress", r.iter().map(|c| c.stress.0).collect::<Vec<_>>())?;
    Ok(d)
}

/// `(name, value, tol, passed)` for every built-in check.
#[pyfunction]
fn self_check() -> PyResult<Vec<(String, f64, f64, bool)>> {
    Ok(cli::self_check().map_err(py_err)?.into_iter().map(|l| (l.name, l.value, l.tol, l.pass)).collect())
}

/// `W T + T Wᵀ` for antisymmetric `W` and symmetric `T`.
#[pyfunction]
fn corotation_term(w: [[f64; 2]; 2], t: [[f64; 2]; 2]) -> PyResult<[[f64; 2]; 2]> {
    Ok(corot(&mat(w), &mat(t)).map_err(py_err)?.0)
}

#[pymodule(name = "corotfsi")]
fn corotfsi_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("CorotfsiError", py.get_type::<CorotfsiError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("DegeneracyError", py.get_type::<DegeneracyError>())?;
    m.add("SolverError", py.get_type::<SolverError>())?;
    m.add_class::<Config>()?;
    m.add_class::<Simulation>()?;
    m.add_function(wrap_pyfunction!(decay, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_eps, m)?)?;
    m.add_function(wrap_pyfunction!(closure, m)?)?;
    m.add_function(wrap_pyfunction!(self_check, m)?)?;
    m.add_function(wrap_pyfunction!(corotation_term, m)?)?;
    Ok(())
}
