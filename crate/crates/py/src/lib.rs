//! Python bindings. Every exported function has a plain Rust counterpart in
//! [`api`] so the logic is testable without an interpreter.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

pub mod api {
    use stochvort::checks;
    use stochvort::config::RunConfig;
    use stochvort::heat_kernel::{eval, KernelEvalSpec};
    use stochvort::noise;
    use stochvort::solver::run;
    use stochvort::{Error, Result};

    /// Closed-form variance of the stochastic convolution at one point.
    pub fn convolution_variance(b: f64, cutoff: usize, amplitude: f64, t: f64) -> Result<f64> {
        noise::convolution_variance(b, cutoff, amplitude, t)
    }

    /// Periodic heat kernel `g(t, x, y)`.
    pub fn heat_kernel(t: f64, x: [f64; 2], y: [f64; 2]) -> Result<f64> {
        Ok(eval(&KernelEvalSpec::for_time(t)?, x, y))
    }

    /// Runs the config and returns `(t, ||xi||_{L^2}, ||xi||_{L^p})` per mesh time.
    pub fn simulate(config_json: &str) -> Result<Vec<(f64, f64, f64)>> {
        let cfg = RunConfig::from_json(config_json)?;
        let traj = run(&cfg.simulation()?)?;
        Ok(traj
            .times
            .iter()
            .zip(&traj.states)
            .zip(&traj.lp_norms)
            .map(|((&t, s), &lp)| (t, s.energy().sqrt(), lp))
            .collect())
    }

    /// Runs one acceptance criterion by number and returns `(pass, detail)`.
    pub fn run_check(id: u8) -> Result<(bool, String)> {
        let f: fn() -> checks::CheckResult = match id {
            1 => checks::kernel_duality,
            2 => checks::kernel_estimates,
            3 => checks::convolution_covariance,
            4 => checks::biot_savart_exactness,
            5 => checks::advection_neutrality,
            6 => checks::picard_contraction,
            7 => checks::apriori_bound,
            8 => checks::malliavin_oracle,
            9 => checks::linear_malliavin_norm,
            10 => checks::nondegeneracy,
            11 => checks::density_diagnostics,
            12 => checks::determinism,
            _ => return Err(Error::Invalid(format!("no criterion {id}; expected 1..=12"))),
        };
        let r = f();
        Ok((r.pass, r.detail))
    }
}

fn to_py(e: stochvort::Error) -> PyErr {
    match e {
        stochvort::Error::Constraint { .. } | stochvort::Error::Config(_) | stochvort::Error::Invalid(_) => {
            PyValueError::new_err(e.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

#[pyfunction]
fn convolution_variance(b: f64, cutoff: usize, amplitude: f64, t: f64) -> PyResult<f64> {
    api::convolution_variance(b, cutoff, amplitude, t).map_err(to_py)
}

#[pyfunction]
fn heat_kernel(t: f64, x: [f64; 2], y: [f64; 2]) -> PyResult<f64> {
    api::heat_kernel(t, x, y).map_err(to_py)
}

#[pyfunction]
fn simulate(py: Python<'_>, config_json: &str) -> PyResult<Vec<(f64, f64, f64)>> {
    py.allow_threads(|| api::simulate(config_json)).map_err(to_py)
}

#[pyfunction]
fn run_check(py: Python<'_>, id: u8) -> PyResult<(bool, String)> {
    py.allow_threads(|| api::run_check(id)).map_err(to_py)
}

#[pymodule]
fn stochvort_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(convolution_variance, m)?)?;
    m.add_function(wrap_pyfunction!(heat_kernel, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(run_check, m)?)?;
    Ok(())
}
