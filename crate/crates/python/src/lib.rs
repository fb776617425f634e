//! Python module `sbl_py`. Matrices cross the boundary as lists of rows.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;

use sbl_core::algorithms::{run as run_core, Algorithm, AlgorithmConfig};
use sbl_core::denoise1d::{self, DenoiseScalarProblem, ScalarScheme};
use sbl_core::nalgebra::{DMatrix, DVector};
use sbl_core::evidence::evaluate;
use sbl_core::{HyperparamVector, SblError};

fn to_py(e: SblError) -> PyErr {
    match e {
        SblError::Numerical(_) => PyArithmeticError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn gamma_of(values: Vec<f64>) -> PyResult<HyperparamVector> {
    HyperparamVector::new(values).map_err(to_py)
}

#[pyclass(name = "Problem", frozen)]
struct Problem {
    inner: sbl_core::ProblemInstance,
}

#[pymethods]
impl Problem {
    #[new]
    fn new(dictionary: Vec<Vec<f64>>, observation: Vec<f64>, beta: f64) -> PyResult<Self> {
        let m = dictionary.len();
        let n = dictionary.first().map_or(0, Vec::len);
        if dictionary.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err("dictionary rows have unequal lengths"));
        }
        let f = DMatrix::from_fn(m, n, |i, j| dictionary[i][j]);
        let inner =
            sbl_core::ProblemInstance::new(f, DVector::from_vec(observation), beta).map_err(to_py)?;
        Ok(Problem { inner })
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols()
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta()
    }

    /// Evidence objective at `gamma`.
    fn objective(&self, gamma: Vec<f64>) -> PyResult<f64> {
        Ok(evaluate(&gamma_of(gamma)?, &self.inner).map_err(to_py)?.objective())
    }

    /// `(mean, cov_diag)` of the weight posterior.
    fn posterior(&self, gamma: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let s = evaluate(&gamma_of(gamma)?, &self.inner).map_err(to_py)?;
        Ok((s.moments.mean, s.moments.cov_diag))
    }

    fn gradient(&self, gamma: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(evaluate(&gamma_of(gamma)?, &self.inner).map_err(to_py)?.derivs.gradient)
    }

    fn __repr__(&self) -> String {
        format!("Problem({}x{}, beta={})", self.inner.rows(), self.inner.cols(), self.inner.beta())
    }
}

#[pyclass(name = "RunResult", frozen, get_all)]
struct RunResult {
    gamma: Vec<f64>,
    mean: Vec<f64>,
    status: String,
    iterations: usize,
    objectives: Vec<f64>,
}

#[pymethods]
impl RunResult {
    fn __repr__(&self) -> String {
        format!("RunResult(status={}, iterations={})", self.status, self.iterations)
    }
}

/// Runs one hyperparameter estimation; `gamma0` defaults to ones.
#[pyfunction]
#[pyo3(signature = (problem, alg = "amq", gamma0 = None, tau = None, epsilon = None, eta0 = None, max_iters = None, rel_tol = None))]
#[allow(clippy::too_many_arguments)]
fn run(
    problem: &Problem,
    alg: &str,
    gamma0: Option<Vec<f64>>,
    tau: Option<f64>,
    epsilon: Option<f64>,
    eta0: Option<f64>,
    max_iters: Option<usize>,
    rel_tol: Option<f64>,
) -> PyResult<RunResult> {
    let d = AlgorithmConfig::default();
    let config = AlgorithmConfig {
        algorithm: alg.parse::<Algorithm>().map_err(to_py)?,
        tau: tau.unwrap_or(d.tau),
        epsilon: epsilon.unwrap_or(d.epsilon),
        eta0: eta0.unwrap_or(d.eta0),
        max_iters: max_iters.unwrap_or(d.max_iters),
        rel_tol: rel_tol.unwrap_or(d.rel_tol),
        ..d
    };
    let gamma0 = match gamma0 {
        Some(g) => gamma_of(g)?,
        None => HyperparamVector::ones(problem.inner.cols()),
    };
    let out = run_core(&problem.inner, &gamma0, &config).map_err(to_py)?;
    Ok(RunResult {
        status: out.trace.status.to_string(),
        iterations: out.trace.iterations(),
        objectives: out.trace.objectives().collect(),
        mean: out.moments.mean,
        gamma: out.gamma.into_values(),
    })
}

fn scalar(y_sq: f64, b: f64) -> PyResult<DenoiseScalarProblem> {
    DenoiseScalarProblem::new(y_sq, b).map_err(to_py)
}

/// Scalar denoising minimizer `max(y² − b, 0)`.
#[pyfunction]
#[pyo3(signature = (y_sq, b = 1.0))]
fn closed_form_gamma(y_sq: f64, b: f64) -> PyResult<f64> {
    Ok(denoise1d::closed_form_gamma(&scalar(y_sq, b)?))
}

#[pyfunction]
#[pyo3(signature = (alg, y_sq, b = 1.0, gamma0 = 1.0, iters = 50))]
fn trajectory(alg: &str, y_sq: f64, b: f64, gamma0: f64, iters: usize) -> PyResult<Vec<f64>> {
    let alg: ScalarScheme = alg.parse().map_err(to_py)?;
    Ok(denoise1d::trajectory(alg, &scalar(y_sq, b)?, gamma0, iters))
}

/// `(order, rate, regime)` predicted for a scalar scheme.
#[pyfunction]
#[pyo3(signature = (alg, r, b = 1.0))]
fn theoretical_rate(alg: &str, r: f64, b: f64) -> PyResult<(f64, f64, &'static str)> {
    let alg: ScalarScheme = alg.parse().map_err(to_py)?;
    let p = DenoiseScalarProblem::from_ratio(r, b).map_err(to_py)?;
    let info = denoise1d::theoretical_rate(alg, &p);
    Ok((info.order, info.rate, info.regime.as_str()))
}

/// `(order, rate)` fitted to the tail of a trajectory; None when the error
/// drops below the floor too quickly to fit.
#[pyfunction]
#[pyo3(signature = (alg, r, b = 1.0, gamma0 = 1.0, iters = 10_000))]
fn empirical_rate(alg: &str, r: f64, b: f64, gamma0: f64, iters: usize) -> PyResult<Option<(f64, f64)>> {
    let alg: ScalarScheme = alg.parse().map_err(to_py)?;
    let p = DenoiseScalarProblem::from_ratio(r, b).map_err(to_py)?;
    match denoise1d::empirical_rate(alg, &p, gamma0, iters) {
        Ok(e) => Ok(Some((e.order, e.rate))),
        Err(SblError::WindowTooShort { .. }) => Ok(None),
        Err(e) => Err(to_py(e)),
    }
}

#[pymodule]
fn sbl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Problem>()?;
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(theoretical_rate, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_rate, m)?)?;
    Ok(())
}
