//! Python bindings for the q-heat solvers.

use std::cell::RefCell;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use qheat::direct::{lattice_stepper_oracle, max_relative_gap, Source};
use qheat::growth::TimeFn;
use qheat::inverse::affine_shape;
use qheat::operators::{custom_spectrum, involution_spectrum, landau_spectrum};
use qheat::qlattice;
use qheat::{CoeffTrajectory, CoefficientProfile, DirectProblem, InverseProblem, QHeatError, QParams, SourceProfile};

fn py_err(e: QHeatError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn params(q: f64, n_terms: Option<usize>) -> PyResult<QParams> {
    match n_terms {
        Some(n) => QParams::with_terms(q, n),
        None => QParams::new(q),
    }
    .map_err(py_err)
}

/// The q-number `[alpha]_q = (1 - q^alpha) / (1 - q)`.
#[pyfunction]
fn q_number(alpha: f64, q: f64) -> PyResult<f64> {
    qlattice::q_number(alpha, q).map_err(py_err)
}

/// The q-factorial `[n]_q!`.
#[pyfunction]
fn q_factorial(n: u32, q: f64) -> PyResult<f64> {
    qlattice::q_factorial(n, q).map_err(py_err)
}

/// Small q-exponential `e_q(x)`, defined for `|x| < 1 / (1 - q)`.
#[pyfunction]
#[pyo3(signature = (x, q, n_terms=None))]
fn e_q(x: f64, q: f64, n_terms: Option<usize>) -> PyResult<f64> {
    qlattice::e_q(x, &params(q, n_terms)?).map_err(py_err)
}

/// Big q-exponential `E_q(x)` as a truncated product.
#[pyfunction]
#[pyo3(signature = (x, q, n_terms=None))]
fn big_e_q(x: f64, q: f64, n_terms: Option<usize>) -> PyResult<f64> {
    qlattice::big_e_q(x, &params(q, n_terms)?).map_err(py_err)
}

/// Jackson integral of the Python callable `f` over `[0, x]`.
#[pyfunction]
#[pyo3(signature = (f, x, q, n_terms=None))]
fn jackson_integral(f: Bound<'_, PyAny>, x: f64, q: f64, n_terms: Option<usize>) -> PyResult<f64> {
    let failure = RefCell::new(None);
    let value = qlattice::jackson_integral(
        |s| match f.call1((s,)).and_then(|v| v.extract::<f64>()) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        },
        x,
        &params(q, n_terms)?,
    );
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    value.map_err(py_err)
}

/// Ordered operator spectrum with its lower bound `lambda0`.
#[pyclass(name = "Spectrum", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySpectrum {
    inner: qheat::Spectrum,
}

#[pymethods]
impl PySpectrum {
    /// Spectrum of `-u'' + epsilon u''(pi - x)` with Dirichlet conditions on `(0, pi)`.
    #[staticmethod]
    fn involution(epsilon: f64, modes: usize) -> PyResult<Self> {
        Ok(Self {
            inner: involution_spectrum(epsilon, modes).map_err(py_err)?,
        })
    }

    /// Landau levels `B (2n - 1)`.
    #[staticmethod]
    fn landau(b: f64, modes: usize) -> PyResult<Self> {
        Ok(Self {
            inner: landau_spectrum(b, modes).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn custom(eigenvalues: Vec<f64>, lambda0: f64) -> PyResult<Self> {
        Ok(Self {
            inner: custom_spectrum(eigenvalues, lambda0).map_err(py_err)?,
        })
    }

    #[getter]
    fn eigenvalues(&self) -> Vec<f64> {
        self.inner.eigenvalues().to_vec()
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels().to_vec()
    }

    #[getter]
    fn lambda0(&self) -> f64 {
        self.inner.lambda0()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Spectrum(modes={}, lambda0={})", self.inner.len(), self.inner.lambda0())
    }
}

/// Affine time function `a + b t` and its extremes on `[0, T]`.
fn affine(a: f64, b: f64, horizon: f64) -> (TimeFn, f64, f64) {
    let end = a + b * horizon;
    (affine_shape(a, b), a.min(end), a.max(end))
}

fn affine_profile(upsilon: (f64, f64), horizon: f64, qp: &QParams) -> PyResult<CoefficientProfile> {
    let (f, alpha, beta) = affine(upsilon.0, upsilon.1, horizon);
    CoefficientProfile::new(f, alpha, beta, horizon, qp).map_err(py_err)
}

/// Lattice times in ascending order with the per-mode values at each time.
#[pyclass(name = "Trajectory", frozen)]
struct PyTrajectory {
    #[pyo3(get)]
    times: Vec<f64>,
    #[pyo3(get)]
    values: Vec<Vec<f64>>,
}

impl From<&CoeffTrajectory> for PyTrajectory {
    fn from(tr: &CoeffTrajectory) -> Self {
        let mut rows: Vec<(f64, Vec<f64>)> = tr
            .lattice()
            .points()
            .iter()
            .zip(tr.states())
            .map(|(&t, c)| (t, c.as_slice().to_vec()))
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (times, values) = rows.into_iter().unzip();
        Self { times, values }
    }
}

#[pymethods]
impl PyTrajectory {
    /// Mode values at the final time `T`.
    #[getter]
    fn at_horizon(&self) -> Vec<f64> {
        self.values.last().cloned().unwrap_or_default()
    }
}

/// Solves `D_q u + upsilon(t) L u = f`, `u(0) = phi`, with `upsilon = a + b t`
/// and `f_k(t) = amplitudes[k] (c + e t)`.
#[pyfunction]
#[pyo3(signature = (spectrum, phi, amplitudes=None, q=0.5, horizon=1.0, upsilon=(1.0, 0.0), shape=(1.0, 0.0), d=0.0, n_terms=None))]
#[allow(clippy::too_many_arguments)]
fn solve_direct<'py>(
    py: Python<'py>,
    spectrum: &PySpectrum,
    phi: Vec<f64>,
    amplitudes: Option<Vec<f64>>,
    q: f64,
    horizon: f64,
    upsilon: (f64, f64),
    shape: (f64, f64),
    d: f64,
    n_terms: Option<usize>,
) -> PyResult<(PyTrajectory, Bound<'py, PyDict>)> {
    let qp = params(q, n_terms)?;
    let source = match amplitudes {
        Some(a) if a.len() != phi.len() => {
            return Err(PyValueError::new_err(format!(
                "amplitudes has {} entries, phi has {}",
                a.len(),
                phi.len()
            )))
        }
        Some(a) => Source::separable(a, affine_shape(shape.0, shape.1)),
        None => Source::Zero,
    };
    let problem = DirectProblem::new(
        spectrum.inner.clone(),
        affine_profile(upsilon, horizon, &qp)?,
        phi.into(),
        source,
        horizon,
        qp,
        d,
    )
    .map_err(py_err)?;
    let sol = qheat::solve_direct(&problem).map_err(py_err)?;
    let stepper = lattice_stepper_oracle(&problem).map_err(py_err)?;
    let diagnostics = PyDict::new(py);
    diagnostics.set_item("ode_residual", sol.diagnostics.ode_residual)?;
    diagnostics.set_item(
        "oracle_gap",
        max_relative_gap(&sol.trajectory, &stepper).map_err(py_err)?,
    )?;
    diagnostics.set_item("apriori_holds", sol.diagnostics.apriori.holds)?;
    diagnostics.set_item("apriori_lhs", sol.diagnostics.apriori.lhs)?;
    diagnostics.set_item("apriori_rhs", sol.diagnostics.apriori.rhs)?;
    diagnostics.set_item("apriori_constant", sol.diagnostics.apriori.constant)?;
    Ok(((&sol.trajectory).into(), diagnostics))
}

/// Recovers `f_k` in `f_k(t) = f_k g(t)` from `u(0) = phi` and `u(T) = eta`,
/// with `g = c + e t` bounded by `alpha0 <= g <= beta0`.
#[pyfunction]
#[pyo3(signature = (spectrum, phi, eta, q=0.5, horizon=1.0, upsilon=(1.0, 0.0), g=(1.0, 0.0), alpha0=None, beta0=None, d=0.0, n_terms=None))]
#[allow(clippy::too_many_arguments)]
fn solve_inverse<'py>(
    py: Python<'py>,
    spectrum: &PySpectrum,
    phi: Vec<f64>,
    eta: Vec<f64>,
    q: f64,
    horizon: f64,
    upsilon: (f64, f64),
    g: (f64, f64),
    alpha0: Option<f64>,
    beta0: Option<f64>,
    d: f64,
    n_terms: Option<usize>,
) -> PyResult<(Vec<f64>, PyTrajectory, Bound<'py, PyDict>)> {
    let qp = params(q, n_terms)?;
    let (gf, low, high) = affine(g.0, g.1, horizon);
    let shape = SourceProfile::new(gf, alpha0.unwrap_or(low), beta0.unwrap_or(high), horizon, &qp).map_err(py_err)?;
    let problem = InverseProblem::new(
        spectrum.inner.clone(),
        affine_profile(upsilon, horizon, &qp)?,
        phi.into(),
        eta.into(),
        shape,
        horizon,
        qp,
        d,
    )
    .map_err(py_err)?;
    let sol = qheat::solve_inverse(&problem).map_err(|e| match e {
        QHeatError::DegenerateDenominator { .. } => PyRuntimeError::new_err(e.to_string()),
        other => py_err(other),
    })?;
    let diag = sol.diagnostics;
    let diagnostics = PyDict::new(py);
    diagnostics.set_item("roundtrip_error", diag.roundtrip_error)?;
    diagnostics.set_item("ode_residual", diag.ode_residual)?;
    diagnostics.set_item("stability_holds", diag.stability.holds)?;
    diagnostics.set_item("source_bound_holds", diag.stability.source_bound_holds)?;
    diagnostics.set_item("source_margin", diag.stability.source_margin)?;
    Ok((sol.f.into_vec(), (&sol.trajectory).into(), diagnostics))
}

#[pymodule]
fn pyqheat(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(q_number, m)?)?;
    m.add_function(wrap_pyfunction!(q_factorial, m)?)?;
    m.add_function(wrap_pyfunction!(e_q, m)?)?;
    m.add_function(wrap_pyfunction!(big_e_q, m)?)?;
    m.add_function(wrap_pyfunction!(jackson_integral, m)?)?;
    m.add_function(wrap_pyfunction!(solve_direct, m)?)?;
    m.add_function(wrap_pyfunction!(solve_inverse, m)?)?;
    m.add_class::<PySpectrum>()?;
    m.add_class::<PyTrajectory>()?;
    Ok(())
}
