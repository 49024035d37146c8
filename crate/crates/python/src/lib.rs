//! Python bindings for `gpmle`.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gpmle::covariance::{microergodic as microergodic_rs, KernelSpec, ParamBounds, ParamVector};
use gpmle::gausslin::{build_cov, chol, JitterPolicy};
use gpmle::simulate::{gen_fixed, gen_increasing, sample_gp, FixedMode, SeedSpec};
use gpmle::{harness, mle, specfun};

fn to_py(e: gpmle::Error) -> PyErr {
    match e {
        gpmle::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn theta(sigma2: f64, alpha: f64) -> PyResult<ParamVector> {
    ParamVector::new(sigma2, alpha).map_err(to_py)
}

/// Isotropic covariance kernel with parameters (sigma2, alpha).
#[pyclass(name = "Kernel", module = "gpmle", frozen)]
struct PyKernel {
    spec: KernelSpec,
}

#[pymethods]
impl PyKernel {
    /// `family` is "exponential", "squared_exponential" or "matern"; `nu` is
    /// required for "matern" only.
    #[new]
    #[pyo3(signature = (family, nu=None))]
    fn new(family: &str, nu: Option<f64>) -> PyResult<Self> {
        let spec = match (family, nu) {
            ("exponential", None) => KernelSpec::exponential(),
            ("squared_exponential", None) => KernelSpec::squared_exponential(),
            ("matern", Some(nu)) => KernelSpec::matern(nu).map_err(to_py)?,
            ("matern", None) => return Err(PyValueError::new_err("matern needs nu")),
            (f, Some(_)) if f == "exponential" || f == "squared_exponential" => {
                return Err(PyValueError::new_err(format!("{f} takes no nu")))
            }
            (f, _) => return Err(PyValueError::new_err(format!("unknown family {f}"))),
        };
        Ok(Self { spec })
    }

    #[getter]
    fn family(&self) -> String {
        self.spec.family().to_string()
    }

    #[getter]
    fn nu(&self) -> Option<f64> {
        self.spec.smoothness()
    }

    fn eval(&self, sigma2: f64, alpha: f64, r: f64) -> PyResult<f64> {
        self.spec.eval(&theta(sigma2, alpha)?, r).map_err(to_py)
    }

    /// `(dk/dsigma2, dk/dalpha)` at lag `r`.
    fn grad_params(&self, sigma2: f64, alpha: f64, r: f64) -> PyResult<(f64, f64)> {
        let g = self.spec.grad_params(&theta(sigma2, alpha)?, r).map_err(to_py)?;
        Ok((g[0], g[1]))
    }

    fn spectral_density(&self, sigma2: f64, alpha: f64, omega: f64, d: usize) -> PyResult<f64> {
        self.spec.spectral_density(&theta(sigma2, alpha)?, omega, d).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        match self.spec.nu() {
            Some(nu) => format!("Kernel('{}', nu={nu})", self.spec.family()),
            None => format!("Kernel('{}')", self.spec.family()),
        }
    }
}

/// Ordered set of observation points.
#[pyclass(name = "Design", module = "gpmle", frozen)]
struct PyDesign {
    design: gpmle::Design,
}

#[pymethods]
impl PyDesign {
    #[new]
    fn new(points: Vec<Vec<f64>>) -> PyResult<Self> {
        Ok(Self {
            design: gpmle::Design::new(points, None).map_err(to_py)?,
        })
    }

    /// Perturbed regular grid with minimum separation `delta`.
    #[staticmethod]
    #[pyo3(signature = (n, d=1, delta=1.0, perturb=0.2, seed=0, replicate=0))]
    fn increasing(n: usize, d: usize, delta: f64, perturb: f64, seed: u64, replicate: u64) -> PyResult<Self> {
        Ok(Self {
            design: gen_increasing(n, d, delta, perturb, SeedSpec::new(seed, replicate)).map_err(to_py)?,
        })
    }

    /// Points in the unit cube; `mode` is "uniform" or "grid".
    #[staticmethod]
    #[pyo3(signature = (n, d=1, mode="uniform", seed=0, replicate=0))]
    fn fixed(n: usize, d: usize, mode: &str, seed: u64, replicate: u64) -> PyResult<Self> {
        let mode = match mode {
            "uniform" => FixedMode::Uniform,
            "grid" => FixedMode::Grid,
            other => return Err(PyValueError::new_err(format!("unknown mode {other}"))),
        };
        let domain = gpmle::DomainBox::unit(d);
        Ok(Self {
            design: gen_fixed(n, d, &domain, mode, SeedSpec::new(seed, replicate)).map_err(to_py)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.design.dim()
    }

    fn points(&self) -> Vec<Vec<f64>> {
        self.design.points().map(<[f64]>::to_vec).collect()
    }

    fn __len__(&self) -> usize {
        self.design.len()
    }
}

#[pyfunction]
fn bessel_k(nu: f64, x: f64) -> PyResult<f64> {
    specfun::bessel_k(nu, x).map_err(to_py)
}

#[pyfunction]
fn log_gamma(x: f64) -> PyResult<f64> {
    specfun::log_gamma(x).map_err(to_py)
}

#[pyfunction]
fn microergodic(sigma2: f64, alpha: f64, nu: f64) -> PyResult<f64> {
    Ok(microergodic_rs(&theta(sigma2, alpha)?, nu))
}

/// Covariance matrix as a list of rows.
#[pyfunction]
fn covariance_matrix(kernel: &PyKernel, sigma2: f64, alpha: f64, design: &PyDesign) -> PyResult<Vec<Vec<f64>>> {
    let cov = build_cov(&kernel.spec, &theta(sigma2, alpha)?, &design.design).map_err(to_py)?;
    let m = cov.matrix();
    Ok((0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect())
}

/// One exact draw of the zero-mean field on the design.
#[pyfunction]
#[pyo3(signature = (kernel, sigma2, alpha, design, seed=0, replicate=0))]
fn simulate(kernel: &PyKernel, sigma2: f64, alpha: f64, design: &PyDesign, seed: u64, replicate: u64) -> PyResult<Vec<f64>> {
    let cov = build_cov(&kernel.spec, &theta(sigma2, alpha)?, &design.design).map_err(to_py)?;
    let factor = chol(&cov, JitterPolicy::Jitter).map_err(to_py)?;
    Ok(sample_gp(&factor, SeedSpec::new(seed, replicate)))
}

#[pyfunction]
fn criterion(kernel: &PyKernel, sigma2: f64, alpha: f64, design: &PyDesign, y: Vec<f64>) -> PyResult<f64> {
    mle::criterion_ln(&kernel.spec, &theta(sigma2, alpha)?, &design.design, &y).map_err(to_py)
}

#[pyfunction]
fn gradient(kernel: &PyKernel, sigma2: f64, alpha: f64, design: &PyDesign, y: Vec<f64>) -> PyResult<(f64, f64)> {
    let g = mle::grad_ln(&kernel.spec, &theta(sigma2, alpha)?, &design.design, &y).map_err(to_py)?;
    Ok((g[0], g[1]))
}

#[pyfunction]
fn profile_sigma2(kernel: &PyKernel, alpha: f64, design: &PyDesign, y: Vec<f64>) -> PyResult<f64> {
    mle::profile_sigma2(&kernel.spec, alpha, &design.design, &y).map_err(to_py)
}

/// Maximum likelihood fit; returns a dict with the fitted parameters and
/// diagnostics.
#[pyfunction]
#[pyo3(signature = (kernel, design, y, alpha_inf=0.1, alpha_sup=10.0, multistart=2))]
fn fit<'py>(
    py: Python<'py>,
    kernel: &PyKernel,
    design: &PyDesign,
    y: Vec<f64>,
    alpha_inf: f64,
    alpha_sup: f64,
    multistart: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let bounds = ParamBounds::new(alpha_inf, alpha_sup).map_err(to_py)?;
    let result = mle::fit_full(&kernel.spec, &design.design, &y, &bounds, multistart).map_err(to_py)?;
    let record = mle::FitRecord::from(&result);
    let out = PyDict::new(py);
    out.set_item("sigma2_hat", record.sigma2_hat)?;
    out.set_item("alpha_hat", record.alpha_hat)?;
    out.set_item("criterion", record.criterion)?;
    out.set_item("microergodic_hat", record.microergodic_hat)?;
    out.set_item("n_evals", record.n_evals)?;
    out.set_item(
        "at_bound",
        match record.at_bound {
            mle::AtBound::None => "none",
            mle::AtBound::Lower => "lower",
            mle::AtBound::Upper => "upper",
        },
    )?;
    out.set_item("sigma2_clamped", record.sigma2_clamped)?;
    out.set_item("jitter_used", record.jitter_used)?;
    Ok(out)
}

/// The 2x2 matrix `(1/2n) tr(R^-1 dR_i R^-1 dR_j)`.
#[pyfunction]
fn fisher(kernel: &PyKernel, sigma2: f64, alpha: f64, design: &PyDesign) -> PyResult<Vec<Vec<f64>>> {
    let f = mle::fisher_matrix(&kernel.spec, &theta(sigma2, alpha)?, &design.design).map_err(to_py)?;
    Ok(f.sigma.iter().map(|row| row.to_vec()).collect())
}

#[pyfunction]
fn var_ln(kernel: &PyKernel, sigma2: f64, alpha: f64, sigma2_0: f64, alpha_0: f64, design: &PyDesign) -> PyResult<f64> {
    mle::var_ln(&kernel.spec, &theta(sigma2, alpha)?, &theta(sigma2_0, alpha_0)?, &design.design).map_err(to_py)
}

/// Runs an experiment from a JSON config string and returns
/// `(records_csv, summary_json)`.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_json: &str) -> PyResult<(String, String)> {
    let config = gpmle::config::parse_config_str(config_json, &[]).map_err(to_py)?;
    let report = py.detach(|| harness::run(&config)).map_err(to_py)?;
    let mut records = Vec::new();
    report.write_records_csv(&mut records).map_err(to_py)?;
    let mut summary = Vec::new();
    report.write_summary_json(&mut summary).map_err(to_py)?;
    Ok((
        String::from_utf8(records).expect("csv is utf-8"),
        String::from_utf8(summary).expect("json is utf-8"),
    ))
}

#[pymodule]
#[pyo3(name = "gpmle")]
fn gpmle_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyKernel>()?;
    m.add_class::<PyDesign>()?;
    m.add_function(wrap_pyfunction!(bessel_k, m)?)?;
    m.add_function(wrap_pyfunction!(log_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(microergodic, m)?)?;
    m.add_function(wrap_pyfunction!(covariance_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(criterion, m)?)?;
    m.add_function(wrap_pyfunction!(gradient, m)?)?;
    m.add_function(wrap_pyfunction!(profile_sigma2, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(fisher, m)?)?;
    m.add_function(wrap_pyfunction!(var_ln, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
