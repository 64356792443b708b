//! Python bindings: the noise family, semi-supervised samples, the five
//! estimators, and the statistical-gain calculus.
//!
//! Build with `cargo build -p sslreg-python --release`; the produced
//! `libsslreg_py.so` imports as the module `sslreg_py` (see
//! `python/smoke_test.py`).

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use sslreg_core::asymptotics;
use sslreg_core::data;
use sslreg_core::error::Error as CoreError;
use sslreg_core::estimators;
use sslreg_core::likelihood::LikelihoodContext;
use sslreg_core::montecarlo;
use sslreg_core::noise;
use sslreg_core::numeric::linalg::Matrix;
use sslreg_core::numeric::rng::SeedStream;
use sslreg_core::optimize::OptimizerConfig;

fn pyerr(err: CoreError) -> PyErr {
    match err {
        CoreError::Io(_) => PyIOError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn matrix_from_rows(rows: Vec<Vec<f64>>, what: &str) -> PyResult<Matrix> {
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, 0));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err(format!("{what}: ragged rows")));
    }
    Ok(Matrix::from_rows(&rows))
}

fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows).map(|i| m.row(i).to_vec()).collect()
}

/// Exponential-power noise density `f(t) = c_a exp(-(|t|/d)^a)`.
#[pyclass(name = "NoiseDensity", frozen)]
struct PyNoiseDensity {
    inner: noise::NoiseDensity,
}

#[pymethods]
impl PyNoiseDensity {
    #[new]
    fn new(alpha: f64, d: f64) -> PyResult<Self> {
        Ok(PyNoiseDensity {
            inner: noise::NoiseDensity::new(alpha, d).map_err(pyerr)?,
        })
    }

    /// Centered Gaussian with standard deviation `sigma`.
    #[staticmethod]
    fn gaussian(sigma: f64) -> PyResult<Self> {
        Ok(PyNoiseDensity {
            inner: noise::NoiseDensity::gaussian(sigma).map_err(pyerr)?,
        })
    }

    /// Laplace with intensity `mu`.
    #[staticmethod]
    fn laplace(mu: f64) -> PyResult<Self> {
        Ok(PyNoiseDensity {
            inner: noise::NoiseDensity::laplace(mu).map_err(pyerr)?,
        })
    }

    /// Unit-variance member with the given exponent.
    #[staticmethod]
    fn standardized(alpha: f64) -> PyResult<Self> {
        Ok(PyNoiseDensity {
            inner: noise::NoiseDensity::standardized(alpha).map_err(pyerr)?,
        })
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn d(&self) -> f64 {
        self.inner.d
    }

    #[getter]
    fn c_alpha(&self) -> f64 {
        self.inner.c_alpha
    }

    fn pdf(&self, t: f64) -> f64 {
        self.inner.pdf(t)
    }

    fn log_pdf(&self, t: f64) -> f64 {
        self.inner.log_pdf(t)
    }

    /// Density derivative of the given order (0, 1 or 2).
    fn derivative(&self, t: f64, order: usize) -> PyResult<f64> {
        self.inner.evaluate(t, order).map_err(pyerr)
    }

    fn cdf(&self, t: f64) -> f64 {
        self.inner.cdf(t)
    }

    fn variance(&self) -> f64 {
        self.inner.variance()
    }

    fn fisher_integral(&self) -> f64 {
        self.inner.fisher_integral()
    }

    /// Deterministic i.i.d. draws for the given seed.
    fn sample(&self, seed: u64, count: usize) -> Vec<f64> {
        let mut rng = SeedStream::new(seed);
        self.inner.sample(&mut rng, count)
    }

    fn __repr__(&self) -> String {
        format!(
            "NoiseDensity(alpha={}, d={})",
            self.inner.alpha, self.inner.d
        )
    }
}

/// Matched pairs plus unlinked unmatched covariate/response blocks.
#[pyclass(name = "Sample", frozen)]
struct PySample {
    inner: data::SemiSupervisedSample,
}

#[pymethods]
impl PySample {
    #[new]
    #[pyo3(signature = (matched_x, matched_y, unmatched_x=Vec::new(), unmatched_y=Vec::new()))]
    fn new(
        matched_x: Vec<Vec<f64>>,
        matched_y: Vec<f64>,
        unmatched_x: Vec<Vec<f64>>,
        unmatched_y: Vec<f64>,
    ) -> PyResult<Self> {
        let p = matched_x.first().map(|r| r.len()).unwrap_or(0);
        let mut mx = matrix_from_rows(matched_x, "matched_x")?;
        let mut ux = matrix_from_rows(unmatched_x, "unmatched_x")?;
        if mx.rows == 0 {
            mx = Matrix::zeros(0, ux.cols.max(p));
        }
        if ux.rows == 0 {
            ux = Matrix::zeros(0, mx.cols);
        }
        Ok(PySample {
            inner: data::SemiSupervisedSample::new(mx, matched_y, ux, unmatched_y)
                .map_err(pyerr)?,
        })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n_y()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn lambda_hat(&self) -> Option<f64> {
        if self.inner.n_y() > 0 {
            Some(self.inner.lambda_hat())
        } else {
            None
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Sample(m={}, n={}, p={})",
            self.inner.m(),
            self.inner.n_y(),
            self.inner.p()
        )
    }
}

/// Load matched (and optionally unmatched) blocks from CSV files.
#[pyfunction]
#[pyo3(signature = (matched_path, response_column, covariate_columns, unmatched_covariates_path=None, unmatched_responses_path=None))]
fn load_csv(
    matched_path: &str,
    response_column: &str,
    covariate_columns: Vec<String>,
    unmatched_covariates_path: Option<&str>,
    unmatched_responses_path: Option<&str>,
) -> PyResult<PySample> {
    let cols: Vec<&str> = covariate_columns.iter().map(|s| s.as_str()).collect();
    let matched =
        data::load_csv(std::path::Path::new(matched_path), response_column, &cols).map_err(pyerr)?;
    let (ux, uy) = match (unmatched_covariates_path, unmatched_responses_path) {
        (Some(xp), Some(yp)) => {
            let ux = data::load_csv_columns(std::path::Path::new(xp), &cols).map_err(pyerr)?;
            let uy = data::load_csv(std::path::Path::new(yp), response_column, &[]).map_err(pyerr)?;
            (ux, uy.y)
        }
        (None, None) => (Matrix::zeros(0, cols.len()), Vec::new()),
        _ => {
            return Err(PyValueError::new_err(
                "unmatched covariate and response paths must be given together",
            ))
        }
    };
    Ok(PySample {
        inner: data::SemiSupervisedSample::new(matched.x, matched.y, ux, uy).map_err(pyerr)?,
    })
}

/// Result of one estimator run.
#[pyclass(name = "Fit", frozen)]
struct PyFit {
    #[pyo3(get)]
    method: String,
    #[pyo3(get)]
    beta: Vec<f64>,
    #[pyo3(get)]
    intercept: Option<f64>,
    #[pyo3(get)]
    lambda_hat: Option<f64>,
    #[pyo3(get)]
    value: f64,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    gradient_norm: f64,
    #[pyo3(get)]
    warnings: Vec<String>,
}

impl From<estimators::RegressionFit> for PyFit {
    fn from(fit: estimators::RegressionFit) -> Self {
        PyFit {
            method: format!("{:?}", fit.method),
            beta: fit.beta,
            intercept: fit.intercept,
            lambda_hat: fit.lambda_hat,
            value: fit.diagnostics.value,
            converged: fit.diagnostics.converged,
            iterations: fit.diagnostics.iterations,
            gradient_norm: fit.diagnostics.gradient_norm,
            warnings: fit.warnings,
        }
    }
}

#[pymethods]
impl PyFit {
    fn predict(&self, x_row: Vec<f64>) -> f64 {
        self.intercept.unwrap_or(0.0)
            + self.beta.iter().zip(&x_row).map(|(b, x)| b * x).sum::<f64>()
    }

    fn __repr__(&self) -> String {
        format!("Fit(method={}, beta={:?})", self.method, self.beta)
    }
}

fn optimizer_config(seed: u64, restarts: usize, tolerance: f64, radius: f64) -> OptimizerConfig {
    let mut config = OptimizerConfig::new(radius);
    config.seed = seed;
    config.restarts = restarts;
    config.gradient_tolerance = tolerance;
    config
}

/// Maximize the combined matched + unmatched likelihood.
#[pyfunction]
#[pyo3(signature = (sample, noise, with_intercept=false, seed=0, restarts=8, tolerance=1e-8))]
fn fit_sslemle(
    sample: &PySample,
    noise: &PyNoiseDensity,
    with_intercept: bool,
    seed: u64,
    restarts: usize,
    tolerance: f64,
) -> PyResult<PyFit> {
    let config = optimizer_config(seed, restarts, tolerance, 1.0);
    estimators::fit_sslemle(&sample.inner, noise.inner, &config, with_intercept)
        .map(PyFit::from)
        .map_err(pyerr)
}

#[pyfunction]
#[pyo3(signature = (sample, noise, seed=0, restarts=8, tolerance=1e-8))]
fn fit_matched_mle(
    sample: &PySample,
    noise: &PyNoiseDensity,
    seed: u64,
    restarts: usize,
    tolerance: f64,
) -> PyResult<PyFit> {
    let config = optimizer_config(seed, restarts, tolerance, 1.0);
    estimators::fit_matched_mle(&sample.inner, noise.inner, &config)
        .map(PyFit::from)
        .map_err(pyerr)
}

#[pyfunction]
#[pyo3(signature = (sample, with_intercept=false))]
fn fit_olse(sample: &PySample, with_intercept: bool) -> PyResult<PyFit> {
    estimators::fit_olse(&sample.inner, with_intercept)
        .map(PyFit::from)
        .map_err(pyerr)
}

/// Deconvolution least squares from the unmatched sample alone.
#[pyfunction]
#[pyo3(signature = (sample, noise, search_radius=50.0, seed=0, tolerance=1e-7))]
fn fit_dlse(
    sample: &PySample,
    noise: &PyNoiseDensity,
    search_radius: f64,
    seed: u64,
    tolerance: f64,
) -> PyResult<PyFit> {
    let config = optimizer_config(seed, 16, tolerance, search_radius);
    estimators::fit_dlse(&sample.inner, noise.inner, &config)
        .map(PyFit::from)
        .map_err(pyerr)
}

#[pyfunction]
#[pyo3(signature = (sample, search_radius=50.0, seed=0, restarts=4, tolerance=1e-8))]
fn fit_logistic_sslemle(
    sample: &PySample,
    search_radius: f64,
    seed: u64,
    restarts: usize,
    tolerance: f64,
) -> PyResult<PyFit> {
    let config = optimizer_config(seed, restarts, tolerance, search_radius);
    estimators::fit_logistic_sslemle(&sample.inner, &config)
        .map(PyFit::from)
        .map_err(pyerr)
}

/// Combined log-likelihood value at `beta`.
#[pyfunction]
fn loglik(sample: &PySample, noise: &PyNoiseDensity, beta: Vec<f64>) -> PyResult<f64> {
    LikelihoodContext::new(&sample.inner, noise.inner)
        .and_then(|ctx| ctx.loglik(&beta))
        .map_err(pyerr)
}

/// Analytic score at `beta`.
#[pyfunction]
fn score(sample: &PySample, noise: &PyNoiseDensity, beta: Vec<f64>) -> PyResult<Vec<f64>> {
    LikelihoodContext::new(&sample.inner, noise.inner)
        .and_then(|ctx| ctx.score(&beta))
        .map_err(pyerr)
}

/// Radius of the ball certified to contain a maximizer, with `A*`.
#[pyfunction]
fn existence_radius<'py>(
    py: Python<'py>,
    sample: &PySample,
    noise: &PyNoiseDensity,
) -> PyResult<Bound<'py, PyDict>> {
    let cert = LikelihoodContext::new(&sample.inner, noise.inner)
        .and_then(|ctx| ctx.existence_radius())
        .map_err(pyerr)?;
    let dict = PyDict::new(py);
    dict.set_item("radius", cert.radius)?;
    dict.set_item("a_star", cert.a_star)?;
    dict.set_item("direction", cert.direction)?;
    Ok(dict)
}

fn gain_report_to_dict<'py>(
    py: Python<'py>,
    report: &asymptotics::GainReport,
) -> PyResult<Bound<'py, PyDict>> {
    let dict = PyDict::new(py);
    dict.set_item("gain", report.gain)?;
    dict.set_item("lambda", report.lambda)?;
    dict.set_item("eta", report.eta)?;
    dict.set_item("snr", report.snr)?;
    dict.set_item("zeta", report.zeta)?;
    dict.set_item("rho", report.rho)?;
    dict.set_item("route", format!("{:?}", report.route))?;
    Ok(dict)
}

/// Closed-form statistical gain for a Gaussian design, cross-checked
/// against the determinant route.
#[pyfunction]
#[pyo3(signature = (beta0, sigma_eps, lam, mu_x=None, sigma_x=None))]
fn gain_closed_form<'py>(
    py: Python<'py>,
    beta0: Vec<f64>,
    sigma_eps: f64,
    lam: f64,
    mu_x: Option<Vec<f64>>,
    sigma_x: Option<Vec<Vec<f64>>>,
) -> PyResult<Bound<'py, PyDict>> {
    let p = beta0.len();
    let mu = mu_x.unwrap_or_else(|| vec![0.0; p]);
    let cov = match sigma_x {
        Some(rows) => matrix_from_rows(rows, "sigma_x")?,
        None => Matrix::identity(p),
    };
    let model = asymptotics::GaussianDesignModel::new(beta0, mu, cov, sigma_eps).map_err(pyerr)?;
    let closed = asymptotics::gain_closed_form(&model, lam).map_err(pyerr)?;
    let bundle = asymptotics::covariances_gaussian(&model, lam).map_err(pyerr)?;
    let generic = asymptotics::gain_generic(&bundle).map_err(pyerr)?;
    let dict = gain_report_to_dict(py, &closed)?;
    dict.set_item("gain_determinant_route", generic.gain)?;
    dict.set_item("sigma_ssl_tilde", matrix_to_rows(&bundle.sigma_ssl_tilde))?;
    dict.set_item("sigma_mmle", matrix_to_rows(&bundle.sigma_mmle))?;
    Ok(dict)
}

/// Peak analysis of the zero-mean gain as a function of the squared SNR.
#[pyfunction]
fn gain_analysis(py: Python<'_>, lam: f64) -> PyResult<Bound<'_, PyDict>> {
    let report = asymptotics::gain_analysis(lam).map_err(pyerr)?;
    let dict = PyDict::new(py);
    dict.set_item("lambda", report.lambda)?;
    dict.set_item("eta_peak", report.eta_peak)?;
    dict.set_item("gain_at_peak", report.gain_at_peak)?;
    dict.set_item("small_lambda_eta_star", report.small_lambda_eta_star)?;
    dict.set_item("small_lambda_coefficient", report.small_lambda_coefficient)?;
    dict.set_item("unimodal_verified", report.unimodal_verified)?;
    Ok(dict)
}

/// The 15 simulation regression vectors.
#[pyfunction]
fn beta_grid(seed: u64) -> Vec<Vec<f64>> {
    montecarlo::beta_grid(seed)
}

/// Run a tabulated simulation setting; returns one dict per curve point.
#[pyfunction]
#[pyo3(signature = (setting_index, lam, n, replications, seed, beta_points=Vec::new()))]
fn run_setting(
    py: Python<'_>,
    setting_index: u8,
    lam: f64,
    n: usize,
    replications: usize,
    seed: u64,
    beta_points: Vec<usize>,
) -> PyResult<Vec<Bound<'_, PyDict>>> {
    let mut setting =
        montecarlo::SimulationSetting::table_preset(setting_index, lam, n, seed).map_err(pyerr)?;
    setting.replications = replications;
    setting.beta_point_indices = beta_points;
    let curve = montecarlo::run_setting(&setting).map_err(pyerr)?;
    curve
        .rows
        .iter()
        .map(|row| {
            let dict = PyDict::new(py);
            dict.set_item("snr", row.snr)?;
            dict.set_item("gain_theoretical", row.gain_theoretical)?;
            dict.set_item("gain_empirical", row.gain_empirical)?;
            dict.set_item("gain_vs_mmle", row.gain_vs_mmle)?;
            dict.set_item("mc_se", row.mc_se)?;
            dict.set_item("n", row.n)?;
            dict.set_item("m", row.m)?;
            dict.set_item("lambda", row.lambda)?;
            dict.set_item("setting_index", row.setting_index)?;
            dict.set_item("excluded_replications", row.excluded_replications)?;
            Ok(dict)
        })
        .collect()
}

#[pymodule]
fn sslreg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNoiseDensity>()?;
    m.add_class::<PySample>()?;
    m.add_class::<PyFit>()?;
    m.add_function(wrap_pyfunction!(load_csv, m)?)?;
    m.add_function(wrap_pyfunction!(fit_sslemle, m)?)?;
    m.add_function(wrap_pyfunction!(fit_matched_mle, m)?)?;
    m.add_function(wrap_pyfunction!(fit_olse, m)?)?;
    m.add_function(wrap_pyfunction!(fit_dlse, m)?)?;
    m.add_function(wrap_pyfunction!(fit_logistic_sslemle, m)?)?;
    m.add_function(wrap_pyfunction!(loglik, m)?)?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(existence_radius, m)?)?;
    m.add_function(wrap_pyfunction!(gain_closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(gain_analysis, m)?)?;
    m.add_function(wrap_pyfunction!(beta_grid, m)?)?;
    m.add_function(wrap_pyfunction!(run_setting, m)?)?;
    Ok(())
}
