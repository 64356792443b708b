//! `sslreg` command line: fit estimators on CSV data, compute statistical
//! gains, run simulation settings, and execute the golden-sample data
//! protocol. Every run is reproducible from its config plus seed; outputs
//! are written byte-identically on reruns.

mod config;

use clap::{Parser, Subcommand};
use config::{DataAppConfig, FitConfig, GainConfig, SdSpec, SimulateConfig};
use serde::Serialize;
use sslreg_core::asymptotics::{
    confidence_region, covariances_gaussian, gain_analysis, gain_closed_form, gain_generic,
    GaussianDesignModel,
};
use sslreg_core::data::{load_csv, Dataset, SemiSupervisedSample};
use sslreg_core::error::Error as CoreError;
use sslreg_core::estimators::{
    fit_dlse, fit_logistic_sslemle, fit_matched_mle, fit_olse, fit_sslemle, ols_solve,
    Method, RegressionFit,
};
use sslreg_core::montecarlo::{run_setting, SimulationSetting};
use sslreg_core::noise::NoiseDensity;
use sslreg_core::numeric::linalg::{dot, Matrix};
use sslreg_core::optimize::OptimizerConfig;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "sslreg",
    about = "Semi-supervised linear regression from matched and unmatched samples"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an estimator on CSV data and write a JSON report.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate theoretical statistical gains for a Gaussian design.
    Gain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a simulation setting and write the gain curve as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Golden-sample protocol on a real data set; writes a per-n CSV summary.
    DataApp {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Distinct exit codes per failure family, with a one-line JSON report on
/// standard error.
#[derive(Debug)]
struct CliError {
    code: u8,
    kind: &'static str,
    message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            kind: "config",
            message: message.into(),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        let (code, kind) = match &err {
            CoreError::Io(_) => (3, "io"),
            CoreError::MissingColumn(_) | CoreError::ParseCell { .. } | CoreError::MalformedCsv(_) => {
                (4, "csv")
            }
            CoreError::Sizing(_)
            | CoreError::DimensionMismatch(_)
            | CoreError::RankDeficient { .. }
            | CoreError::DegenerateColumn(_) => (5, "data"),
            CoreError::EstimationFailed(_)
            | CoreError::BadStart
            | CoreError::NotPositiveDefinite(_)
            | CoreError::NonDifferentiable(_) => (6, "estimation"),
            CoreError::Domain(_) | CoreError::UnsupportedModel(_) | CoreError::UnsupportedOrder { .. } => {
                (7, "domain")
            }
        };
        CliError {
            code,
            kind,
            message: err.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit {
            config,
            seed,
            threads,
            out,
        } => setup_threads(threads).and_then(|()| cmd_fit(&config, seed, out)),
        Command::Gain { config, out } => cmd_gain(&config, out),
        Command::Simulate {
            config,
            seed,
            threads,
            out,
        } => setup_threads(threads).and_then(|()| cmd_simulate(&config, seed, out)),
        Command::DataApp {
            config,
            seed,
            threads,
            out,
        } => setup_threads(threads).and_then(|()| cmd_data_app(&config, seed, out)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!(
                "{}",
                serde_json::json!({
                    "error": { "code": err.code, "kind": err.kind, "message": err.message }
                })
            );
            ExitCode::from(err.code)
        }
    }
}

fn setup_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError {
        code: 3,
        kind: "io",
        message: format!("cannot read config {}: {e}", path.display()),
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("bad config: {e}")))
}

fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError {
        code: 3,
        kind: "io",
        message: format!("cannot write {}: {e}", path.display()),
    })
}

/// Load the matched table plus optional unmatched blocks.
fn load_sample(cfg: &FitConfig) -> Result<(SemiSupervisedSample, Dataset), CliError> {
    let cols: Vec<&str> = cfg.covariate_columns.iter().map(|s| s.as_str()).collect();
    let matched = load_csv(Path::new(&cfg.matched_path), &cfg.response_column, &cols)?;
    let (ux, uy) = match (&cfg.unmatched_covariates_path, &cfg.unmatched_responses_path) {
        (Some(xp), Some(yp)) => {
            let ux = sslreg_core::data::load_csv_columns(Path::new(xp), &cols)?;
            let uy = load_csv(Path::new(yp), &cfg.response_column, &[])?;
            (ux, uy.y)
        }
        (None, None) => (Matrix::zeros(0, cols.len()), Vec::new()),
        _ => {
            return Err(CliError::config(
                "unmatched covariates and responses paths must be given together",
            ))
        }
    };
    let sample = SemiSupervisedSample::new(matched.x.clone(), matched.y.clone(), ux, uy)?;
    Ok((sample, matched))
}

/// Residual standard deviation of an OLS pre-fit on the matched rows.
fn matched_residual_sd(sample: &SemiSupervisedSample, with_intercept: bool) -> Result<f64, CliError> {
    let m = sample.m();
    let p = sample.p() + usize::from(with_intercept);
    if m <= p {
        return Err(CliError::from(CoreError::Sizing(format!(
            "cannot estimate the noise scale from {m} matched rows with {p} parameters"
        ))));
    }
    let (beta, intercept) = ols_solve(&sample.matched_x, &sample.matched_y, with_intercept)?;
    let mut ssr = 0.0;
    for k in 0..m {
        let r = sample.matched_y[k]
            - intercept.unwrap_or(0.0)
            - dot(sample.matched_x.row(k), &beta);
        ssr += r * r;
    }
    Ok((ssr / (m - p) as f64).sqrt())
}

#[derive(Serialize)]
struct NoiseReport {
    alpha: f64,
    sd: f64,
    scale_d: f64,
    estimated_from_matched: bool,
}

#[derive(Serialize)]
struct FitReport {
    method: Method,
    coefficients: Vec<f64>,
    intercept: Option<f64>,
    lambda_hat: Option<f64>,
    noise: Option<NoiseReport>,
    diagnostics: sslreg_core::optimize::OptimResult,
    warnings: Vec<String>,
    confidence_ellipsoid: Option<sslreg_core::asymptotics::EllipsoidReport>,
    confidence_note: String,
}

fn cmd_fit(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg: FitConfig = read_config(config_path)?;
    cfg.noise.validate().map_err(CliError::config)?;
    let (sample, _) = load_sample(&cfg)?;
    let seed = seed.or(cfg.seed).unwrap_or(0);
    let sd = match (&cfg.noise.sd, cfg.noise.is_estimated()) {
        (SdSpec::Value(v), _) => *v,
        (_, true) => matched_residual_sd(&sample, cfg.with_intercept)?,
        _ => unreachable!("validated above"),
    };
    let noise = cfg.noise.density_with_sd(sd)?;
    let mut opt = OptimizerConfig::new(cfg.search_radius.unwrap_or(50.0));
    opt.gradient_tolerance = cfg.tolerance;
    opt.restarts = cfg.restarts;
    opt.seed = seed;
    let fit: RegressionFit = match cfg.estimator.as_str() {
        "sslemle" => fit_sslemle(&sample, noise, &opt, cfg.with_intercept)?,
        "matched-mle" => fit_matched_mle(&sample, noise, &opt)?,
        "olse" => fit_olse(&sample, cfg.with_intercept)?,
        "dlse" => fit_dlse(&sample, noise, &opt)?,
        "logistic-sslemle" => fit_logistic_sslemle(&sample, &opt)?,
        other => {
            return Err(CliError::config(format!(
                "unknown estimator {other:?}; expected sslemle | matched-mle | olse | dlse | logistic-sslemle"
            )))
        }
    };
    let (ellipsoid, note) = build_ellipsoid(&cfg, &sample, &fit, sd);
    let report = FitReport {
        method: fit.method,
        coefficients: fit.beta.clone(),
        intercept: fit.intercept,
        lambda_hat: fit.lambda_hat,
        noise: if matches!(fit.method, Method::LogisticSslemle) {
            None
        } else {
            Some(NoiseReport {
                alpha: noise.alpha,
                sd,
                scale_d: noise.d,
                estimated_from_matched: cfg.noise.is_estimated(),
            })
        },
        diagnostics: fit.diagnostics.clone(),
        warnings: fit.warnings.clone(),
        confidence_ellipsoid: ellipsoid,
        confidence_note: note,
    };
    let json = serde_json::to_string_pretty(&report).expect("serializable report");
    match out {
        Some(path) => write_output(&path, &json)?,
        None => println!("{json}"),
    }
    Ok(())
}

/// Asymptotic confidence ellipsoid under a Gaussian-design approximation
/// with moments estimated from all covariate rows.
fn build_ellipsoid(
    cfg: &FitConfig,
    sample: &SemiSupervisedSample,
    fit: &RegressionFit,
    sd: f64,
) -> (Option<sslreg_core::asymptotics::EllipsoidReport>, String) {
    if cfg.with_intercept {
        return (
            None,
            "no ellipsoid: the intercept model's asymptotics are not covered".into(),
        );
    }
    if !matches!(fit.method, Method::Sslemle | Method::MatchedMle | Method::Olse) {
        return (None, "no ellipsoid available for this estimator".into(),);
    }
    if cfg.noise.alpha != 2.0 {
        return (
            None,
            "no ellipsoid: closed-form covariances need Gaussian noise".into(),
        );
    }
    let p = sample.p();
    let rows = sample.m() + sample.n_x();
    if rows < p + 2 {
        return (None, "no ellipsoid: too few covariate rows".into());
    }
    let mut all = Matrix::zeros(rows, p);
    for k in 0..sample.m() {
        all.data[k * p..(k + 1) * p].copy_from_slice(sample.matched_x.row(k));
    }
    for i in 0..sample.n_x() {
        let r = sample.m() + i;
        all.data[r * p..(r + 1) * p].copy_from_slice(sample.unmatched_x.row(i));
    }
    let mut mean = vec![0.0; p];
    for i in 0..rows {
        for j in 0..p {
            mean[j] += all[(i, j)];
        }
    }
    for v in mean.iter_mut() {
        *v /= rows as f64;
    }
    let mut cov = Matrix::zeros(p, p);
    for i in 0..rows {
        for a in 0..p {
            for b in 0..p {
                cov[(a, b)] += (all[(i, a)] - mean[a]) * (all[(i, b)] - mean[b]);
            }
        }
    }
    for v in cov.data.iter_mut() {
        *v /= (rows - 1) as f64;
    }
    let model = match GaussianDesignModel::new(fit.beta.clone(), mean, cov, sd) {
        Ok(m) => m,
        Err(e) => return (None, format!("no ellipsoid: {e}")),
    };
    let covariance = match fit.method {
        Method::Sslemle => {
            let Some(lambda) = fit.lambda_hat.filter(|l| *l > 0.0 && *l < 1.0) else {
                return (
                    None,
                    "no ellipsoid: lambda_hat outside (0,1), the asymptotics need both samples"
                        .into(),
                );
            };
            match covariances_gaussian(&model, lambda) {
                Ok(c) => c.sigma_ssl_tilde,
                Err(e) => return (None, format!("no ellipsoid: {e}")),
            }
        }
        _ => {
            let s2 = sslreg_core::asymptotics::sigma2(
                &NoiseDensity::gaussian(sd).expect("positive sd"),
                &model.second_moment(),
            );
            match sslreg_core::numeric::linalg::spd_inverse(&s2) {
                Ok(inv) => inv,
                Err(e) => return (None, format!("no ellipsoid: {e}")),
            }
        }
    };
    match confidence_region(&fit.beta, &covariance, cfg.confidence_level, sample.m()) {
        Ok(cr) => (
            Some(cr),
            "Gaussian-design approximation with moment-estimated covariate law".into(),
        ),
        Err(e) => (None, format!("no ellipsoid: {e}")),
    }
}

#[derive(Serialize)]
struct GainOutput {
    closed_form: sslreg_core::asymptotics::GainReport,
    determinant_route: sslreg_core::asymptotics::GainReport,
    covariances: sslreg_core::asymptotics::AsymptoticCovariances,
    analysis: Option<sslreg_core::asymptotics::UnimodalityReport>,
}

fn cmd_gain(config_path: &Path, out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg: GainConfig = read_config(config_path)?;
    let p = cfg.beta0.len();
    let mu = cfg.mu_x.clone().unwrap_or_else(|| vec![0.0; p]);
    if mu.len() != p {
        return Err(CliError::config("mu_x length must match beta0"));
    }
    let sigma_x = match &cfg.sigma_x {
        None => Matrix::identity(p),
        Some(serde_json::Value::Number(n)) => {
            let s = n.as_f64().unwrap_or(f64::NAN);
            Matrix::identity(p).scaled(s * s)
        }
        Some(serde_json::Value::Array(rows)) => {
            let parsed: Result<Vec<Vec<f64>>, _> = rows
                .iter()
                .map(|r| serde_json::from_value::<Vec<f64>>(r.clone()))
                .collect();
            let rows = parsed.map_err(|e| CliError::config(format!("sigma_x: {e}")))?;
            if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                return Err(CliError::config("sigma_x must be a p x p matrix"));
            }
            Matrix::from_rows(&rows)
        }
        Some(other) => {
            return Err(CliError::config(format!(
                "sigma_x must be a scalar scale or a matrix, got {other}"
            )))
        }
    };
    let model = GaussianDesignModel::new(cfg.beta0.clone(), mu, sigma_x, cfg.sigma_eps)?;
    let closed = gain_closed_form(&model, cfg.lambda)?;
    let cov = covariances_gaussian(&model, cfg.lambda)?;
    let determinant = gain_generic(&cov)?;
    let analysis = if cfg.analysis {
        Some(gain_analysis(cfg.lambda)?)
    } else {
        None
    };
    let output = GainOutput {
        closed_form: closed,
        determinant_route: determinant,
        covariances: cov,
        analysis,
    };
    let json = serde_json::to_string_pretty(&output).expect("serializable output");
    match out {
        Some(path) => write_output(&path, &json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn require_seed(flag: Option<u64>, cfg_seed: Option<u64>) -> Result<u64, CliError> {
    flag.or(cfg_seed).ok_or_else(|| {
        CliError::config("a seed is required (pass --seed or set \"seed\" in the config)")
    })
}

fn cmd_simulate(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg: SimulateConfig = read_config(config_path)?;
    let seed = require_seed(seed, cfg.seed)?;
    let mut setting = SimulationSetting::table_preset(cfg.setting_index, cfg.lambda, cfg.n, seed)?;
    setting.replications = cfg.replications;
    setting.beta_point_indices = cfg.beta_points.clone();
    setting.fit_tolerance = cfg.fit_tolerance;
    let curve = run_setting(&setting)?;
    let csv = curve.to_csv();
    let path = out.unwrap_or_else(|| PathBuf::from("gain_curve.csv"));
    write_output(&path, &csv)
}

fn cmd_data_app(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<(), CliError> {
    let cfg: DataAppConfig = read_config(config_path)?;
    let seed = require_seed(seed, cfg.seed)?;
    let cols: Vec<&str> = cfg.covariate_columns.iter().map(|s| s.as_str()).collect();
    let data = load_csv(Path::new(&cfg.dataset_path), &cfg.response_column, &cols)?;
    let core_cfg = sslreg_core::dataapp::DataAppConfig {
        train_fraction: cfg.train_fraction,
        matched_count: cfg.matched_count,
        unmatched_counts: cfg.unmatched_counts.clone(),
        replications: cfg.replications,
        seed,
        noise_sigma: cfg.noise_sd,
    };
    let report = sslreg_core::dataapp::run_data_application(&data, &core_cfg)?;
    let path = out.unwrap_or_else(|| PathBuf::from("data_app.csv"));
    write_output(&path, &report.to_csv())
}
