//! Golden-sample protocol for real data sets: repeatedly split the table
//! into train/test, draw a tiny matched sample and a larger de-linked
//! unmatched sample from the training rows, fit the combined-likelihood
//! estimator and the matched OLSE (both with intercept), and compare their
//! test mean squared errors.

use crate::data::{subsample_protocol, Dataset, SplitSpec};
use crate::error::{Error, Result};
use crate::estimators::{fit_olse, fit_sslemle};
use crate::noise::NoiseDensity;
use crate::numeric::linalg::dot;
use crate::numeric::rng::split_mix64;
use crate::optimize::OptimizerConfig;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct DataAppConfig {
    pub train_fraction: f64,
    pub matched_count: usize,
    pub unmatched_counts: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    /// Noise standard deviation; `None` estimates it from the residuals of
    /// the full-data least squares pre-fit.
    pub noise_sigma: Option<f64>,
}

impl Default for DataAppConfig {
    fn default() -> Self {
        DataAppConfig {
            train_fraction: 0.75,
            matched_count: 10,
            unmatched_counts: vec![50, 100, 200, 400, 800, 1600],
            replications: 100,
            seed: 1,
            noise_sigma: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DataAppRow {
    pub n: usize,
    pub replications: usize,
    /// Replications where the combined estimator beat the OLSE on the test
    /// set.
    pub wins: usize,
    pub win_fraction: f64,
    /// Ratio of the average test MSEs (combined / OLSE).
    pub mean_mse_ratio: f64,
    pub mean_mse_sslemle: f64,
    pub mean_mse_olse: f64,
    pub failed_replications: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct DataAppReport {
    /// Residual standard deviation of the full-data least squares pre-fit.
    pub sigma_hat: f64,
    /// Coefficient of determination of the pre-fit.
    pub r_squared: f64,
    pub matched_count: usize,
    pub replications: usize,
    pub rows: Vec<DataAppRow>,
}

impl DataAppReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "n,replications,wins,win_fraction,mean_mse_ratio,mean_mse_sslemle,mean_mse_olse,sigma_hat,r_squared\n",
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                row.n,
                row.replications,
                row.wins,
                row.win_fraction,
                row.mean_mse_ratio,
                row.mean_mse_sslemle,
                row.mean_mse_olse,
                self.sigma_hat,
                self.r_squared
            ));
        }
        out
    }
}

/// Full-data OLS pre-fit: intercept model, residual standard deviation with
/// the `N - p - 1` denominator, and the centered R^2.
pub fn full_data_prefit(data: &Dataset) -> Result<(f64, f64)> {
    let n = data.len();
    let p = data.x.cols;
    if n < p + 2 {
        return Err(Error::Sizing("too few rows for the pre-fit".into()));
    }
    let (beta, intercept) = crate::estimators::ols_solve(&data.x, &data.y, true)?;
    let intercept = intercept.expect("intercept requested");
    let mean_y = data.y.iter().sum::<f64>() / n as f64;
    let mut ssr = 0.0;
    let mut sst = 0.0;
    for i in 0..n {
        let fit = intercept + dot(data.x.row(i), &beta);
        ssr += (data.y[i] - fit) * (data.y[i] - fit);
        sst += (data.y[i] - mean_y) * (data.y[i] - mean_y);
    }
    let sigma_hat = (ssr / (n - p - 1) as f64).sqrt();
    let r_squared = 1.0 - ssr / sst;
    Ok((sigma_hat, r_squared))
}

/// Run the full protocol over every configured unmatched size.
pub fn run_data_application(data: &Dataset, config: &DataAppConfig) -> Result<DataAppReport> {
    let (sigma_hat, r_squared) = full_data_prefit(data)?;
    let sigma = config.noise_sigma.unwrap_or(sigma_hat);
    let noise = NoiseDensity::gaussian(sigma)?;
    let mut rows = Vec::with_capacity(config.unmatched_counts.len());
    for (n_idx, &n) in config.unmatched_counts.iter().enumerate() {
        let outcomes: Vec<Result<(f64, f64)>> = (0..config.replications)
            .into_par_iter()
            .map(|rep| {
                let task_seed =
                    split_mix64(config.seed ^ split_mix64((n_idx as u64) << 40 | rep as u64));
                replicate(data, config, noise, n, task_seed)
            })
            .collect();
        let mut wins = 0usize;
        let mut failed = 0usize;
        let mut sum_ssl = 0.0;
        let mut sum_olse = 0.0;
        let mut kept = 0usize;
        for out in outcomes {
            match out {
                Ok((mse_ssl, mse_olse)) => {
                    kept += 1;
                    if mse_ssl < mse_olse {
                        wins += 1;
                    }
                    sum_ssl += mse_ssl;
                    sum_olse += mse_olse;
                }
                Err(_) => failed += 1,
            }
        }
        if kept == 0 {
            return Err(Error::EstimationFailed(format!(
                "all replications failed at n = {n}"
            )));
        }
        rows.push(DataAppRow {
            n,
            replications: kept,
            wins,
            win_fraction: wins as f64 / kept as f64,
            mean_mse_ratio: (sum_ssl / kept as f64) / (sum_olse / kept as f64),
            mean_mse_sslemle: sum_ssl / kept as f64,
            mean_mse_olse: sum_olse / kept as f64,
            failed_replications: failed,
        });
    }
    Ok(DataAppReport {
        sigma_hat,
        r_squared,
        matched_count: config.matched_count,
        replications: config.replications,
        rows,
    })
}

fn replicate(
    data: &Dataset,
    config: &DataAppConfig,
    noise: NoiseDensity,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let spec = SplitSpec {
        train_fraction: config.train_fraction,
        matched_count: config.matched_count,
        unmatched_count: n,
        seed,
    };
    let (sample, test) = subsample_protocol(data, &spec)?;
    let mut opt = OptimizerConfig::new(1.0);
    opt.gradient_tolerance = 1e-6;
    opt.restarts = 0;
    opt.seed = seed;
    let ssl = fit_sslemle(&sample, noise, &opt, true)?;
    let olse = fit_olse(&sample, true)?;
    Ok((ssl.mse_on(&test.x, &test.y), olse.mse_on(&test.x, &test.y)))
}
