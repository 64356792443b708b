//! JSON run configurations. Unknown keys are rejected so typos fail loudly;
//! command-line flags override file keys.

use serde::Deserialize;
use sslreg_core::noise::NoiseDensity;

/// Noise specification: integer exponent plus either a numeric standard
/// deviation or the string "estimate-from-matched".
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub alpha: f64,
    pub sd: SdSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SdSpec {
    Value(f64),
    Rule(String),
}

impl NoiseSpec {
    pub fn is_estimated(&self) -> bool {
        matches!(&self.sd, SdSpec::Rule(r) if r == "estimate-from-matched")
    }

    pub fn validate(&self) -> Result<(), String> {
        if let SdSpec::Rule(r) = &self.sd {
            if r != "estimate-from-matched" {
                return Err(format!(
                    "noise sd must be a number or \"estimate-from-matched\", got {r:?}"
                ));
            }
        }
        Ok(())
    }

    /// Build the density for a given standard deviation.
    pub fn density_with_sd(&self, sd: f64) -> sslreg_core::Result<NoiseDensity> {
        NoiseDensity::standardized(self.alpha)?.scaled(sd)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub matched_path: String,
    pub unmatched_covariates_path: Option<String>,
    pub unmatched_responses_path: Option<String>,
    pub response_column: String,
    pub covariate_columns: Vec<String>,
    pub noise: NoiseSpec,
    /// One of: sslemle, matched-mle, olse, dlse, logistic-sslemle.
    pub estimator: String,
    #[serde(default)]
    pub with_intercept: bool,
    #[serde(default = "default_level")]
    pub confidence_level: f64,
    pub seed: Option<u64>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Search-ball radius for estimators without an existence certificate
    /// (DLSE, logistic).
    pub search_radius: Option<f64>,
}

fn default_level() -> f64 {
    0.95
}
fn default_restarts() -> usize {
    8
}
fn default_tolerance() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainConfig {
    pub lambda: f64,
    pub beta0: Vec<f64>,
    #[serde(default)]
    pub mu_x: Option<Vec<f64>>,
    /// Scalar isotropic scale or full covariance rows.
    #[serde(default)]
    pub sigma_x: Option<serde_json::Value>,
    pub sigma_eps: f64,
    /// Also emit the unimodality analysis of the zero-mean gain.
    #[serde(default)]
    pub analysis: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub setting_index: u8,
    pub lambda: f64,
    pub n: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Indices into the 15-vector grid; empty means all.
    #[serde(default)]
    pub beta_points: Vec<usize>,
    pub seed: Option<u64>,
    #[serde(default = "default_fit_tolerance")]
    pub fit_tolerance: f64,
}

fn default_replications() -> usize {
    sslreg_core::montecarlo::DESK_REPLICATIONS
}
fn default_fit_tolerance() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataAppConfig {
    pub dataset_path: String,
    pub response_column: String,
    pub covariate_columns: Vec<String>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_matched_count")]
    pub matched_count: usize,
    #[serde(default = "default_unmatched_counts")]
    pub unmatched_counts: Vec<usize>,
    #[serde(default = "default_data_replications")]
    pub replications: usize,
    pub seed: Option<u64>,
    /// Fixed noise standard deviation; absent means the full-data OLS
    /// residual estimate.
    #[serde(default)]
    pub noise_sd: Option<f64>,
}

fn default_train_fraction() -> f64 {
    0.75
}
fn default_matched_count() -> usize {
    10
}
fn default_unmatched_counts() -> Vec<usize> {
    vec![50, 100, 200, 400, 800, 1600]
}
fn default_data_replications() -> usize {
    100
}
