//! Simulation harness: regression-vector grid, the six tabulated settings,
//! replication loops with per-replication seeds, and empirical gains.
//!
//! Replications run on independent workers with seeds derived from the
//! master seed by task index; aggregation order is fixed, so a curve is
//! bit-identical no matter how many threads execute it.

use crate::asymptotics::{gain_closed_form, GaussianDesignModel};
use crate::data::SemiSupervisedSample;
use crate::error::{Error, Result};
use crate::estimators::{fit_matched_mle, fit_olse, fit_sslemle};
use crate::model::{CovariateLaw, PopulationModel};
use crate::noise::NoiseDensity;
use crate::numeric::linalg::{cholesky, spd_log_det, Matrix};
use crate::numeric::rng::SeedStream;
use crate::optimize::OptimizerConfig;
use rayon::prelude::*;
use serde::Serialize;

/// Noise scale shared by the tabulated settings.
pub const TABLE_SIGMA_EPS: f64 = 2.5298221281347035; // 0.8 sqrt(10)
/// Covariate mean used by the nonzero-mean settings.
pub const TABLE_MU_X: f64 = 5.0;
/// Covariate scale of every tabulated setting.
pub const TABLE_SIGMA_X: f64 = 1.0;
/// Full-scale replication count; desk runs default to fewer.
pub const FULL_REPLICATIONS: usize = 2500;
pub const DESK_REPLICATIONS: usize = 500;

/// One of the six tabulated simulation settings (plus free overrides).
#[derive(Debug, Clone, Serialize)]
pub struct SimulationSetting {
    /// Table row 1..=6.
    pub index: u8,
    /// Matched/unmatched ratio; the table uses 0.2 and 0.6.
    pub lambda: f64,
    /// Unmatched sample size; the table uses 200, 1000, 5000.
    pub n: usize,
    pub replications: usize,
    /// Which of the 15 grid vectors to run (empty = all 15).
    pub beta_point_indices: Vec<usize>,
    pub seed: u64,
    /// Optimizer gradient tolerance used inside replications.
    pub fit_tolerance: f64,
}

impl SimulationSetting {
    pub fn table_preset(index: u8, lambda: f64, n: usize, seed: u64) -> Result<Self> {
        if !(1..=6).contains(&index) {
            return Err(Error::Domain(format!(
                "setting index must be 1..=6, got {index}"
            )));
        }
        Ok(SimulationSetting {
            index,
            lambda,
            n,
            replications: DESK_REPLICATIONS,
            beta_point_indices: Vec::new(),
            seed,
            fit_tolerance: 1e-6,
        })
    }

    pub fn m(&self) -> usize {
        (self.lambda * self.n as f64).round() as usize
    }

    pub fn noise(&self) -> NoiseDensity {
        match self.index {
            5 | 6 => NoiseDensity::laplace(TABLE_SIGMA_EPS / std::f64::consts::SQRT_2)
                .expect("valid scale"),
            _ => NoiseDensity::gaussian(TABLE_SIGMA_EPS).expect("valid scale"),
        }
    }

    pub fn is_laplace(&self) -> bool {
        matches!(self.index, 5 | 6)
    }

    /// Settings 1-2 have the explicit Gaussian gain formula.
    pub fn has_theoretical_gain(&self) -> bool {
        matches!(self.index, 1 | 2)
    }

    pub fn covariate_law(&self) -> CovariateLaw {
        let p = 3;
        let s3 = 3.0f64.sqrt() * TABLE_SIGMA_X;
        match self.index {
            1 | 5 => CovariateLaw::Gaussian {
                mean: vec![0.0; p],
                cov: Matrix::identity(p).scaled(TABLE_SIGMA_X * TABLE_SIGMA_X),
            },
            2 | 6 => CovariateLaw::Gaussian {
                mean: vec![TABLE_MU_X; p],
                cov: Matrix::identity(p).scaled(TABLE_SIGMA_X * TABLE_SIGMA_X),
            },
            3 => CovariateLaw::UniformBox {
                lower: vec![-s3; p],
                upper: vec![s3; p],
            },
            4 => CovariateLaw::UniformBox {
                lower: vec![TABLE_MU_X - s3; p],
                upper: vec![TABLE_MU_X + s3; p],
            },
            _ => unreachable!("index validated at construction"),
        }
    }

    pub fn model_for(&self, beta0: Vec<f64>) -> Result<PopulationModel> {
        PopulationModel::new(beta0, self.covariate_law(), self.noise())
    }
}

/// The 15 regression vectors: the vector (2,2,2)' plus the 8 corners and the
/// 6 face centers of the unit cube, each perturbed by N(0, 0.1^2 I), then
/// normalized and rescaled so the norms are k*8/15 for k = 1..15 ascending.
pub fn beta_grid(seed: u64) -> Vec<Vec<f64>> {
    beta_grid_with_perturbation(seed, 0.1)
}

/// Test hook: zero perturbation keeps the unperturbed seed directions.
pub fn beta_grid_with_perturbation(seed: u64, sd: f64) -> Vec<Vec<f64>> {
    let base = [2.0, 2.0, 2.0];
    let mut seeds: Vec<[f64; 3]> = vec![base];
    for sx in [-1.0f64, 1.0] {
        for sy in [-1.0f64, 1.0] {
            for sz in [-1.0f64, 1.0] {
                seeds.push([base[0] + sx, base[1] + sy, base[2] + sz]);
            }
        }
    }
    for axis in 0..3 {
        for s in [-1.0f64, 1.0] {
            let mut v = base;
            v[axis] += s;
            seeds.push(v);
        }
    }
    debug_assert_eq!(seeds.len(), 15);
    let mut rng = SeedStream::new(seed);
    seeds
        .iter()
        .enumerate()
        .map(|(k, dir)| {
            let perturbed: Vec<f64> = dir.iter().map(|v| v + sd * rng.normal()).collect();
            let norm: f64 = perturbed.iter().map(|v| v * v).sum::<f64>().sqrt();
            let target = (k + 1) as f64 * 8.0 / 15.0;
            perturbed.iter().map(|v| v / norm * target).collect()
        })
        .collect()
}

/// Empirical gain from two replication-by-coefficient error matrices:
/// `( sqrt( det(Cov_ssl) / det(Cov_ref) ) )^-1` with sample covariances.
pub fn empirical_gain(errors_ssl: &Matrix, errors_ref: &Matrix) -> Result<f64> {
    let ld_ssl = spd_log_det(&sample_covariance(errors_ssl)?)?;
    let ld_ref = spd_log_det(&sample_covariance(errors_ref)?)?;
    Ok((-0.5 * (ld_ssl - ld_ref)).exp())
}

fn sample_covariance(errors: &Matrix) -> Result<Matrix> {
    let r = errors.rows;
    let p = errors.cols;
    if r <= p {
        return Err(Error::Sizing(format!(
            "need more than {p} replications to form a {p}x{p} covariance, got {r}"
        )));
    }
    let mut mean = vec![0.0; p];
    for i in 0..r {
        for j in 0..p {
            mean[j] += errors[(i, j)];
        }
    }
    for m in mean.iter_mut() {
        *m /= r as f64;
    }
    let mut cov = Matrix::zeros(p, p);
    for i in 0..r {
        for a in 0..p {
            let da = errors[(i, a)] - mean[a];
            for b in 0..p {
                cov[(a, b)] += da * (errors[(i, b)] - mean[b]);
            }
        }
    }
    let denom = (r - 1) as f64;
    for v in cov.data.iter_mut() {
        *v /= denom;
    }
    cholesky(&cov).map_err(|_| Error::NotPositiveDefinite("singular error covariance".into()))?;
    Ok(cov)
}

/// One curve point.
#[derive(Debug, Clone, Serialize)]
pub struct GainRow {
    pub snr: f64,
    pub gain_theoretical: Option<f64>,
    pub gain_empirical: f64,
    /// Gain against the matched MLE; only distinct from `gain_empirical`
    /// for the Laplace settings.
    pub gain_vs_mmle: Option<f64>,
    pub mc_se: f64,
    pub n: usize,
    pub m: usize,
    pub lambda: f64,
    pub setting_index: u8,
    pub excluded_replications: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GainCurve {
    pub rows: Vec<GainRow>,
    pub replications: usize,
    pub seed: u64,
}

impl GainCurve {
    /// Plot-ready CSV with a fixed column set.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "snr,gain_theoretical,gain_empirical,gain_vs_mmle,mc_se,n,m,lambda,setting_index\n",
        );
        for row in &self.rows {
            let theo = row
                .gain_theoretical
                .map(|v| v.to_string())
                .unwrap_or_default();
            let mmle = row.gain_vs_mmle.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                row.snr,
                theo,
                row.gain_empirical,
                mmle,
                row.mc_se,
                row.n,
                row.m,
                row.lambda,
                row.setting_index
            ));
        }
        out
    }
}

struct ReplicationOutcome {
    ssl: Vec<f64>,
    olse: Vec<f64>,
    mmle: Option<Vec<f64>>,
    failed: bool,
}

/// Run one simulation setting and estimate the gain curve over the selected
/// grid vectors.
pub fn run_setting(setting: &SimulationSetting) -> Result<GainCurve> {
    let m = setting.m();
    let p = 3usize;
    if m < p + 1 {
        return Err(Error::Sizing(format!(
            "matched size {m} too small for dimension {p}"
        )));
    }
    let grid = beta_grid(setting.seed);
    let points: Vec<usize> = if setting.beta_point_indices.is_empty() {
        (0..grid.len()).collect()
    } else {
        for &i in &setting.beta_point_indices {
            if i >= grid.len() {
                return Err(Error::Sizing(format!("grid index {i} out of range")));
            }
        }
        setting.beta_point_indices.clone()
    };
    let mut rows = Vec::with_capacity(points.len());
    for &point in &points {
        let beta0 = grid[point].clone();
        let model = setting.model_for(beta0.clone())?;
        let outcomes: Vec<ReplicationOutcome> = (0..setting.replications)
            .into_par_iter()
            .map(|rep| {
                let task = (point as u64) << 32 | rep as u64;
                let mut rng = SeedStream::derived(setting.seed, task);
                replicate(setting, &model, &beta0, m, &mut rng)
            })
            .collect();
        let failures = outcomes.iter().filter(|o| o.failed).count();
        if failures * 100 >= setting.replications {
            return Err(Error::EstimationFailed(format!(
                "{failures} of {} replications failed at grid point {point}",
                setting.replications
            )));
        }
        let kept: Vec<&ReplicationOutcome> = outcomes.iter().filter(|o| !o.failed).collect();
        let scale = (m as f64).sqrt();
        let collect = |extract: &dyn Fn(&ReplicationOutcome) -> &[f64]| -> Matrix {
            let mut mat = Matrix::zeros(kept.len(), p);
            for (i, o) in kept.iter().enumerate() {
                let row = extract(o);
                for j in 0..p {
                    mat[(i, j)] = scale * (row[j] - beta0[j]);
                }
            }
            mat
        };
        let err_ssl = collect(&|o| &o.ssl);
        let err_olse = collect(&|o| &o.olse);
        let gain_empirical = empirical_gain(&err_ssl, &err_olse)?;
        let gain_vs_mmle = if setting.is_laplace() {
            let err_mmle = {
                let mut mat = Matrix::zeros(kept.len(), p);
                for (i, o) in kept.iter().enumerate() {
                    let row = o.mmle.as_ref().expect("mMLE recorded for Laplace");
                    for j in 0..p {
                        mat[(i, j)] = scale * (row[j] - beta0[j]);
                    }
                }
                mat
            };
            Some(empirical_gain(&err_ssl, &err_mmle)?)
        } else {
            None
        };
        let gain_theoretical = if setting.has_theoretical_gain() {
            let design = GaussianDesignModel::isotropic(
                beta0.clone(),
                if setting.index == 2 { TABLE_MU_X } else { 0.0 },
                TABLE_SIGMA_X,
                TABLE_SIGMA_EPS,
            )?;
            Some(gain_closed_form(&design, setting.lambda)?.gain)
        } else {
            None
        };
        let mc_se = jackknife_se(&err_ssl, &err_olse, 20)?;
        let eta = beta0.iter().map(|v| v * v).sum::<f64>()
            * TABLE_SIGMA_X
            * TABLE_SIGMA_X
            / (TABLE_SIGMA_EPS * TABLE_SIGMA_EPS);
        rows.push(GainRow {
            snr: eta.sqrt(),
            gain_theoretical,
            gain_empirical,
            gain_vs_mmle,
            mc_se,
            n: setting.n,
            m,
            lambda: setting.lambda,
            setting_index: setting.index,
            excluded_replications: failures,
        });
    }
    rows.sort_by(|a, b| a.snr.partial_cmp(&b.snr).unwrap());
    Ok(GainCurve {
        rows,
        replications: setting.replications,
        seed: setting.seed,
    })
}

fn replicate(
    setting: &SimulationSetting,
    model: &PopulationModel,
    _beta0: &[f64],
    m: usize,
    rng: &mut SeedStream,
) -> ReplicationOutcome {
    let p = model.dim();
    let fallback = ReplicationOutcome {
        ssl: vec![0.0; p],
        olse: vec![0.0; p],
        mmle: None,
        failed: true,
    };
    // Unmatched covariates, then responses from fresh independent pairs,
    // then the matched pairs.
    let Ok(unmatched_x) = model.law.sample_matrix(rng, setting.n) else {
        return fallback;
    };
    let Ok((_, unmatched_y)) = model.sample_pairs(rng, setting.n) else {
        return fallback;
    };
    let Ok((matched_x, matched_y)) = model.sample_pairs(rng, m) else {
        return fallback;
    };
    let Ok(sample) = SemiSupervisedSample::new(matched_x, matched_y, unmatched_x, unmatched_y)
    else {
        return fallback;
    };
    let mut config = OptimizerConfig::new(1.0);
    config.gradient_tolerance = setting.fit_tolerance;
    config.restarts = 0;
    config.seed = rng.next_u64();
    let Ok(ssl) = fit_sslemle(&sample, model.noise, &config, false) else {
        return fallback;
    };
    let Ok(olse) = fit_olse(&sample, false) else {
        return fallback;
    };
    let mmle = if setting.is_laplace() {
        match fit_matched_mle(&sample, model.noise, &config) {
            Ok(fit) => Some(fit.beta),
            Err(_) => return fallback,
        }
    } else {
        None
    };
    ReplicationOutcome {
        ssl: ssl.beta,
        olse: olse.beta,
        mmle,
        failed: false,
    }
}

/// Grouped-jackknife standard error of the empirical gain.
fn jackknife_se(err_ssl: &Matrix, err_ref: &Matrix, groups: usize) -> Result<f64> {
    let r = err_ssl.rows;
    let g = groups.min(r / 2).max(2);
    let mut estimates = Vec::with_capacity(g);
    for drop in 0..g {
        let keep: Vec<usize> = (0..r).filter(|i| i % g != drop).collect();
        let sub = |m: &Matrix| -> Matrix {
            let mut out = Matrix::zeros(keep.len(), m.cols);
            for (row, &i) in keep.iter().enumerate() {
                for j in 0..m.cols {
                    out[(row, j)] = m[(i, j)];
                }
            }
            out
        };
        estimates.push(empirical_gain(&sub(err_ssl), &sub(err_ref))?);
    }
    let mean = estimates.iter().sum::<f64>() / g as f64;
    let var = estimates
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        * (g as f64 - 1.0)
        / g as f64;
    Ok(var.sqrt())
}
