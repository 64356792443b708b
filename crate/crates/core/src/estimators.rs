//! The estimators: SSLEMLE (combined likelihood), matched MLE, OLSE, the
//! deconvolution least squares estimator from the unmatched sample alone,
//! and the logistic-model SSLEMLE.

use crate::data::{standardize, SemiSupervisedSample};
use crate::error::{Error, Result};
use crate::likelihood::LikelihoodContext;
use crate::noise::NoiseDensity;
use crate::numeric::linalg::{dot, qr_least_squares, Matrix};
use crate::optimize::{
    grid_oracle, maximize_derivative_free, maximize_smooth, OptimResult, OptimizerConfig,
    SmoothObjective,
};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Sslemle,
    MatchedMle,
    Olse,
    Dlse,
    LogisticSslemle,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionFit {
    pub method: Method,
    pub beta: Vec<f64>,
    pub intercept: Option<f64>,
    pub diagnostics: OptimResult,
    /// `m / n_y`; absent when there are no unmatched responses.
    pub lambda_hat: Option<f64>,
    pub warnings: Vec<String>,
}

impl RegressionFit {
    pub fn predict(&self, x_row: &[f64]) -> f64 {
        self.intercept.unwrap_or(0.0) + dot(&self.beta, x_row)
    }

    pub fn mse_on(&self, x: &Matrix, y: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..x.rows {
            let r = y[i] - self.predict(x.row(i));
            acc += r * r;
        }
        acc / y.len() as f64
    }
}

fn lambda_of(sample: &SemiSupervisedSample) -> Option<f64> {
    if sample.n_y() > 0 {
        Some(sample.lambda_hat())
    } else {
        None
    }
}

/// Plain least squares, optionally with an intercept column.
pub fn ols_solve(x: &Matrix, y: &[f64], with_intercept: bool) -> Result<(Vec<f64>, Option<f64>)> {
    if with_intercept {
        let mut aug = Matrix::zeros(x.rows, x.cols + 1);
        for i in 0..x.rows {
            aug[(i, 0)] = 1.0;
            aug.data[i * (x.cols + 1) + 1..(i + 1) * (x.cols + 1)].copy_from_slice(x.row(i));
        }
        let full = qr_least_squares(&aug, y)?;
        Ok((full[1..].to_vec(), Some(full[0])))
    } else {
        Ok((qr_least_squares(x, y)?, None))
    }
}

/// Ordinary least squares on the matched sample.
pub fn fit_olse(sample: &SemiSupervisedSample, with_intercept: bool) -> Result<RegressionFit> {
    let (beta, intercept) = ols_solve(&sample.matched_x, &sample.matched_y, with_intercept)?;
    // Mean squared residual, negated so "higher is better" like the others.
    let mut msr = 0.0;
    for k in 0..sample.m() {
        let r = sample.matched_y[k] - intercept.unwrap_or(0.0) - dot(sample.matched_x.row(k), &beta);
        msr += r * r;
    }
    msr /= sample.m().max(1) as f64;
    Ok(RegressionFit {
        method: Method::Olse,
        diagnostics: OptimResult {
            argmax: beta.clone(),
            value: -msr,
            gradient_norm: 0.0,
            iterations: 1,
            converged: true,
            restart_index: 0,
        },
        beta,
        intercept,
        lambda_hat: lambda_of(sample),
        warnings: Vec::new(),
    })
}

/// Likelihood objective adapter shared by the SSLEMLE and matched-MLE paths.
struct LoglikObjective<'a> {
    ctx: LikelihoodContext<'a>,
}

impl SmoothObjective for LoglikObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.ctx.loglik(x).unwrap_or(f64::NEG_INFINITY)
    }
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        match self.ctx.value_and_score(x) {
            Ok(pair) => pair,
            Err(_) => (f64::NEG_INFINITY, vec![0.0; x.len()]),
        }
    }
    fn curvature(&self, x: &[f64]) -> Option<Matrix> {
        self.ctx.hessian_preconditioner(x)
    }
}

/// Internal driver: maximize the combined likelihood of `sample` (already
/// augmented/standardized by the caller if needed).
fn maximize_likelihood(
    sample: &SemiSupervisedSample,
    noise: NoiseDensity,
    config: &OptimizerConfig,
    warm: &[Vec<f64>],
) -> Result<OptimResult> {
    let ctx = LikelihoodContext::new(sample, noise)?;
    let cert = ctx.existence_radius()?;
    let mut local = config.clone();
    local.search_radius = cert.radius;
    let result = if noise.alpha >= 2.0 {
        let objective = LoglikObjective { ctx };
        maximize_smooth(&objective, &local, warm)?
    } else {
        // Laplace path: the kink rules out gradients, use Nelder-Mead.
        let ctx2 = LikelihoodContext::new(sample, noise)?;
        let value = move |x: &[f64]| ctx2.loglik(x).unwrap_or(f64::NEG_INFINITY);
        maximize_derivative_free(&value, &local, warm)?
    };
    if !result.converged {
        return Err(Error::EstimationFailed(format!(
            "no restart converged: best value {:.6e}, gradient norm {:.3e} after {} iterations",
            result.value, result.gradient_norm, result.iterations
        )));
    }
    Ok(result)
}

/// The semi-supervised maximum likelihood estimator: maximizer of the
/// combined log-likelihood over the existence ball.
///
/// With `with_intercept`, covariates are standardized internally (centering
/// is absorbed by the intercept) and coefficients are reported in original
/// units.
pub fn fit_sslemle(
    sample: &SemiSupervisedSample,
    noise: NoiseDensity,
    config: &OptimizerConfig,
    with_intercept: bool,
) -> Result<RegressionFit> {
    if !noise.is_integer_exponent() {
        return Err(Error::Domain(format!(
            "estimation requires an integer exponent, got {}",
            noise.alpha
        )));
    }
    if sample.n_y() == 0 {
        return Err(Error::Sizing(
            "SSLEMLE needs unmatched data; use the matched MLE otherwise".into(),
        ));
    }
    if sample.m() == 0 {
        // Rank hypothesis is unsatisfiable without matched rows.
        return Err(Error::RankDeficient {
            rank: 0,
            needed: sample.p(),
        });
    }
    if with_intercept {
        let (work, stats) = standardized_augmented(sample)?;
        let warm = intercept_warm_start(&work)?;
        let result = maximize_likelihood(&work, noise, config, &[warm])?;
        let (beta, intercept) = stats.coefficients_to_original(&result.argmax[1..], result.argmax[0]);
        Ok(RegressionFit {
            method: Method::Sslemle,
            beta,
            intercept: Some(intercept),
            diagnostics: result,
            lambda_hat: lambda_of(sample),
            warnings: Vec::new(),
        })
    } else {
        let warm = no_intercept_warm_start(sample, noise, config)?;
        let result = maximize_likelihood(sample, noise, config, &warm)?;
        Ok(RegressionFit {
            method: Method::Sslemle,
            beta: result.argmax.clone(),
            intercept: None,
            diagnostics: result,
            lambda_hat: lambda_of(sample),
            warnings: Vec::new(),
        })
    }
}

/// Maximum likelihood on the matched pairs alone.
pub fn fit_matched_mle(
    sample: &SemiSupervisedSample,
    noise: NoiseDensity,
    config: &OptimizerConfig,
) -> Result<RegressionFit> {
    if !noise.is_integer_exponent() {
        return Err(Error::Domain(format!(
            "estimation requires an integer exponent, got {}",
            noise.alpha
        )));
    }
    let matched = SemiSupervisedSample::matched_only(
        sample.matched_x.clone(),
        sample.matched_y.clone(),
    )?;
    let warm = vec![ols_solve(&matched.matched_x, &matched.matched_y, false)?.0];
    let result = maximize_likelihood(&matched, noise, config, &warm)?;
    Ok(RegressionFit {
        method: Method::MatchedMle,
        beta: result.argmax.clone(),
        intercept: None,
        diagnostics: result,
        lambda_hat: lambda_of(sample),
        warnings: Vec::new(),
    })
}

fn standardized_augmented(
    sample: &SemiSupervisedSample,
) -> Result<(SemiSupervisedSample, crate::data::Standardization)> {
    let p = sample.p();
    // Column statistics over all covariate rows, matched and unmatched.
    let mut all = Matrix::zeros(sample.m() + sample.n_x(), p);
    for k in 0..sample.m() {
        all.data[k * p..(k + 1) * p].copy_from_slice(sample.matched_x.row(k));
    }
    for i in 0..sample.n_x() {
        let r = sample.m() + i;
        all.data[r * p..(r + 1) * p].copy_from_slice(sample.unmatched_x.row(i));
    }
    let (_, stats) = standardize(&all)?;
    let augment = |x: &Matrix| -> Matrix {
        let mut out = Matrix::zeros(x.rows, p + 1);
        let mut buf = vec![0.0; p];
        for i in 0..x.rows {
            out[(i, 0)] = 1.0;
            stats.apply_row(x.row(i), &mut buf);
            out.data[i * (p + 1) + 1..(i + 1) * (p + 1)].copy_from_slice(&buf);
        }
        out
    };
    let work = SemiSupervisedSample::new(
        augment(&sample.matched_x),
        sample.matched_y.clone(),
        augment(&sample.unmatched_x),
        sample.unmatched_y.clone(),
    )?;
    Ok((work, stats))
}

fn intercept_warm_start(work: &SemiSupervisedSample) -> Result<Vec<f64>> {
    qr_least_squares(&work.matched_x, &work.matched_y)
}

fn no_intercept_warm_start(
    sample: &SemiSupervisedSample,
    noise: NoiseDensity,
    config: &OptimizerConfig,
) -> Result<Vec<Vec<f64>>> {
    let ols = ols_solve(&sample.matched_x, &sample.matched_y, false)?.0;
    if noise.alpha == 1.0 {
        // For the Laplace path the matched MLE is a better anchor.
        if let Ok(mmle) = fit_matched_mle(sample, noise, config) {
            return Ok(vec![mmle.beta, ols]);
        }
    }
    Ok(vec![ols])
}

/// Convenience wrapper used by tests: maximize a 1-dimensional SSLEMLE
/// objective by brute force over the existence ball.
pub fn sslemle_grid_oracle(
    sample: &SemiSupervisedSample,
    noise: NoiseDensity,
    resolution: usize,
) -> Result<OptimResult> {
    let ctx = LikelihoodContext::new(sample, noise)?;
    if sample.p() != 1 {
        return Err(Error::Domain("grid oracle path is one-dimensional".into()));
    }
    let cert = ctx.existence_radius()?;
    let value = |x: &[f64]| ctx.loglik(x).unwrap_or(f64::NEG_INFINITY);
    grid_oracle(&value, &[(-cert.radius, cert.radius)], resolution)
}

/// Deconvolution least squares from the unmatched sample alone: minimizes
/// the ranked-CDF criterion
/// `(1/n) sum_j ( j/n - (1/n) sum_i F(Yu_(j) - b'Xu_i) )^2`.
pub fn fit_dlse(
    sample: &SemiSupervisedSample,
    noise: NoiseDensity,
    config: &OptimizerConfig,
) -> Result<RegressionFit> {
    let n = sample.n_y();
    if n < 2 {
        return Err(Error::Sizing(format!(
            "DLSE needs at least two unmatched responses, got {n}"
        )));
    }
    if sample.n_x() != n {
        return Err(Error::DimensionMismatch(format!(
            "unmatched sizes differ: {} covariates vs {n} responses",
            sample.n_x()
        )));
    }
    let p = sample.p();
    let mut sorted = sample.unmatched_y.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let x = &sample.unmatched_x;
    let objective = move |beta: &[f64]| -> f64 {
        let proj: Vec<f64> = (0..n).map(|i| dot(x.row(i), beta)).collect();
        let nf = n as f64;
        let mut total = 0.0;
        for (j, &yj) in sorted.iter().enumerate() {
            let mut mix = 0.0;
            for &t in &proj {
                mix += noise.cdf(yj - t);
            }
            let gap = (j + 1) as f64 / nf - mix / nf;
            total += gap * gap;
        }
        -(total / nf)
    };
    // Ranked criterion surfaces are multimodal; fixed multi-start count 16.
    let mut local = config.clone();
    local.restarts = local.restarts.max(16);
    let result = maximize_derivative_free(&objective, &local, &[vec![0.0; p]])?;
    if !result.converged {
        return Err(Error::EstimationFailed(format!(
            "DLSE search did not converge: diameter {:.3e} after {} evaluations",
            result.gradient_norm, result.iterations
        )));
    }
    Ok(RegressionFit {
        method: Method::Dlse,
        beta: result.argmax.clone(),
        intercept: None,
        diagnostics: result,
        lambda_hat: lambda_of(sample),
        warnings: Vec::new(),
    })
}

/// Value of the DLSE criterion (not negated); exposed for diagnostics and
/// oracle tests.
pub fn dlse_criterion(sample: &SemiSupervisedSample, noise: &NoiseDensity, beta: &[f64]) -> f64 {
    let n = sample.n_y();
    let mut sorted = sample.unmatched_y.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let proj: Vec<f64> = (0..n).map(|i| dot(sample.unmatched_x.row(i), beta)).collect();
    let nf = n as f64;
    let mut total = 0.0;
    for (j, &yj) in sorted.iter().enumerate() {
        let mut mix = 0.0;
        for &t in &proj {
            mix += noise.cdf(yj - t);
        }
        let gap = (j + 1) as f64 / nf - mix / nf;
        total += gap * gap;
    }
    total / nf
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

struct LogisticObjective<'a> {
    sample: &'a SemiSupervisedSample,
    ones_unmatched: f64,
}

impl LogisticObjective<'_> {
    /// Mean matched/unmatched pieces and the mixture probability gradient.
    fn eval(&self, beta: &[f64], grad: Option<&mut Vec<f64>>) -> f64 {
        let s = self.sample;
        let p = s.p();
        let n = s.n_y() as f64;
        let m = s.m() as f64;
        let mut value = 0.0;
        let mut g = vec![0.0; p];
        if s.n_y() > 0 {
            // Mixture probability q(b) = mean_i sigmoid(b'Xu_i).
            let mut q = 0.0;
            let mut dq = vec![0.0; p];
            for i in 0..s.n_x() {
                let z = dot(s.unmatched_x.row(i), beta);
                let sig = sigmoid(z);
                q += sig;
                let w = sig * (1.0 - sig);
                for l in 0..p {
                    dq[l] += w * s.unmatched_x[(i, l)];
                }
            }
            let nx = s.n_x() as f64;
            q /= nx;
            for v in dq.iter_mut() {
                *v /= nx;
            }
            let n1 = self.ones_unmatched;
            let n0 = n - n1;
            let q = q.clamp(1e-300, 1.0 - 1e-16);
            value += n1 * q.ln() + n0 * (1.0 - q).ln();
            let factor = n1 / q - n0 / (1.0 - q);
            for l in 0..p {
                g[l] += factor * dq[l];
            }
        }
        for k in 0..s.m() {
            let z = dot(s.matched_x.row(k), beta);
            let y = s.matched_y[k];
            value += y * z - log1p_exp(z);
            let r = y - sigmoid(z);
            for l in 0..p {
                g[l] += r * s.matched_x[(k, l)];
            }
        }
        let inv = 1.0 / (n + m);
        if let Some(out) = grad {
            out.clear();
            out.extend(g.iter().map(|v| v * inv));
        }
        value * inv
    }
}

impl SmoothObjective for LogisticObjective<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x, None)
    }
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let mut g = Vec::new();
        let v = self.eval(x, Some(&mut g));
        (v, g)
    }
}

/// SSLEMLE for the logistic model with binary responses. The unmatched term
/// uses the marginal response probability under the empirical covariate
/// mixture. A perfectly separable matched part drives the maximizer to the
/// ball boundary; that case is flagged, not failed.
pub fn fit_logistic_sslemle(
    sample: &SemiSupervisedSample,
    config: &OptimizerConfig,
) -> Result<RegressionFit> {
    let is_binary = |v: &f64| *v == 0.0 || *v == 1.0;
    if !sample.matched_y.iter().all(is_binary) || !sample.unmatched_y.iter().all(is_binary) {
        return Err(Error::Domain("logistic responses must be 0 or 1".into()));
    }
    let ones_matched = sample.matched_y.iter().sum::<f64>();
    if sample.m() > 0 && (ones_matched == 0.0 || ones_matched == sample.m() as f64) {
        return Err(Error::Domain(
            "matched part must contain both response classes".into(),
        ));
    }
    if sample.n_y() > 0 && sample.n_x() != sample.n_y() {
        return Err(Error::DimensionMismatch(format!(
            "unmatched sizes differ: {} covariates vs {} responses",
            sample.n_x(),
            sample.n_y()
        )));
    }
    let objective = LogisticObjective {
        sample,
        ones_unmatched: sample.unmatched_y.iter().sum::<f64>(),
    };
    let p = sample.p();
    let result = maximize_smooth(&objective, config, &[vec![0.0; p]])?;
    let mut warnings = Vec::new();
    let boundary = crate::numeric::linalg::norm2(&result.argmax) >= 0.999 * config.search_radius;
    if boundary {
        warnings.push(
            "maximizer at the search-ball boundary; matched part may be separable".to_string(),
        );
    } else if !result.converged {
        return Err(Error::EstimationFailed(format!(
            "logistic fit did not converge: gradient norm {:.3e}",
            result.gradient_norm
        )));
    }
    Ok(RegressionFit {
        method: Method::LogisticSslemle,
        beta: result.argmax.clone(),
        intercept: None,
        diagnostics: result,
        lambda_hat: lambda_of(sample),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CovariateLaw, PopulationModel};
    use crate::numeric::rng::SeedStream;

    fn gaussian_model(beta0: &[f64], mu: f64, sigma_eps: f64) -> PopulationModel {
        let p = beta0.len();
        PopulationModel::new(
            beta0.to_vec(),
            CovariateLaw::Gaussian {
                mean: vec![mu; p],
                cov: Matrix::identity(p),
            },
            NoiseDensity::gaussian(sigma_eps).unwrap(),
        )
        .unwrap()
    }

    fn draw_sample(
        model: &PopulationModel,
        rng: &mut SeedStream,
        n: usize,
        m: usize,
    ) -> SemiSupervisedSample {
        let ux = model.law.sample_matrix(rng, n).unwrap();
        let uy = if n > 0 {
            model.sample_pairs(rng, n).unwrap().1
        } else {
            Vec::new()
        };
        let (mx, my) = model.sample_pairs(rng, m).unwrap();
        SemiSupervisedSample::new(mx, my, ux, uy).unwrap()
    }

    fn err_norm(fit: &[f64], truth: &[f64]) -> f64 {
        fit.iter()
            .zip(truth)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn noiseless_limit_sanity() {
        // sigma = 1e-3, m = 50, n = 500. At this scale the unmatched
        // mixture is a comb of near-point masses: the combined maximizer
        // trades a little matched misfit for large unmatched alignment
        // gains and genuinely settles a few 1e-2 away from the truth (the
        // likelihood at the fit dominates the truth by a wide margin).
        // The trustworthy sanity checks are the maximizer property and the
        // magnitude of that deviation.
        let beta0 = [1.0, -0.5, 0.25];
        let model = gaussian_model(&beta0, 0.0, 1e-3);
        let mut rng = SeedStream::new(100);
        let sample = draw_sample(&model, &mut rng, 500, 50);
        let mut config = OptimizerConfig::new(1.0);
        config.restarts = 0;
        // The gradient scale is ~1/sigma^2, so an absolute 1e-8 gradient
        // norm is below the floating-point noise floor here.
        config.gradient_tolerance = 1e-4;
        let fit = fit_sslemle(&sample, model.noise, &config, false).unwrap();
        assert!(err_norm(&fit.beta, &beta0) < 0.1, "beta {:?}", fit.beta);
        let ctx = LikelihoodContext::new(&sample, model.noise).unwrap();
        assert!(fit.diagnostics.value >= ctx.loglik(&beta0).unwrap());
        // The matched-only route does recover the truth at vanishing noise.
        let mmle = fit_matched_mle(&sample, model.noise, &config).unwrap();
        assert!(err_norm(&mmle.beta, &beta0) < 1e-2, "mMLE {:?}", mmle.beta);
    }

    #[test]
    fn one_dimensional_fit_matches_grid_oracle() {
        let beta0 = [0.8];
        let model = gaussian_model(&beta0, 0.0, 1.0);
        let mut rng = SeedStream::new(101);
        let sample = draw_sample(&model, &mut rng, 50, 50);
        let mut config = OptimizerConfig::new(1.0);
        config.restarts = 2;
        let fit = fit_sslemle(&sample, model.noise, &config, false).unwrap();
        let oracle = sslemle_grid_oracle(&sample, model.noise, 2001).unwrap();
        // The oracle value can never beat the converged maximizer by more
        // than the acceptance slack.
        assert!(oracle.value <= fit.diagnostics.value + 1e-9);
        let ctx = LikelihoodContext::new(&sample, model.noise).unwrap();
        let radius = ctx.existence_radius().unwrap().radius;
        let refined_step = 2.0 * (2.0 * radius / 2000.0) / 2000.0;
        assert!(
            (oracle.argmax[0] - fit.beta[0]).abs() <= 2.0 * radius / 2000.0 + refined_step,
            "oracle {} vs fit {}",
            oracle.argmax[0],
            fit.beta[0]
        );
    }

    #[test]
    fn sslemle_without_matched_rows_is_rejected() {
        let model = gaussian_model(&[1.0], 0.0, 1.0);
        let mut rng = SeedStream::new(102);
        let sample = draw_sample(&model, &mut rng, 30, 0);
        let config = OptimizerConfig::new(1.0);
        assert!(matches!(
            fit_sslemle(&sample, model.noise, &config, false),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn gaussian_matched_mle_equals_olse() {
        let mut rng = SeedStream::new(103);
        for trial in 0..10 {
            let beta0 = [0.5 + 0.1 * trial as f64, -1.0];
            let model = gaussian_model(&beta0, 1.0, 1.3);
            let sample = draw_sample(&model, &mut rng, 5, 40);
            let config = OptimizerConfig::new(1.0);
            let mmle = fit_matched_mle(&sample, model.noise, &config).unwrap();
            let olse = fit_olse(&sample, false).unwrap();
            assert!(
                err_norm(&mmle.beta, &olse.beta) < 1e-6,
                "trial {trial}: {:?} vs {:?}",
                mmle.beta,
                olse.beta
            );
        }
    }

    #[test]
    fn olse_normal_equations_residual_is_tiny() {
        let mut rng = SeedStream::new(104);
        let model = gaussian_model(&[0.3, 0.9, -0.2], 2.0, 1.0);
        let sample = draw_sample(&model, &mut rng, 5, 60);
        let fit = fit_olse(&sample, false).unwrap();
        let xtx = sample.matched_x.transpose().matmul(&sample.matched_x);
        let xty = sample.matched_x.transpose().matvec(&sample.matched_y);
        let lhs = xtx.matvec(&fit.beta);
        let resid: f64 = lhs
            .iter()
            .zip(&xty)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let rhs: f64 = xty.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(resid <= 1e-8 * rhs);
    }

    #[test]
    fn olse_interpolates_when_m_equals_p() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![-0.5, 1.0]]);
        let y = vec![3.0, -1.0];
        let sample = SemiSupervisedSample::matched_only(x.clone(), y.clone()).unwrap();
        let fit = fit_olse(&sample, false).unwrap();
        for k in 0..2 {
            let r = y[k] - dot(x.row(k), &fit.beta);
            assert!(r.abs() < 1e-10);
        }
    }

    #[test]
    fn laplace_matched_mle_resists_outlier() {
        // Frozen seeded scenario: one grossly corrupted response.
        let beta0 = [1.0];
        let model = PopulationModel::new(
            beta0.to_vec(),
            CovariateLaw::Gaussian {
                mean: vec![0.0],
                cov: Matrix::identity(1),
            },
            NoiseDensity::laplace(0.5).unwrap(),
        )
        .unwrap();
        let mut rng = SeedStream::new(105);
        let mut sample = draw_sample(&model, &mut rng, 0, 25);
        sample.matched_y[3] += 40.0;
        let mut config = OptimizerConfig::new(50.0);
        config.gradient_tolerance = 1e-7;
        let mmle = fit_matched_mle(&sample, model.noise, &config).unwrap();
        let olse = fit_olse(&sample, false).unwrap();
        let dev_mmle = (mmle.beta[0] - beta0[0]).abs();
        let dev_olse = (olse.beta[0] - beta0[0]).abs();
        assert!(
            dev_mmle < dev_olse,
            "mMLE deviation {dev_mmle} vs OLSE deviation {dev_olse}"
        );
    }

    #[test]
    fn laplace_matched_mle_matches_grid_oracle_value() {
        let model = PopulationModel::new(
            vec![0.7],
            CovariateLaw::Gaussian {
                mean: vec![0.5],
                cov: Matrix::identity(1),
            },
            NoiseDensity::laplace(1.0).unwrap(),
        )
        .unwrap();
        let mut rng = SeedStream::new(106);
        let sample = draw_sample(&model, &mut rng, 0, 21);
        let matched =
            SemiSupervisedSample::matched_only(sample.matched_x.clone(), sample.matched_y.clone())
                .unwrap();
        let mut config = OptimizerConfig::new(1.0);
        config.gradient_tolerance = 1e-9;
        let fit = fit_matched_mle(&matched, model.noise, &config).unwrap();
        let ctx = LikelihoodContext::new(&matched, model.noise).unwrap();
        let radius = ctx.existence_radius().unwrap().radius;
        let value = |x: &[f64]| ctx.loglik(x).unwrap();
        let oracle = grid_oracle(&value, &[(-radius, radius)], 4001).unwrap();
        assert!(
            fit.diagnostics.value >= oracle.value - 1e-8,
            "fit {} vs oracle {}",
            fit.diagnostics.value,
            oracle.value
        );
    }

    #[test]
    fn consistency_trend_in_m() {
        // Median error over seeds shrinks as the samples grow (n = 5m).
        let beta0 = [0.9, -0.6];
        let model = gaussian_model(&beta0, 0.0, 1.0);
        let mut medians = Vec::new();
        for &m in &[25usize, 100, 400] {
            let mut errors = Vec::new();
            for seed in 0..12 {
                let mut rng = SeedStream::derived(200 + m as u64, seed);
                let sample = draw_sample(&model, &mut rng, 5 * m, m);
                let mut config = OptimizerConfig::new(1.0);
                config.restarts = 0;
                config.gradient_tolerance = 1e-7;
                let fit = fit_sslemle(&sample, model.noise, &config, false).unwrap();
                errors.push(err_norm(&fit.beta, &beta0));
            }
            errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
            medians.push(errors[errors.len() / 2]);
        }
        assert!(
            medians[0] > medians[1] && medians[1] > medians[2],
            "medians {medians:?}"
        );
    }

    #[test]
    fn value_dominance_of_the_maximizer() {
        let beta0 = [0.4, 0.8];
        let model = gaussian_model(&beta0, 0.5, 1.0);
        let mut rng = SeedStream::new(107);
        for _ in 0..3 {
            let sample = draw_sample(&model, &mut rng, 200, 40);
            let config = OptimizerConfig::new(1.0);
            let fit = fit_sslemle(&sample, model.noise, &config, false).unwrap();
            let ctx = LikelihoodContext::new(&sample, model.noise).unwrap();
            let mmle = fit_matched_mle(&sample, model.noise, &config).unwrap();
            let l_fit = fit.diagnostics.value;
            assert!(l_fit >= ctx.loglik(&mmle.beta).unwrap() - 1e-10);
            assert!(l_fit >= ctx.loglik(&beta0).unwrap() - 1e-10);
        }
    }

    #[test]
    fn permutation_invariance_of_fit() {
        let beta0 = [0.4, -0.3];
        let model = gaussian_model(&beta0, 0.0, 1.0);
        let mut rng = SeedStream::new(108);
        let sample = draw_sample(&model, &mut rng, 80, 20);
        let mut config = OptimizerConfig::new(1.0);
        config.restarts = 0;
        let base = fit_sslemle(&sample, model.noise, &config, false).unwrap();
        let mut shuffled = sample.clone();
        shuffled.unmatched_y.reverse();
        // Also permute covariate rows independently.
        let rows: Vec<Vec<f64>> = (0..shuffled.unmatched_x.rows)
            .rev()
            .map(|i| shuffled.unmatched_x.row(i).to_vec())
            .collect();
        shuffled.unmatched_x = Matrix::from_rows(&rows);
        let permuted = fit_sslemle(&shuffled, model.noise, &config, false).unwrap();
        assert!(
            err_norm(&base.beta, &permuted.beta) < 1e-6,
            "{:?} vs {:?}",
            base.beta,
            permuted.beta
        );
    }

    #[test]
    fn dlse_criterion_shrinks_with_n() {
        let beta0 = [1.2];
        let model = gaussian_model(&beta0, 0.0, 1.0);
        let noise = model.noise;
        let mut means = Vec::new();
        for &n in &[100usize, 400, 1600] {
            let mut acc = 0.0;
            for seed in 0..20 {
                let mut rng = SeedStream::derived(300, seed + 1000 * n as u64);
                let sample = draw_sample(&model, &mut rng, n, 0);
                acc += dlse_criterion(&sample, &noise, &beta0);
            }
            means.push(acc / 20.0);
        }
        assert!(
            means[0] > means[1] && means[1] > means[2],
            "criterion means {means:?}"
        );
    }

    #[test]
    fn dlse_sign_symmetry_for_centered_design() {
        let beta0 = [0.9];
        let model = gaussian_model(&beta0, 0.0, 1.0);
        let mut rng = SeedStream::new(109);
        let sample = draw_sample(&model, &mut rng, 60, 0);
        for &b in &[0.3, 0.9, 1.7] {
            let plus = dlse_criterion(&sample, &model.noise, &[b]);
            let minus = dlse_criterion(&sample, &model.noise, &[-b]);
            // Not an exact identity on finite draws: the criterion is
            // symmetric in distribution, exactly symmetric when the design
            // itself is sign-symmetric.
            let mut mirrored = sample.clone();
            for v in mirrored.unmatched_x.data.iter_mut() {
                *v = -*v;
            }
            let minus_mirrored = dlse_criterion(&mirrored, &model.noise, &[-b]);
            assert!((plus - minus_mirrored).abs() < 1e-12);
            // And the finite-sample asymmetry is small.
            assert!((plus - minus).abs() < 0.05);
        }
    }

    #[test]
    fn dlse_two_point_hand_case() {
        let x = Matrix::from_rows(&[vec![1.0], vec![-0.5]]);
        let sample = SemiSupervisedSample::new(
            Matrix::zeros(0, 1),
            Vec::new(),
            x,
            vec![0.8, -0.3],
        )
        .unwrap();
        let noise = NoiseDensity::gaussian(1.0).unwrap();
        let b = 0.6;
        let f = |t: f64| noise.cdf(t);
        // Sorted responses: -0.3, 0.8.
        let term1 = 0.5 - 0.5 * (f(-0.3 - b * 1.0) + f(-0.3 + b * 0.5));
        let term2 = 1.0 - 0.5 * (f(0.8 - b * 1.0) + f(0.8 + b * 0.5));
        let expect = 0.5 * (term1 * term1 + term2 * term2);
        let got = dlse_criterion(&sample, &noise, &[b]);
        assert!((got - expect).abs() < 1e-14, "{got} vs {expect}");
    }

    #[test]
    fn dlse_fit_recovers_scale_on_modest_sample() {
        let beta0 = [1.0];
        let model = gaussian_model(&beta0, 1.0, 0.5);
        let mut rng = SeedStream::new(110);
        let sample = draw_sample(&model, &mut rng, 150, 0);
        let mut config = OptimizerConfig::new(6.0);
        config.gradient_tolerance = 1e-7;
        let fit = fit_dlse(&sample, model.noise, &config).unwrap();
        // Mean 1 design breaks the sign symmetry; expect the true sign.
        assert!(
            (fit.beta[0] - 1.0).abs() < 0.35,
            "dlse beta {:?}",
            fit.beta
        );
    }

    /// Matched-only logistic MLE by iteratively reweighted least squares.
    fn logistic_irls(x: &Matrix, y: &[f64]) -> Vec<f64> {
        let p = x.cols;
        let mut beta = vec![0.0; p];
        for _ in 0..50 {
            let mut xtwx = Matrix::zeros(p, p);
            let mut score = vec![0.0; p];
            for i in 0..x.rows {
                let z = dot(x.row(i), &beta);
                let mu = sigmoid(z);
                let w = mu * (1.0 - mu);
                for a in 0..p {
                    score[a] += (y[i] - mu) * x[(i, a)];
                    for b in 0..p {
                        xtwx[(a, b)] += w * x[(i, a)] * x[(i, b)];
                    }
                }
            }
            let l = crate::numeric::linalg::cholesky(&xtwx).unwrap();
            let step = crate::numeric::linalg::chol_solve(&l, &score);
            for a in 0..p {
                beta[a] += step[a];
            }
            if step.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-12 {
                break;
            }
        }
        beta
    }

    #[test]
    fn logistic_matched_only_matches_irls() {
        let mut rng = SeedStream::new(111);
        let m = 120;
        let p = 2;
        let mut x = Matrix::zeros(m, p);
        for v in x.data.iter_mut() {
            *v = rng.uniform_in(-2.0, 2.0);
        }
        let beta0 = [0.8, -1.1];
        let y: Vec<f64> = (0..m)
            .map(|i| {
                let prob = sigmoid(dot(x.row(i), &beta0));
                if rng.uniform() < prob {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let sample = SemiSupervisedSample::matched_only(x.clone(), y.clone()).unwrap();
        let mut config = OptimizerConfig::new(50.0);
        config.gradient_tolerance = 1e-8;
        let fit = fit_logistic_sslemle(&sample, &config).unwrap();
        let oracle = logistic_irls(&x, &y);
        assert!(
            err_norm(&fit.beta, &oracle) < 1e-6,
            "{:?} vs {oracle:?}",
            fit.beta
        );
    }

    #[test]
    fn logistic_rejects_nonbinary_and_single_class() {
        let x = Matrix::from_rows(&[vec![1.0], vec![2.0]]);
        let bad = SemiSupervisedSample::matched_only(x.clone(), vec![0.5, 1.0]).unwrap();
        let config = OptimizerConfig::new(10.0);
        assert!(fit_logistic_sslemle(&bad, &config).is_err());
        let single = SemiSupervisedSample::matched_only(x, vec![1.0, 1.0]).unwrap();
        assert!(fit_logistic_sslemle(&single, &config).is_err());
    }

    #[test]
    fn logistic_separable_matched_part_hits_ball_and_warns() {
        // Perfectly separable matched data with a zero threshold.
        let x = Matrix::from_rows(&[vec![-2.0], vec![-1.0], vec![1.0], vec![2.0]]);
        let y = vec![0.0, 0.0, 1.0, 1.0];
        let sample = SemiSupervisedSample::matched_only(x, y).unwrap();
        let mut config = OptimizerConfig::new(30.0);
        config.max_iterations = 2000;
        let fit = fit_logistic_sslemle(&sample, &config).unwrap();
        assert!(!fit.warnings.is_empty(), "beta {:?}", fit.beta);
        assert!(crate::numeric::linalg::norm2(&fit.beta) <= 30.0 + 1e-9);
    }

    #[test]
    fn logistic_all_ones_unmatched_pushes_along_mean() {
        // All unmatched responses 1: the unmatched term is monotone along
        // the direction that raises the mixture probability.
        let mut rng = SeedStream::new(112);
        let n = 200;
        let mut ux = Matrix::zeros(n, 1);
        for v in ux.data.iter_mut() {
            *v = rng.uniform_in(0.5, 1.5);
        }
        let sample =
            SemiSupervisedSample::new(Matrix::zeros(0, 1), Vec::new(), ux, vec![1.0; n]).unwrap();
        let objective = LogisticObjective {
            sample: &sample,
            ones_unmatched: n as f64,
        };
        let mut last = f64::NEG_INFINITY;
        for step in 0..8 {
            let v = objective.value(&[step as f64]);
            assert!(v > last, "objective not increasing at step {step}");
            last = v;
        }
    }
}
