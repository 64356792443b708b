//! Asymptotic covariances of the combined-likelihood estimator and the
//! statistical gain of adding the unmatched sample.
//!
//! The estimator satisfies `sqrt(n+m) (bhat - b0) -> N(0, S_SSL)` with
//!
//! ```text
//! S_SSL = A^-1 ( (G1 + G2)/(1+lambda) + lambda S2/(1+lambda) ) A^-1,
//! A     = G1/(1+lambda) + lambda S2/(1+lambda),
//! ```
//!
//! where `S2` is the matched Fisher-type matrix, `G1` the covariance of the
//! unmatched response score, and `G2 = E[psi(X) psi(X)']` the influence of
//! the unmatched covariates. For Gaussian covariates and Gaussian noise all
//! of these are closed-form; for the box law they are computed by nested
//! quadrature. The gain
//! `G = ( sqrt( det(S~_SSL) / det(S_mMLE) ) )^-1` has an explicit formula in
//! the Gaussian case, reproduced here both ways.

use crate::error::{Error, Result};
use crate::model::{CovariateLaw, PopulationModel};
use crate::noise::NoiseDensity;
use crate::numeric::linalg::{
    cholesky, chol_solve, dot, spd_inverse, spd_log_det, sym_eigen, sym_sqrt, Matrix,
};
use crate::numeric::quad::integrate_vec;
use crate::numeric::special::{chi_square_quantile, unit_ball_volume};
use serde::Serialize;

/// Gaussian-design model with Gaussian noise: all closed forms apply.
#[derive(Debug, Clone)]
pub struct GaussianDesignModel {
    pub beta0: Vec<f64>,
    pub mu_x: Vec<f64>,
    pub sigma_x: Matrix,
    pub sigma_eps: f64,
}

impl GaussianDesignModel {
    pub fn new(beta0: Vec<f64>, mu_x: Vec<f64>, sigma_x: Matrix, sigma_eps: f64) -> Result<Self> {
        let p = beta0.len();
        if mu_x.len() != p || sigma_x.rows != p || sigma_x.cols != p {
            return Err(Error::DimensionMismatch(
                "model blocks have inconsistent dimensions".into(),
            ));
        }
        if !(sigma_eps > 0.0) {
            return Err(Error::Domain("noise scale must be positive".into()));
        }
        cholesky(&sigma_x)?;
        Ok(GaussianDesignModel {
            beta0,
            mu_x,
            sigma_x,
            sigma_eps,
        })
    }

    /// Isotropic convenience constructor.
    pub fn isotropic(beta0: Vec<f64>, mu: f64, sigma_x: f64, sigma_eps: f64) -> Result<Self> {
        let p = beta0.len();
        GaussianDesignModel::new(
            beta0,
            vec![mu; p],
            Matrix::identity(p).scaled(sigma_x * sigma_x),
            sigma_eps,
        )
    }

    pub fn p(&self) -> usize {
        self.beta0.len()
    }

    /// Squared signal-to-noise ratio `eta = b0' S_X b0 / sigma_eps^2`.
    pub fn eta(&self) -> f64 {
        dot(&self.sigma_x.matvec(&self.beta0), &self.beta0) / (self.sigma_eps * self.sigma_eps)
    }

    pub fn snr(&self) -> f64 {
        self.eta().sqrt()
    }

    /// `rho = 1 / (mu' S_X^-1 mu)`, defined when the mean is nonzero.
    pub fn rho(&self) -> Option<f64> {
        if self.mu_x.iter().all(|&v| v == 0.0) {
            return None;
        }
        let l = cholesky(&self.sigma_x).ok()?;
        let w = chol_solve(&l, &self.mu_x);
        Some(1.0 / dot(&w, &self.mu_x))
    }

    /// Whitened cosine between the regression vector and the mean.
    pub fn zeta(&self) -> Option<f64> {
        let rho = self.rho()?;
        let b_s_b = dot(&self.sigma_x.matvec(&self.beta0), &self.beta0);
        if b_s_b <= 0.0 {
            return Some(0.0);
        }
        let mu_b = dot(&self.mu_x, &self.beta0);
        Some(mu_b / (b_s_b.sqrt() * (1.0 / rho).sqrt()))
    }

    pub fn second_moment(&self) -> Matrix {
        self.sigma_x.add(&Matrix::outer(&self.mu_x, &self.mu_x))
    }

    pub fn noise(&self) -> NoiseDensity {
        NoiseDensity::gaussian(self.sigma_eps).expect("validated scale")
    }

    pub fn population(&self) -> PopulationModel {
        PopulationModel::new(
            self.beta0.clone(),
            CovariateLaw::Gaussian {
                mean: self.mu_x.clone(),
                cov: self.sigma_x.clone(),
            },
            self.noise(),
        )
        .expect("validated dimensions")
    }
}

/// `S2 = (integral (f')^2/f) E[X X']`.
pub fn sigma2(noise: &NoiseDensity, second_moment: &Matrix) -> Matrix {
    second_moment.scaled(noise.fisher_integral())
}

/// Closed-form `G1`, `G2` for the Gaussian design. General covariances are
/// whitened to the isotropic case (`a0 = S_X^{1/2} b0`, `th = S_X^{-1/2} mu`)
/// and mapped back; both matrices have rank at most two.
pub fn gammas_gaussian(model: &GaussianDesignModel) -> Result<(Matrix, Matrix)> {
    let p = model.p();
    let s = sym_sqrt(&model.sigma_x)?;
    let s_inv = spd_inverse(&s)?;
    let alpha0 = s.matvec(&model.beta0);
    let theta = s_inv.matvec(&model.mu_x);
    let a2 = dot(&alpha0, &alpha0);
    let dscale = a2 + model.sigma_eps * model.sigma_eps;
    let theta_outer = Matrix::outer(&theta, &theta);
    let alpha_outer = Matrix::outer(&alpha0, &alpha0);
    let gamma1_z = theta_outer
        .scaled(1.0 / dscale)
        .add(&alpha_outer.scaled(2.0 / (dscale * dscale)));
    let gamma2_z = theta_outer
        .scaled(a2 / (dscale * dscale))
        .add(&alpha_outer.scaled(2.0 * a2 * a2 / (dscale * dscale * dscale * dscale)));
    let mut gamma1 = s.matmul(&gamma1_z).matmul(&s);
    let mut gamma2 = s.matmul(&gamma2_z).matmul(&s);
    gamma1.symmetrize();
    gamma2.symmetrize();
    debug_assert_eq!(gamma1.rows, p);
    Ok((gamma1, gamma2))
}

/// Quadrature order for the covariate reductions.
const LAW_ORDER: usize = 64;
/// Truncation of response integrals, in response standard deviations.
const Y_SPAN: f64 = 10.0;

/// `G1`, `G2` by nested quadrature for Gaussian or box covariates and any
/// integer-exponent noise. Target absolute accuracy ~1e-5 per entry.
pub fn gammas_numeric(model: &PopulationModel) -> Result<(Matrix, Matrix)> {
    gammas_numeric_with_order(model, LAW_ORDER)
}

pub(crate) fn gammas_numeric_with_order(
    model: &PopulationModel,
    order: usize,
) -> Result<(Matrix, Matrix)> {
    let p = model.dim();
    let noise = model.noise;
    let rule = model.law.projection_rule(&model.beta0, order);
    let nodes = rule.t.len();
    // g(y) = int x f'(y - b0'x) dP(x); density f_Y(y) alongside.
    let g_and_density = |y: f64, g: &mut [f64]| -> f64 {
        g.iter_mut().for_each(|v| *v = 0.0);
        let mut density = 0.0;
        for k in 0..nodes {
            let e = y - rule.t[k];
            let fk = noise.pdf(e);
            density += rule.w[k] * fk;
            // f' = -deriv_factor * f; zero at the Laplace kink (measure zero).
            let fpk = -noise.deriv_factor(e) * fk;
            let wfp = rule.w[k] * fpk;
            for l in 0..p {
                g[l] += wfp * rule.x_bar[(k, l)];
            }
        }
        density
    };
    let (y_mean, y_sd) = model.response_moments();
    let (lo, hi) = (y_mean - Y_SPAN * y_sd, y_mean + Y_SPAN * y_sd);

    // Gamma1 = int g g' / f_Y dy.
    let gamma1_flat = integrate_vec(
        &|y, out| {
            let mut g = vec![0.0; p];
            let density = g_and_density(y, &mut g);
            if density < 1e-280 {
                out.iter_mut().for_each(|v| *v = 0.0);
                return;
            }
            for a in 0..p {
                for b in 0..p {
                    out[a * p + b] = g[a] * g[b] / density;
                }
            }
        },
        p * p,
        lo,
        hi,
        1e-7,
    );
    let mut gamma1 = Matrix {
        rows: p,
        cols: p,
        data: gamma1_flat,
    };
    gamma1.symmetrize();

    // psi(t) = -int (g(y)/f_Y(y)) f(y - t) dy, a function of the projection
    // t = b0'x only; G2 = E[psi psi'] over the projection nodes.
    let psi = |t: f64| -> Vec<f64> {
        integrate_vec(
            &|y, out| {
                let mut g = vec![0.0; p];
                let density = g_and_density(y, &mut g);
                if density < 1e-280 {
                    out.iter_mut().for_each(|v| *v = 0.0);
                    return;
                }
                let f_t = noise.pdf(y - t);
                for l in 0..p {
                    out[l] = -g[l] / density * f_t;
                }
            },
            p,
            lo,
            hi,
            1e-8,
        )
    };
    let mut gamma2 = Matrix::zeros(p, p);
    for k in 0..nodes {
        let v = psi(rule.t[k]);
        for a in 0..p {
            for b in 0..p {
                gamma2[(a, b)] += rule.w[k] * v[a] * v[b];
            }
        }
    }
    gamma2.symmetrize();
    Ok((gamma1, gamma2))
}

/// The asymptotic covariance bundle.
#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticCovariances {
    pub gamma1: Matrix,
    pub gamma2: Matrix,
    pub sigma2: Matrix,
    /// Covariance of `sqrt(n+m) (bhat_{n,m} - b0)`.
    pub sigma_ssl: Matrix,
    /// Covariance of `sqrt(m) (bhat_{n,m} - b0)`: `lambda/(1+lambda) S_SSL`.
    pub sigma_ssl_tilde: Matrix,
    /// Covariance of `sqrt(m) (bhat_m - b0)`: the inverse of `S2`.
    pub sigma_mmle: Matrix,
    pub lambda: f64,
}

/// Assemble the sandwich covariance from its blocks.
pub fn sigma_ssl(
    gamma1: &Matrix,
    gamma2: &Matrix,
    sigma2_mat: &Matrix,
    lambda: f64,
) -> Result<AsymptoticCovariances> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Domain(format!(
            "lambda must lie in (0,1), got {lambda}"
        )));
    }
    let w = 1.0 / (1.0 + lambda);
    let middle = gamma1.scaled(w).add(&sigma2_mat.scaled(lambda * w));
    let a_inv = spd_inverse(&middle).map_err(|_| {
        Error::NotPositiveDefinite(
            "G1/(1+l) + l S2/(1+l) must be positive definite (S2 positive definite suffices)"
                .into(),
        )
    })?;
    let inner = gamma1
        .add(gamma2)
        .scaled(w)
        .add(&sigma2_mat.scaled(lambda * w));
    let mut ssl = a_inv.matmul(&inner).matmul(&a_inv);
    ssl.symmetrize();
    let tilde = ssl.scaled(lambda * w);
    let mmle = spd_inverse(sigma2_mat)?;
    Ok(AsymptoticCovariances {
        gamma1: gamma1.clone(),
        gamma2: gamma2.clone(),
        sigma2: sigma2_mat.clone(),
        sigma_ssl: ssl,
        sigma_ssl_tilde: tilde,
        sigma_mmle: mmle,
        lambda,
    })
}

/// Full covariance bundle of a Gaussian-design model via the closed forms.
pub fn covariances_gaussian(
    model: &GaussianDesignModel,
    lambda: f64,
) -> Result<AsymptoticCovariances> {
    let (g1, g2) = gammas_gaussian(model)?;
    let s2 = sigma2(&model.noise(), &model.second_moment());
    sigma_ssl(&g1, &g2, &s2, lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GainRoute {
    ClosedForm,
    DeterminantRatio,
}

#[derive(Debug, Clone, Serialize)]
pub struct GainReport {
    pub gain: f64,
    pub lambda: f64,
    pub eta: Option<f64>,
    pub snr: Option<f64>,
    pub zeta: Option<f64>,
    pub rho: Option<f64>,
    pub route: GainRoute,
}

/// Explicit statistical gain for the Gaussian design:
/// the zero-mean formula in `eta` alone, or the general formula in
/// `(eta, zeta, rho)` when the covariate mean is nonzero.
pub fn gain_closed_form(model: &GaussianDesignModel, lambda: f64) -> Result<GainReport> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Domain(format!(
            "lambda must lie in (0,1), got {lambda}"
        )));
    }
    let eta = model.eta();
    let (gain, zeta, rho) = match model.rho() {
        None => (gain_formula_zero_mean(eta, lambda), None, None),
        Some(rho) => {
            let zeta = model.zeta().unwrap_or(0.0);
            (
                gain_formula_general(eta, zeta, rho, lambda),
                Some(zeta),
                Some(rho),
            )
        }
    };
    Ok(GainReport {
        gain,
        lambda,
        eta: Some(eta),
        snr: Some(eta.sqrt()),
        zeta,
        rho,
        route: GainRoute::ClosedForm,
    })
}

/// Zero-mean Gaussian gain formula.
pub fn gain_formula_zero_mean(eta: f64, lambda: f64) -> f64 {
    let e1 = eta + 1.0;
    let num = 1.0 + (2.0 / lambda) * eta / (e1 * e1);
    let den = 1.0 + (2.0 / lambda) * (eta / (e1 * e1) + eta.powi(3) / e1.powi(4));
    num / den.sqrt()
}

/// General-mean Gaussian gain formula in `(eta, zeta, rho)`.
pub fn gain_formula_general(eta: f64, zeta: f64, rho: f64, lambda: f64) -> f64 {
    let e1 = eta + 1.0;
    let c1 = 1.0 / (e1 * (1.0 + rho));
    let c2 = 2.0 * eta / (e1 * e1) * (1.0 - zeta * zeta / (1.0 + rho));
    let c3 = (1.0 - zeta * zeta) / (1.0 + rho) * 2.0 * eta / e1.powi(3);
    let num = 1.0 + (c1 + c2) / lambda + c3 / (lambda * lambda);
    let amp1 = 1.0 + eta / e1;
    let amp2 = 1.0 + eta * eta / (e1 * e1);
    let den = 1.0 + (c1 * amp1 + c2 * amp2) / lambda + c3 * amp2 * amp1 / (lambda * lambda);
    num / den.sqrt()
}

/// Gain from an assembled covariance bundle:
/// `G = ( sqrt( det(S~_SSL) / det(S_mMLE) ) )^-1`.
pub fn gain_generic(cov: &AsymptoticCovariances) -> Result<GainReport> {
    let ld_ssl = spd_log_det(&cov.sigma_ssl_tilde)?;
    let ld_ref = spd_log_det(&cov.sigma_mmle)?;
    Ok(GainReport {
        gain: (-0.5 * (ld_ssl - ld_ref)).exp(),
        lambda: cov.lambda,
        eta: None,
        snr: None,
        zeta: None,
        rho: None,
        route: GainRoute::DeterminantRatio,
    })
}

/// Shape analysis of the zero-mean gain as a function of `eta`.
#[derive(Debug, Clone, Serialize)]
pub struct UnimodalityReport {
    pub lambda: f64,
    /// Unique positive root of the derivative-sign cubic: the gain peak.
    pub eta_peak: f64,
    pub gain_at_peak: f64,
    /// Small-lambda optimum location, `1/sqrt(2)`.
    pub small_lambda_eta_star: f64,
    /// Small-lambda peak coefficient: `G* sqrt(lambda)`.
    pub small_lambda_coefficient: f64,
    /// Sign pattern of the derivative verified by sampling: increasing
    /// before the peak, decreasing after.
    pub unimodal_verified: bool,
}

/// The sign of `dG/deta` is the sign of
/// `P(eta) = -4(1+l) eta^3 - 3 l eta^2 + 2 (1+l) eta + l`.
pub fn gain_derivative_sign_cubic(eta: f64, lambda: f64) -> f64 {
    -4.0 * (1.0 + lambda) * eta.powi(3) - 3.0 * lambda * eta * eta
        + 2.0 * (1.0 + lambda) * eta
        + lambda
}

/// Small-lambda approximation of the zero-mean gain.
pub fn gain_small_lambda_zero_mean(eta: f64, lambda: f64) -> f64 {
    (2.0 * eta).sqrt() / (lambda.sqrt() * (2.0 * eta * eta + 2.0 * eta + 1.0).sqrt())
}

/// Small-lambda approximation of the general-mean gain.
pub fn gain_small_lambda_general(eta: f64, zeta: f64, rho: f64, lambda: f64) -> f64 {
    let e1 = eta + 1.0;
    (1.0 - zeta * zeta).sqrt() * (2.0 * eta).sqrt()
        / (lambda * ((1.0 + rho) * (eta * eta + e1 * e1) * (2.0 * eta + 1.0)).sqrt())
}

pub fn gain_analysis(lambda: f64) -> Result<UnimodalityReport> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Domain(format!(
            "lambda must lie in (0,1), got {lambda}"
        )));
    }
    // The cubic has exactly one root in (0, 1); bracketed bisection.
    let mut lo = 0.0;
    let mut hi = 1.0;
    debug_assert!(gain_derivative_sign_cubic(0.0, lambda) > 0.0);
    debug_assert!(gain_derivative_sign_cubic(1.0, lambda) < 0.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if gain_derivative_sign_cubic(mid, lambda) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let eta_peak = 0.5 * (lo + hi);
    // Sampled sign pattern on both sides of the peak.
    let mut unimodal = true;
    let mut prev = gain_formula_zero_mean(eta_peak * 1e-3, lambda);
    for i in 1..=200 {
        let eta = eta_peak * i as f64 / 200.0;
        let g = gain_formula_zero_mean(eta, lambda);
        if g < prev - 1e-12 {
            unimodal = false;
        }
        prev = g;
    }
    let mut prev = gain_formula_zero_mean(eta_peak, lambda);
    for i in 1..=200 {
        let eta = eta_peak + (10.0 - eta_peak) * i as f64 / 200.0;
        let g = gain_formula_zero_mean(eta, lambda);
        if g > prev + 1e-12 {
            unimodal = false;
        }
        prev = g;
    }
    let eta_star = 1.0 / std::f64::consts::SQRT_2;
    Ok(UnimodalityReport {
        lambda,
        eta_peak,
        gain_at_peak: gain_formula_zero_mean(eta_peak, lambda),
        small_lambda_eta_star: eta_star,
        small_lambda_coefficient: gain_small_lambda_zero_mean(eta_star, lambda)
            * lambda.sqrt(),
        unimodal_verified: unimodal,
    })
}

/// Confidence ellipsoid `{ b : (center - b)' S^-1 (center - b) <= q/m }`.
#[derive(Debug, Clone, Serialize)]
pub struct EllipsoidReport {
    pub center: Vec<f64>,
    pub covariance: Matrix,
    pub level: f64,
    pub chi_square_quantile: f64,
    /// `q / m`, the squared Mahalanobis radius.
    pub radius_sq: f64,
    pub volume: f64,
    /// Principal semi-axis lengths, ascending.
    pub axis_lengths: Vec<f64>,
    /// Matching axis directions (columns).
    pub axis_directions: Matrix,
}

impl EllipsoidReport {
    pub fn contains(&self, beta: &[f64]) -> Result<bool> {
        let l = cholesky(&self.covariance)?;
        let d: Vec<f64> = self
            .center
            .iter()
            .zip(beta)
            .map(|(a, b)| a - b)
            .collect();
        let w = chol_solve(&l, &d);
        Ok(dot(&w, &d) <= self.radius_sq)
    }
}

/// Build the confidence ellipsoid for a coefficient estimate with the given
/// `sqrt(m)`-scaled asymptotic covariance.
pub fn confidence_region(
    center: &[f64],
    covariance: &Matrix,
    level: f64,
    matched_count: usize,
) -> Result<EllipsoidReport> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!(
            "confidence level must lie in (0,1), got {level}"
        )));
    }
    let p = center.len();
    if covariance.rows != p || covariance.cols != p {
        return Err(Error::DimensionMismatch(
            "covariance does not match the coefficient length".into(),
        ));
    }
    cholesky(covariance)?;
    let q = chi_square_quantile(level, p);
    let radius_sq = q / matched_count as f64;
    let log_det = spd_log_det(covariance)?;
    let volume =
        (0.5 * log_det).exp() * radius_sq.powf(0.5 * p as f64) * unit_ball_volume(p);
    let (vals, vecs) = sym_eigen(covariance);
    let axis_lengths: Vec<f64> = vals.iter().map(|v| (v.max(0.0) * radius_sq).sqrt()).collect();
    Ok(EllipsoidReport {
        center: center.to_vec(),
        covariance: covariance.clone(),
        level,
        chi_square_quantile: q,
        radius_sq,
        volume,
        axis_lengths,
        axis_directions: vecs,
    })
}
