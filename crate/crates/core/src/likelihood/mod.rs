//! The combined empirical log-likelihood
//!
//! ```text
//! l(b) = 1/(n+m) [ sum_j log( 1/n sum_i f(Yu_j - b'Xu_i) )
//!                + sum_k log f(Y_k - b'X_k) ],
//! ```
//!
//! its analytic score and Hessian, the intercept and unknown-scale variants,
//! the data-driven existence radius, and the population criterion.

mod kernel;

use crate::data::SemiSupervisedSample;
use crate::error::{Error, Result};
use crate::model::PopulationModel;
use crate::noise::NoiseDensity;
use crate::numeric::linalg::{dot, norm2, numerical_rank, sym_eigen, Matrix};
use crate::numeric::quad::{exp_power_abs_moment, integrate};
use crate::numeric::rng::SeedStream;
use kernel::{unmatched_pass, Want};
use serde::Serialize;

/// Rank tolerance for the existence hypothesis, relative to the largest
/// singular value of the matched design.
const RANK_TOL: f64 = 1e-10;

pub struct LikelihoodContext<'a> {
    pub sample: &'a SemiSupervisedSample,
    pub noise: NoiseDensity,
}

impl<'a> LikelihoodContext<'a> {
    /// The unmatched double sum is defined for a common unmatched size, so
    /// `n_x != n_y` is rejected here even though the container allows it.
    pub fn new(sample: &'a SemiSupervisedSample, noise: NoiseDensity) -> Result<Self> {
        if sample.n_x() != sample.n_y() {
            return Err(Error::DimensionMismatch(format!(
                "unmatched sizes differ: {} covariates vs {} responses",
                sample.n_x(),
                sample.n_y()
            )));
        }
        if sample.n_y() == 0 && sample.m() == 0 {
            return Err(Error::Sizing("no data: n = m = 0".into()));
        }
        Ok(LikelihoodContext { sample, noise })
    }

    pub fn n(&self) -> usize {
        self.sample.n_y()
    }

    pub fn m(&self) -> usize {
        self.sample.m()
    }

    /// Weight `w_{n,m} = n/(n+m)` of the unmatched mean term.
    pub fn weight(&self) -> f64 {
        let n = self.n() as f64;
        n / (n + self.m() as f64)
    }

    fn check_dim(&self, beta: &[f64]) -> Result<()> {
        if beta.len() != self.sample.p() {
            return Err(Error::DimensionMismatch(format!(
                "beta has length {}, sample dimension is {}",
                beta.len(),
                self.sample.p()
            )));
        }
        Ok(())
    }

    fn project(x: &Matrix, beta: &[f64]) -> Vec<f64> {
        (0..x.rows).map(|i| dot(x.row(i), beta)).collect()
    }

    /// `(1/n) sum_j log( (1/n) sum_i f(Yu_j - b'Xu_i) )`, the unmatched mean
    /// term of the re-weighted likelihood. Requires `n >= 1`.
    pub fn unmatched_mean_term(&self, beta: &[f64]) -> Result<f64> {
        self.check_dim(beta)?;
        let n = self.n();
        if n == 0 {
            return Err(Error::Sizing("no unmatched data".into()));
        }
        let proj = Self::project(&self.sample.unmatched_x, beta);
        let sums = unmatched_pass(
            &self.noise,
            &self.sample.unmatched_x,
            &self.sample.unmatched_y,
            &proj,
            Want::Value,
        );
        let nf = n as f64;
        Ok(self.noise.c_alpha.ln() - nf.ln() + sums.value / nf)
    }

    /// `(1/m) sum_k log f(Y_k - b'X_k)`, the matched mean term.
    pub fn matched_mean_term(&self, beta: &[f64]) -> Result<f64> {
        self.check_dim(beta)?;
        let m = self.m();
        if m == 0 {
            return Err(Error::Sizing("no matched data".into()));
        }
        let (value, _, _) = self.matched_sums(beta, false);
        Ok(value / m as f64)
    }

    /// Raw matched sums: `sum_k log f(e_k)`, gradient and kink flag.
    fn matched_sums(&self, beta: &[f64], want_grad: bool) -> (f64, Vec<f64>, bool) {
        let p = beta.len();
        let mut value = 0.0;
        let mut grad = vec![0.0; p];
        let mut kink = false;
        let x = &self.sample.matched_x;
        for k in 0..self.m() {
            let e = self.sample.matched_y[k] - dot(x.row(k), beta);
            value += self.noise.log_pdf(e);
            if e == 0.0 && self.noise.alpha == 1.0 {
                kink = true;
            }
            if want_grad {
                let g = self.noise.deriv_factor(e);
                for l in 0..p {
                    grad[l] += g * x[(k, l)];
                }
            }
        }
        (value, grad, kink)
    }

    /// The combined empirical log-likelihood at `beta`.
    pub fn loglik(&self, beta: &[f64]) -> Result<f64> {
        self.check_dim(beta)?;
        let n = self.n() as f64;
        let m = self.m() as f64;
        let mut total = 0.0;
        if self.n() > 0 {
            let proj = Self::project(&self.sample.unmatched_x, beta);
            let sums = unmatched_pass(
                &self.noise,
                &self.sample.unmatched_x,
                &self.sample.unmatched_y,
                &proj,
                Want::Value,
            );
            total += n * self.noise.c_alpha.ln() - n * n.ln() + sums.value;
        }
        if self.m() > 0 {
            let (v, _, _) = self.matched_sums(beta, false);
            total += v;
        }
        Ok(total / (n + m))
    }

    /// Analytic gradient of [`Self::loglik`]. For the Laplace exponent the
    /// gradient exists only away from exact-zero residuals; hitting one
    /// signals [`Error::NonDifferentiable`] so the caller can fall back to
    /// the derivative-free path.
    pub fn score(&self, beta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.value_and_score(beta)?.1)
    }

    /// Log-likelihood and score in one pass.
    pub fn value_and_score(&self, beta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_dim(beta)?;
        let p = beta.len();
        let n = self.n() as f64;
        let m = self.m() as f64;
        let mut value = 0.0;
        let mut grad = vec![0.0; p];
        if self.n() > 0 {
            let proj = Self::project(&self.sample.unmatched_x, beta);
            if self.noise.alpha == 1.0 {
                self.check_unmatched_kink(&proj)?;
            }
            let sums = unmatched_pass(
                &self.noise,
                &self.sample.unmatched_x,
                &self.sample.unmatched_y,
                &proj,
                Want::Grad,
            );
            value += n * self.noise.c_alpha.ln() - n * n.ln() + sums.value;
            for l in 0..p {
                grad[l] += sums.grad[l];
            }
        }
        if self.m() > 0 {
            let (v, g, kink) = self.matched_sums(beta, true);
            if kink {
                return Err(Error::NonDifferentiable(0.0));
            }
            value += v;
            for l in 0..p {
                grad[l] += g[l];
            }
        }
        let inv = 1.0 / (n + m);
        for g in grad.iter_mut() {
            *g *= inv;
        }
        Ok((value * inv, grad))
    }

    /// Analytic Hessian; requires a twice-differentiable density (`a >= 2`).
    pub fn hessian(&self, beta: &[f64]) -> Result<Matrix> {
        self.check_dim(beta)?;
        if self.noise.alpha < 2.0 {
            return Err(Error::UnsupportedOrder {
                order: 2,
                alpha: self.noise.alpha,
            });
        }
        let p = beta.len();
        let n = self.n() as f64;
        let m = self.m() as f64;
        let mut hess = Matrix::zeros(p, p);
        if self.n() > 0 {
            let proj = Self::project(&self.sample.unmatched_x, beta);
            let sums = unmatched_pass(
                &self.noise,
                &self.sample.unmatched_x,
                &self.sample.unmatched_y,
                &proj,
                Want::GradHess,
            );
            for l1 in 0..p {
                for l2 in 0..p {
                    hess[(l1, l2)] += sums.hess[l1 * p + l2];
                }
            }
        }
        if self.m() > 0 {
            // log f second derivative: f''/f - (f'/f)^2 = h - g^2.
            let a = self.noise.alpha;
            let da = self.noise.d.powf(-a);
            let x = &self.sample.matched_x;
            for k in 0..self.m() {
                let e = self.sample.matched_y[k] - dot(x.row(k), beta);
                let curv = -a * (a - 1.0) * da * pow_abs(e, a - 2.0);
                for l1 in 0..p {
                    for l2 in 0..p {
                        hess[(l1, l2)] += curv * x[(k, l1)] * x[(k, l2)];
                    }
                }
            }
        }
        let inv = 1.0 / (n + m);
        for v in hess.data.iter_mut() {
            *v *= inv;
        }
        hess.symmetrize();
        Ok(hess)
    }

    /// Cheap curvature estimate for preconditioning the quasi-Newton start:
    /// the exact matched Hessian plus the unmatched Hessian evaluated on a
    /// strided subset of responses (scaled back up). This only seeds the
    /// inverse-Hessian approximation; the optimum is untouched.
    pub(crate) fn hessian_preconditioner(&self, beta: &[f64]) -> Option<Matrix> {
        if self.noise.alpha < 2.0 {
            return None;
        }
        let n = self.n();
        if n <= 512 {
            return self.hessian(beta).ok();
        }
        let p = beta.len();
        let stride = n.div_ceil(512);
        let sub: Vec<f64> = self
            .sample
            .unmatched_y
            .iter()
            .step_by(stride)
            .copied()
            .collect();
        let proj = Self::project(&self.sample.unmatched_x, beta);
        let sums = unmatched_pass(
            &self.noise,
            &self.sample.unmatched_x,
            &sub,
            &proj,
            Want::GradHess,
        );
        let scale = n as f64 / sub.len() as f64;
        let mut hess = Matrix::zeros(p, p);
        for l1 in 0..p {
            for l2 in 0..p {
                hess[(l1, l2)] = scale * sums.hess[l1 * p + l2];
            }
        }
        if self.m() > 0 {
            let a = self.noise.alpha;
            let da = self.noise.d.powf(-a);
            let x = &self.sample.matched_x;
            for k in 0..self.m() {
                let e = self.sample.matched_y[k] - dot(x.row(k), beta);
                let curv = -a * (a - 1.0) * da * pow_abs(e, a - 2.0);
                for l1 in 0..p {
                    for l2 in 0..p {
                        hess[(l1, l2)] += curv * x[(k, l1)] * x[(k, l2)];
                    }
                }
            }
        }
        let inv = 1.0 / (n as f64 + self.m() as f64);
        for v in hess.data.iter_mut() {
            *v *= inv;
        }
        hess.symmetrize();
        Some(hess)
    }

    /// Exact-kink detection for the Laplace score: some `Yu_j` equals some
    /// projection `b'Xu_i`.
    fn check_unmatched_kink(&self, proj: &[f64]) -> Result<()> {
        let mut sorted = proj.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for &y in &self.sample.unmatched_y {
            if sorted.binary_search_by(|t| t.partial_cmp(&y).unwrap()).is_ok() {
                return Err(Error::NonDifferentiable(y));
            }
        }
        Ok(())
    }

    /// Likelihood of the intercept model: residuals `y - b1 - b' x`.
    /// Reduces to [`Self::loglik`] at `b1 = 0`.
    pub fn loglik_intercept(&self, intercept: f64, beta_rest: &[f64]) -> Result<f64> {
        self.check_dim(beta_rest)?;
        let shift = |ys: &[f64]| -> Vec<f64> { ys.iter().map(|y| y - intercept).collect() };
        let shifted = SemiSupervisedSample {
            matched_x: self.sample.matched_x.clone(),
            matched_y: shift(&self.sample.matched_y),
            unmatched_x: self.sample.unmatched_x.clone(),
            unmatched_y: shift(&self.sample.unmatched_y),
        };
        LikelihoodContext::new(&shifted, self.noise)?.loglik(beta_rest)
    }

    /// The unknown-scale likelihood: the noise is the unit-variance member
    /// of the family with the context's exponent, scaled by `sigma`.
    pub fn loglik_profile_sigma(&self, beta: &[f64], sigma: f64) -> Result<f64> {
        if !(sigma > 0.0) {
            return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
        }
        let standardized = NoiseDensity::standardized(self.noise.alpha)?;
        let scaled = standardized.scaled(sigma)?;
        LikelihoodContext {
            sample: self.sample,
            noise: scaled,
        }
        .loglik(beta)
    }

    /// Data-driven radius of a ball certain to contain a maximizer, together
    /// with the attained sphere minimum `A*` and its direction.
    pub fn existence_radius(&self) -> Result<ExistenceCertificate> {
        existence_radius(
            &self.sample.matched_x,
            &self.sample.matched_y,
            &self.sample.unmatched_y,
            self.noise.alpha,
        )
    }
}

fn pow_abs(t: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        t.abs().powf(e)
    }
}

/// Certificate that the likelihood maximizer lies in the closed ball of the
/// given radius (matched design of full rank).
#[derive(Debug, Clone, Serialize)]
pub struct ExistenceCertificate {
    pub radius: f64,
    pub a_star: f64,
    /// Unit direction achieving (approximately) the sphere minimum.
    pub direction: Vec<f64>,
}

/// `A* = inf_{|u|=1} sum_k |u'X_k|^a` and the radius
/// `R = ( (2^{a-1} sum_j |Yu_j|^a + 2^a sum_k |Y_k|^a) / A* )^{1/a}`.
pub fn existence_radius(
    matched_x: &Matrix,
    matched_y: &[f64],
    unmatched_y: &[f64],
    alpha: f64,
) -> Result<ExistenceCertificate> {
    let p = matched_x.cols;
    let m = matched_x.rows;
    if m == 0 || p == 0 {
        return Err(Error::RankDeficient { rank: 0, needed: p });
    }
    let rank = numerical_rank(matched_x, RANK_TOL);
    if rank < p {
        return Err(Error::RankDeficient { rank, needed: p });
    }
    let sphere_sum = |u: &[f64]| -> f64 {
        (0..m)
            .map(|k| dot(matched_x.row(k), u).abs().powf(alpha))
            .sum()
    };
    let (a_star, direction) = if p == 1 {
        // The unit sphere is {-1, +1}; both signs give the same value.
        (sphere_sum(&[1.0]), vec![1.0])
    } else {
        minimize_on_sphere(matched_x, alpha, &sphere_sum)
    };
    if !(a_star > 0.0) {
        return Err(Error::RankDeficient { rank: 0, needed: p });
    }
    let sum_unmatched: f64 = unmatched_y.iter().map(|y| y.abs().powf(alpha)).sum();
    let sum_matched: f64 = matched_y.iter().map(|y| y.abs().powf(alpha)).sum();
    let pow = 2.0f64.powf(alpha - 1.0);
    let radius = ((pow * sum_unmatched + 2.0 * pow * sum_matched) / a_star).powf(1.0 / alpha);
    Ok(ExistenceCertificate {
        radius,
        a_star,
        direction,
    })
}

/// Projected gradient descent of `u -> sum_k |u'X_k|^a` on the unit sphere,
/// from the small-eigenvector warm start plus 31 seeded random restarts.
fn minimize_on_sphere(
    matched_x: &Matrix,
    alpha: f64,
    objective: &dyn Fn(&[f64]) -> f64,
) -> (f64, Vec<f64>) {
    let p = matched_x.cols;
    let m = matched_x.rows;
    let gram = matched_x.transpose().matmul(matched_x);
    let (_, vecs) = sym_eigen(&gram);
    let mut starts: Vec<Vec<f64>> = vec![(0..p).map(|i| vecs[(i, 0)]).collect()];
    let mut rng = SeedStream::new(0x5f37_59df);
    while starts.len() < 32 {
        let mut u: Vec<f64> = (0..p).map(|_| rng.normal()).collect();
        let nrm = norm2(&u);
        if nrm > 1e-12 {
            u.iter_mut().for_each(|v| *v /= nrm);
            starts.push(u);
        }
    }
    let grad = |u: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..m {
            let t = dot(matched_x.row(k), u);
            let g = alpha * pow_abs(t, alpha - 1.0) * t.signum();
            if t == 0.0 {
                continue;
            }
            for l in 0..p {
                out[l] += g * matched_x[(k, l)];
            }
        }
    };
    let mut best_val = f64::INFINITY;
    let mut best_u = starts[0].clone();
    let mut g = vec![0.0; p];
    for start in starts {
        let mut u = start;
        let mut val = objective(&u);
        for _ in 0..500 {
            grad(&u, &mut g);
            // Tangent component; the radial part is removed by the sphere
            // constraint anyway.
            let radial = dot(&g, &u);
            for (gi, ui) in g.iter_mut().zip(&u) {
                *gi -= radial * ui;
            }
            let gn = norm2(&g);
            if gn < 1e-14 * (1.0 + val.abs()) {
                break;
            }
            let mut step = 1.0 / (1.0 + gn);
            let mut moved = false;
            for _ in 0..40 {
                let mut cand: Vec<f64> =
                    u.iter().zip(&g).map(|(ui, gi)| ui - step * gi).collect();
                let nrm = norm2(&cand);
                if nrm > 1e-14 {
                    cand.iter_mut().for_each(|v| *v /= nrm);
                    let cval = objective(&cand);
                    if cval < val - 1e-15 * (1.0 + val.abs()) {
                        u = cand;
                        val = cval;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if val < best_val {
            best_val = val;
            best_u = u;
        }
    }
    (best_val, best_u)
}

/// The limiting population criterion
/// `l(b) = 1/(1+lambda) E log( int f(Y - b'x) dP_X(x) )
///        + lambda/(1+lambda) E log f(Y - b'X)`,
/// evaluated by nested quadrature. Returns the total.
pub fn population_loglik(model: &PopulationModel, lambda: f64, beta: &[f64]) -> Result<f64> {
    let (u, m) = population_loglik_parts(model, beta)?;
    Ok(u / (lambda + 1.0) + lambda * m / (lambda + 1.0))
}

/// The unweighted unmatched and matched parts of the population criterion.
pub fn population_loglik_parts(model: &PopulationModel, beta: &[f64]) -> Result<(f64, f64)> {
    if beta.len() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "beta has length {}, model dimension {}",
            beta.len(),
            model.dim()
        )));
    }
    let noise = &model.noise;
    let rule_beta = model.law.projection_rule(beta, 64);
    let rule_beta0 = model.law.projection_rule(&model.beta0, 64);
    let mixture = |rule: &crate::model::ProjectionRule, y: f64| -> f64 {
        rule.t
            .iter()
            .zip(&rule.w)
            .map(|(&t, &w)| w * noise.pdf(y - t))
            .sum()
    };
    let (y_mean, y_sd) = model.response_moments();
    let (lo, hi) = (y_mean - 10.0 * y_sd, y_mean + 10.0 * y_sd);
    // Unmatched: E_Y log q_beta(Y) with the response density q_beta0.
    let unmatched = integrate(
        &|y: f64| {
            let density = mixture(&rule_beta0, y);
            if density <= 0.0 {
                return 0.0;
            }
            let q = mixture(&rule_beta, y).max(1e-300);
            density * q.ln()
        },
        lo,
        hi,
        1e-7,
    );
    // Matched: E log f(e + (beta0 - beta)'X) = log c - d^-a E|e + delta'X|^a.
    let delta: Vec<f64> = model
        .beta0
        .iter()
        .zip(beta)
        .map(|(b0, b)| b0 - b)
        .collect();
    let da = noise.d.powf(-noise.alpha);
    let moment = if norm2(&delta) == 0.0 {
        exp_power_abs_moment(noise.alpha, noise.d, noise.alpha)
    } else if noise.alpha == 2.0 {
        // E (t + e)^2 = t^2 + Var(e), exact.
        let rule_delta = model.law.projection_rule(&delta, 64);
        let second: f64 = rule_delta
            .t
            .iter()
            .zip(&rule_delta.w)
            .map(|(&t, &w)| w * t * t)
            .sum();
        second + noise.variance()
    } else {
        let rule_delta = model.law.projection_rule(&delta, 64);
        let tail = noise.d * 60.0f64.powf(1.0 / noise.alpha);
        rule_delta
            .t
            .iter()
            .zip(&rule_delta.w)
            .map(|(&t, &w)| {
                w * integrate(
                    &|e: f64| (t + e).abs().powf(noise.alpha) * noise.pdf(e),
                    -tail - t.abs(),
                    tail + t.abs(),
                    1e-9,
                )
            })
            .sum()
    };
    let matched = noise.c_alpha.ln() - da * moment;
    Ok((unmatched, matched))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CovariateLaw;

    fn tiny_sample() -> SemiSupervisedSample {
        SemiSupervisedSample::new(
            Matrix::from_rows(&[vec![1.0]]),
            vec![1.0],
            Matrix::from_rows(&[vec![1.0]]),
            vec![1.0],
        )
        .unwrap()
    }

    fn random_sample(rng: &mut SeedStream, n: usize, m: usize, p: usize) -> SemiSupervisedSample {
        let mut mk = |rows: usize| {
            let mut x = Matrix::zeros(rows, p);
            for v in x.data.iter_mut() {
                *v = rng.uniform_in(-2.0, 2.0);
            }
            x
        };
        let mx = mk(m);
        let ux = mk(n);
        let my = (0..m).map(|_| rng.uniform_in(-3.0, 3.0)).collect();
        let uy = (0..n).map(|_| rng.uniform_in(-3.0, 3.0)).collect();
        SemiSupervisedSample::new(mx, my, ux, uy).unwrap()
    }

    #[test]
    fn hand_computed_value() {
        // alpha=2, d=sqrt(2), one matched pair and one unmatched pair, all
        // entries 1, beta = 0: value is log c2 - 1/2 - 1/2 ... combined
        // = log f(1) = -1.418939.
        let sample = tiny_sample();
        let noise = NoiseDensity::new(2.0, std::f64::consts::SQRT_2).unwrap();
        let ctx = LikelihoodContext::new(&sample, noise).unwrap();
        let v = ctx.loglik(&[0.0]).unwrap();
        assert!((v - (-1.418939)).abs() < 1e-6, "got {v}");
    }

    #[test]
    fn matched_only_equals_pure_matched_term() {
        let mut rng = SeedStream::new(2);
        let sample = random_sample(&mut rng, 0, 7, 2);
        let noise = NoiseDensity::gaussian(1.0).unwrap();
        let ctx = LikelihoodContext::new(&sample, noise).unwrap();
        let beta = [0.3, -0.7];
        let v = ctx.loglik(&beta).unwrap();
        let matched = ctx.matched_mean_term(&beta).unwrap();
        assert!((v - matched).abs() < 1e-12);
    }

    #[test]
    fn unmatched_only_equals_pure_unmatched_term() {
        let mut rng = SeedStream::new(3);
        let sample = random_sample(&mut rng, 9, 0, 2);
        let noise = NoiseDensity::gaussian(1.0).unwrap();
        let ctx = LikelihoodContext::new(&sample, noise).unwrap();
        let beta = [0.3, -0.7];
        let v = ctx.loglik(&beta).unwrap();
        let unmatched = ctx.unmatched_mean_term(&beta).unwrap();
        assert!((v - unmatched).abs() < 1e-12);
    }

    #[test]
    fn permuting_unmatched_responses_keeps_value() {
        let mut rng = SeedStream::new(4);
        let sample = random_sample(&mut rng, 11, 3, 2);
        let noise = NoiseDensity::new(3.0, 1.0).unwrap();
        let beta = [0.5, 0.2];
        let v0 = LikelihoodContext::new(&sample, noise)
            .unwrap()
            .loglik(&beta)
            .unwrap();
        let mut shuffled = sample.clone();
        shuffled.unmatched_y.reverse();
        shuffled.unmatched_y.swap(0, 5);
        let v1 = LikelihoodContext::new(&shuffled, noise)
            .unwrap()
            .loglik(&beta)
            .unwrap();
        assert!((v0 - v1).abs() < 1e-12);
    }

    #[test]
    fn weight_decomposition() {
        let mut rng = SeedStream::new(5);
        let sample = random_sample(&mut rng, 13, 6, 3);
        let noise = NoiseDensity::new(2.0, 1.4).unwrap();
        let ctx = LikelihoodContext::new(&sample, noise).unwrap();
        let beta = [0.2, -0.4, 0.9];
        let w = ctx.weight();
        let recomposed = w * ctx.unmatched_mean_term(&beta).unwrap()
            + (1.0 - w) * ctx.matched_mean_term(&beta).unwrap();
        let direct = ctx.loglik(&beta).unwrap();
        assert!((recomposed - direct).abs() < 1e-12);
    }

    #[test]
    fn score_matches_finite_differences() {
        let mut rng = SeedStream::new(6);
        for &alpha in &[2.0, 3.0] {
            for &p in &[1usize, 3] {
                for _ in 0..4 {
                    let sample = random_sample(&mut rng, 40, 15, p);
                    let noise = NoiseDensity::new(alpha, 1.2).unwrap();
                    let ctx = LikelihoodContext::new(&sample, noise).unwrap();
                    let beta: Vec<f64> = (0..p).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
                    let (_, score) = ctx.value_and_score(&beta).unwrap();
                    for l in 0..p {
                        let h = 1e-5 * (1.0 + beta[l].abs());
                        let mut bp = beta.clone();
                        bp[l] += h;
                        let mut bm = beta.clone();
                        bm[l] -= h;
                        let fd =
                            (ctx.loglik(&bp).unwrap() - ctx.loglik(&bm).unwrap()) / (2.0 * h);
                        let denom = 1.0 + score[l].abs();
                        assert!(
                            (fd - score[l]).abs() / denom < 1e-5,
                            "alpha={alpha} p={p} l={l}: fd={fd} score={}",
                            score[l]
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn hessian_matches_score_differences() {
        let mut rng = SeedStream::new(7);
        for &alpha in &[2.0, 3.0] {
            let p = 3;
            let sample = random_sample(&mut rng, 30, 10, p);
            let noise = NoiseDensity::new(alpha, 1.2).unwrap();
            let ctx = LikelihoodContext::new(&sample, noise).unwrap();
            let beta: Vec<f64> = (0..p).map(|_| rng.uniform_in(-0.8, 0.8)).collect();
            let hess = ctx.hessian(&beta).unwrap();
            for l in 0..p {
                let h = 1e-5 * (1.0 + beta[l].abs());
                let mut bp = beta.clone();
                bp[l] += h;
                let mut bm = beta.clone();
                bm[l] -= h;
                let sp = ctx.score(&bp).unwrap();
                let sm = ctx.score(&bm).unwrap();
                for l2 in 0..p {
                    let fd = (sp[l2] - sm[l2]) / (2.0 * h);
                    let denom = 1.0 + hess[(l, l2)].abs();
                    assert!(
                        (fd - hess[(l, l2)]).abs() / denom < 1e-4,
                        "alpha={alpha} ({l},{l2}): fd={fd} hess={}",
                        hess[(l, l2)]
                    );
                }
            }
        }
    }

    #[test]
    fn single_gaussian_point_score_closed_form() {
        // p=1, m=1, n=0, alpha=2: score(beta) = X (Y - beta X) / sigma^2.
        let sample = SemiSupervisedSample::matched_only(
            Matrix::from_rows(&[vec![1.5]]),
            vec![2.0],
        )
        .unwrap();
        let sigma = 0.8;
        let noise = NoiseDensity::gaussian(sigma).unwrap();
        let ctx = LikelihoodContext::new(&sample, noise).unwrap();
        for &b in &[0.0, 0.4, -1.0] {
            let s = ctx.score(&[b]).unwrap()[0];
            let expect = 1.5 * (2.0 - b * 1.5) / (sigma * sigma);
            assert!((s - expect).abs() < 1e-12, "b={b}: {s} vs {expect}");
        }
    }

    #[test]
    fn matched_only_gaussian_hessian_closed_form() {
        let mut rng = SeedStream::new(8);
        let m = 9;
        let p = 2;
        let sample = random_sample(&mut rng, 0, m, p);
        let sigma = 1.3;
        let noise = NoiseDensity::gaussian(sigma).unwrap();
        let ctx = LikelihoodContext::new(&sample, noise).unwrap();
        let hess = ctx.hessian(&[0.1, -0.2]).unwrap();
        let mut expect = Matrix::zeros(p, p);
        for k in 0..m {
            for l1 in 0..p {
                for l2 in 0..p {
                    expect[(l1, l2)] -= sample.matched_x[(k, l1)] * sample.matched_x[(k, l2)]
                        / (sigma * sigma * m as f64);
                }
            }
        }
        assert!(hess.max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn laplace_score_unsupported_at_kink_only() {
        let sample = SemiSupervisedSample::matched_only(
            Matrix::from_rows(&[vec![1.0]]),
            vec![0.5],
        )
        .unwrap();
        let noise = NoiseDensity::laplace(1.0).unwrap();
        let ctx = LikelihoodContext::new(&sample, noise).unwrap();
        // At beta = 0.5 the single residual is exactly zero.
        assert!(matches!(
            ctx.score(&[0.5]),
            Err(Error::NonDifferentiable(_))
        ));
        assert!(ctx.score(&[0.3]).is_ok());
        assert!(matches!(
            ctx.hessian(&[0.3]),
            Err(Error::UnsupportedOrder { .. })
        ));
    }

    #[test]
    fn intercept_reduces_to_plain_and_translates() {
        let mut rng = SeedStream::new(9);
        let sample = random_sample(&mut rng, 8, 5, 2);
        let noise = NoiseDensity::new(2.0, 1.1).unwrap();
        let ctx = LikelihoodContext::new(&sample, noise).unwrap();
        let beta = [0.4, -0.1];
        let plain = ctx.loglik(&beta).unwrap();
        let with_zero = ctx.loglik_intercept(0.0, &beta).unwrap();
        assert!((plain - with_zero).abs() < 1e-14);
        // Shift all responses by c and set the intercept to c: unchanged.
        let c = 2.7;
        let mut shifted = sample.clone();
        for y in shifted.matched_y.iter_mut() {
            *y += c;
        }
        for y in shifted.unmatched_y.iter_mut() {
            *y += c;
        }
        let ctx2 = LikelihoodContext::new(&shifted, noise).unwrap();
        let translated = ctx2.loglik_intercept(c, &beta).unwrap();
        assert!((plain - translated).abs() < 1e-12);
    }

    #[test]
    fn profile_sigma_decreases_for_huge_sigma() {
        let mut rng = SeedStream::new(10);
        let sample = random_sample(&mut rng, 10, 5, 1);
        let noise = NoiseDensity::gaussian(1.0).unwrap();
        let ctx = LikelihoodContext::new(&sample, noise).unwrap();
        let beta = [0.2];
        let huge = ctx.loglik_profile_sigma(&beta, 1e6).unwrap();
        let huger = ctx.loglik_profile_sigma(&beta, 3e6).unwrap();
        assert!(huger < huge);
        // Tail behavior ~ -log sigma + const.
        let diff = huge - huger;
        let expect = (3e6f64 / 1e6).ln();
        assert!((diff - expect).abs() < 1e-3, "diff {diff} expect {expect}");
        assert!(matches!(
            ctx.loglik_profile_sigma(&beta, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn existence_radius_hand_case() {
        let sample = tiny_sample();
        let noise = NoiseDensity::new(2.0, std::f64::consts::SQRT_2).unwrap();
        let ctx = LikelihoodContext::new(&sample, noise).unwrap();
        let cert = ctx.existence_radius().unwrap();
        assert!((cert.a_star - 1.0).abs() < 1e-12);
        assert!((cert.radius - 6.0f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn existence_radius_p1_exact() {
        let x = Matrix::from_rows(&[vec![0.5], vec![-1.5], vec![2.0]]);
        let cert = existence_radius(&x, &[1.0, 2.0, 3.0], &[0.5], 3.0).unwrap();
        let expect: f64 = 0.5f64.powi(3) + 1.5f64.powi(3) + 2.0f64.powi(3);
        assert!((cert.a_star - expect).abs() < 1e-12);
    }

    #[test]
    fn existence_radius_reproduces_formula() {
        let mut rng = SeedStream::new(11);
        let sample = random_sample(&mut rng, 12, 8, 2);
        let alpha = 2.0;
        let cert = existence_radius(
            &sample.matched_x,
            &sample.matched_y,
            &sample.unmatched_y,
            alpha,
        )
        .unwrap();
        let su: f64 = sample.unmatched_y.iter().map(|y| y * y).sum();
        let sm: f64 = sample.matched_y.iter().map(|y| y * y).sum();
        let again = ((2.0 * su + 4.0 * sm) / cert.a_star).sqrt();
        assert!((cert.radius - again).abs() < 1e-10 * (1.0 + again));
    }

    #[test]
    fn sphere_minimum_beats_random_probes() {
        let mut rng = SeedStream::new(12);
        let sample = random_sample(&mut rng, 4, 10, 2);
        let cert = existence_radius(
            &sample.matched_x,
            &sample.matched_y,
            &sample.unmatched_y,
            2.0,
        )
        .unwrap();
        for _ in 0..10_000 {
            let mut u = [rng.normal(), rng.normal()];
            let nrm = (u[0] * u[0] + u[1] * u[1]).sqrt();
            u[0] /= nrm;
            u[1] /= nrm;
            let val: f64 = (0..sample.m())
                .map(|k| {
                    let t = sample.matched_x[(k, 0)] * u[0] + sample.matched_x[(k, 1)] * u[1];
                    t * t
                })
                .sum();
            assert!(cert.a_star <= val + 1e-9);
        }
    }

    #[test]
    fn rank_deficient_design_rejected() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]);
        assert!(matches!(
            existence_radius(&x, &[1.0, 2.0, 3.0], &[], 2.0),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn boundary_rejection_outside_radius() {
        let mut rng = SeedStream::new(13);
        let sample = random_sample(&mut rng, 10, 6, 2);
        let noise = NoiseDensity::new(2.0, 1.0).unwrap();
        let ctx = LikelihoodContext::new(&sample, noise).unwrap();
        let cert = ctx.existence_radius().unwrap();
        let base = ctx.loglik(&[0.0, 0.0]).unwrap();
        for _ in 0..20 {
            let mut u = [rng.normal(), rng.normal()];
            let nrm = (u[0] * u[0] + u[1] * u[1]).sqrt();
            let r = cert.radius * (1.0 + rng.uniform());
            u[0] *= r / nrm;
            u[1] *= r / nrm;
            let v = ctx.loglik(&u).unwrap();
            assert!(v < base, "loglik({u:?}) = {v} >= loglik(0) = {base}");
        }
    }

    #[test]
    fn population_matched_part_gaussian_entropy() {
        // Gaussian everything, p=1, at beta0: matched part equals
        // -0.5 log(2 pi sigma^2) - 0.5.
        let sigma_eps = 1.7;
        let model = PopulationModel::new(
            vec![0.6],
            CovariateLaw::Gaussian {
                mean: vec![0.0],
                cov: Matrix::from_rows(&[vec![1.0]]),
            },
            NoiseDensity::gaussian(sigma_eps).unwrap(),
        )
        .unwrap();
        let (_, matched) = population_loglik_parts(&model, &[0.6]).unwrap();
        let expect = -0.5 * (2.0 * std::f64::consts::PI * sigma_eps * sigma_eps).ln() - 0.5;
        assert!((matched - expect).abs() < 1e-9, "{matched} vs {expect}");
    }

    #[test]
    fn population_criterion_peaks_at_truth() {
        let model = PopulationModel::new(
            vec![0.8, -0.5],
            CovariateLaw::Gaussian {
                mean: vec![0.3, 0.0],
                cov: Matrix::identity(2),
            },
            NoiseDensity::gaussian(1.0).unwrap(),
        )
        .unwrap();
        let lambda = 0.4;
        let at_truth = population_loglik(&model, lambda, &[0.8, -0.5]).unwrap();
        let mut rng = SeedStream::new(14);
        for _ in 0..100 {
            let cand = [rng.uniform_in(-2.0, 2.0), rng.uniform_in(-2.0, 2.0)];
            let dist =
                ((cand[0] - 0.8).powi(2) + (cand[1] + 0.5).powi(2)).sqrt();
            if dist < 1e-9 {
                continue;
            }
            let v = population_loglik(&model, lambda, &cand).unwrap();
            assert!(v <= at_truth + 1e-9, "l({cand:?}) = {v} > l(b0) = {at_truth}");
            if dist >= 0.1 {
                assert!(
                    at_truth - v >= 1e-6,
                    "not strictly separated at distance {dist}: {v} vs {at_truth}"
                );
            }
        }
    }

    #[test]
    fn unmatched_part_symmetric_under_sign_flip() {
        // Centered symmetric design: the unmatched part alone cannot tell
        // beta0 from -beta0.
        let model = PopulationModel::new(
            vec![0.9],
            CovariateLaw::Gaussian {
                mean: vec![0.0],
                cov: Matrix::from_rows(&[vec![1.0]]),
            },
            NoiseDensity::gaussian(1.0).unwrap(),
        )
        .unwrap();
        let (u_pos, _) = population_loglik_parts(&model, &[0.9]).unwrap();
        let (u_neg, _) = population_loglik_parts(&model, &[-0.9]).unwrap();
        assert!((u_pos - u_neg).abs() < 1e-9);
        // The matched part does tell them apart.
        let (_, m_pos) = population_loglik_parts(&model, &[0.9]).unwrap();
        let (_, m_neg) = population_loglik_parts(&model, &[-0.9]).unwrap();
        assert!(m_pos > m_neg + 0.1);
    }
}
