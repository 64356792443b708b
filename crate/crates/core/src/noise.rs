//! The exponential-power noise family `f(t) = c_a exp(-d^-a |t|^a)`.
//!
//! `a = 1` is Laplace with intensity `d`, `a = 2` is the centered Gaussian
//! with standard deviation `d / sqrt(2)`. The normalizer is
//! `c_a = a / (2 d Gamma(1/a))`.

use crate::error::{Error, Result};
use crate::numeric::rng::SeedStream;
use crate::numeric::special::{gamma_p, ln_gamma};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseDensity {
    /// Exponent `a >= 1`. The estimators require an integer value; the
    /// density, CDF and Fisher integral are defined for any real `a >= 1`.
    pub alpha: f64,
    /// Scale `d > 0`, in response units.
    pub d: f64,
    /// Normalizer, derived from `alpha` and `d`.
    pub c_alpha: f64,
}

impl NoiseDensity {
    pub fn new(alpha: f64, d: f64) -> Result<Self> {
        if !(alpha >= 1.0) || !alpha.is_finite() {
            return Err(Error::Domain(format!("exponent must be >= 1, got {alpha}")));
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Domain(format!("scale must be positive, got {d}")));
        }
        let c_alpha = alpha / (2.0 * d * ln_gamma(1.0 / alpha).exp());
        Ok(NoiseDensity { alpha, d, c_alpha })
    }

    /// Centered Gaussian with standard deviation `sigma`.
    pub fn gaussian(sigma: f64) -> Result<Self> {
        NoiseDensity::new(2.0, std::f64::consts::SQRT_2 * sigma)
    }

    /// Laplace with intensity (scale) `mu`; variance `2 mu^2`.
    pub fn laplace(mu: f64) -> Result<Self> {
        NoiseDensity::new(1.0, mu)
    }

    /// Member of the family with exponent `alpha` and unit variance.
    pub fn standardized(alpha: f64) -> Result<Self> {
        let d = (ln_gamma(1.0 / alpha) - ln_gamma(3.0 / alpha)).exp().sqrt();
        NoiseDensity::new(alpha, d)
    }

    /// Same exponent, scale multiplied by `s` (the `sigma`-profile family).
    pub fn scaled(&self, s: f64) -> Result<Self> {
        NoiseDensity::new(self.alpha, self.d * s)
    }

    pub fn is_integer_exponent(&self) -> bool {
        (self.alpha - self.alpha.round()).abs() < 1e-12
    }

    /// Variance `d^2 Gamma(3/a) / Gamma(1/a)`.
    pub fn variance(&self) -> f64 {
        self.d * self.d * (ln_gamma(3.0 / self.alpha) - ln_gamma(1.0 / self.alpha)).exp()
    }

    pub fn pdf(&self, t: f64) -> f64 {
        self.c_alpha * (-(t.abs() / self.d).powf(self.alpha)).exp()
    }

    pub fn log_pdf(&self, t: f64) -> f64 {
        self.c_alpha.ln() - (t.abs() / self.d).powf(self.alpha)
    }

    /// Density (`order` 0), or its first or second derivative.
    ///
    /// For `a = 1` the density has a kink at the origin; derivative orders
    /// there signal [`Error::NonDifferentiable`] so callers fall back to a
    /// derivative-free path instead of silently using a subgradient.
    pub fn evaluate(&self, t: f64, order: usize) -> Result<f64> {
        let a = self.alpha;
        match order {
            0 => Ok(self.pdf(t)),
            1 => {
                if a == 1.0 && t == 0.0 {
                    return Err(Error::NonDifferentiable(t));
                }
                Ok(-self.deriv_factor(t) * self.pdf(t))
            }
            2 => {
                if t == 0.0 && a < 2.0 {
                    return Err(Error::NonDifferentiable(t));
                }
                let g = self.deriv_factor(t);
                let da = self.d.powf(-a);
                let second = a * (a - 1.0) * da * pow_abs(t, a - 2.0);
                Ok((g * g - second) * self.pdf(t))
            }
            _ => Err(Error::UnsupportedOrder {
                order,
                alpha: a,
            }),
        }
    }

    /// `-f'(t)/f(t) = a d^-a |t|^{a-1} sgn(t)`, finite everywhere except the
    /// Laplace kink.
    pub(crate) fn deriv_factor(&self, t: f64) -> f64 {
        let a = self.alpha;
        a * self.d.powf(-a) * pow_abs(t, a - 1.0) * sign(t)
    }

    /// CDF via the regularized lower incomplete gamma:
    /// `F(t) = 1/2 + sgn(t)/2 P(1/a, (|t|/d)^a)`.
    pub fn cdf(&self, t: f64) -> f64 {
        if t == 0.0 {
            return 0.5;
        }
        let u = (t.abs() / self.d).powf(self.alpha);
        0.5 + 0.5 * sign(t) * gamma_p(1.0 / self.alpha, u)
    }

    /// i.i.d. draws: `|e| = d G^{1/a}` with `G ~ Gamma(1/a, 1)` and an
    /// independent random sign. Deterministic given the stream.
    pub fn sample(&self, rng: &mut SeedStream, count: usize) -> Vec<f64> {
        assert!(count >= 1, "sample count must be at least 1");
        (0..count)
            .map(|_| {
                let g = rng.gamma(1.0 / self.alpha);
                let magnitude = self.d * g.powf(1.0 / self.alpha);
                if rng.uniform() < 0.5 {
                    -magnitude
                } else {
                    magnitude
                }
            })
            .collect()
    }

    /// `integral (f')^2 / f = (a^2/d^2) Gamma(2 - 1/a) / Gamma(1/a)`.
    pub fn fisher_integral(&self) -> f64 {
        let a = self.alpha;
        a * a / (self.d * self.d) * (ln_gamma(2.0 - 1.0 / a) - ln_gamma(1.0 / a)).exp()
    }
}

fn sign(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `|t|^e` with the convention `|t|^0 = 1` (also at `t = 0`).
fn pow_abs(t: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        t.abs().powf(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::quad::integrate;

    fn truncation(noise: &NoiseDensity) -> f64 {
        noise.d * 60.0_f64.powf(1.0 / noise.alpha)
    }

    #[test]
    fn laplace_density_at_origin() {
        let f = NoiseDensity::laplace(1.0).unwrap();
        assert!((f.pdf(0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gaussian_odd_derivative_vanishes_at_origin() {
        let f = NoiseDensity::new(2.0, std::f64::consts::SQRT_2).unwrap();
        assert_eq!(f.evaluate(0.0, 1).unwrap(), 0.0);
    }

    #[test]
    fn standard_normal_density_matches_quadrature_normalization() {
        // Oracle: normalize exp(-t^2/2) by quadrature.
        let z = integrate(&|t: f64| (-0.5 * t * t).exp(), -40.0, 40.0, 1e-12);
        let f = NoiseDensity::new(2.0, std::f64::consts::SQRT_2).unwrap();
        assert!((f.pdf(0.0) - 1.0 / z).abs() < 1e-10);
        assert!((f.pdf(0.0) - 0.3989423).abs() < 1e-7);
    }

    #[test]
    fn normalizer_matches_definition() {
        for &alpha in &[1.0, 2.0, 3.0, 4.0] {
            for &d in &[0.5, 1.0, 2.53] {
                let f = NoiseDensity::new(alpha, d).unwrap();
                let expect = alpha / (2.0 * d * crate::numeric::special::gamma(1.0 / alpha));
                assert!((f.c_alpha / expect - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        for &alpha in &[1.0, 2.0, 3.0, 4.0] {
            for &d in &[0.5, 1.0, 2.53] {
                let f = NoiseDensity::new(alpha, d).unwrap();
                let l = truncation(&f);
                let total = integrate(&|t| f.pdf(t), -l, l, 1e-10);
                assert!((total - 1.0).abs() < 1e-8, "alpha={alpha} d={d}: {total}");
            }
        }
    }

    #[test]
    fn pdf_symmetric() {
        let f = NoiseDensity::new(3.0, 1.7).unwrap();
        for &t in &[0.1, 0.5, 2.0, 7.3] {
            assert_eq!(f.pdf(t), f.pdf(-t));
        }
    }

    #[test]
    fn variance_matches_quadrature() {
        for &alpha in &[1.0, 2.0, 3.0] {
            let f = NoiseDensity::new(alpha, 1.3).unwrap();
            let l = truncation(&f);
            let v = integrate(&|t| t * t * f.pdf(t), -l, l, 1e-10);
            assert!((v - f.variance()).abs() < 1e-8, "alpha={alpha}");
        }
    }

    #[test]
    fn laplace_kink_signals_error() {
        let f = NoiseDensity::laplace(1.0).unwrap();
        assert!(matches!(
            f.evaluate(0.0, 1),
            Err(Error::NonDifferentiable(_))
        ));
        // Away from the kink the derivative exists.
        assert!(f.evaluate(0.3, 1).is_ok());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = SeedStream::new(11);
        for &alpha in &[1.0, 2.0, 3.0, 4.0] {
            let f = NoiseDensity::new(alpha, 1.1).unwrap();
            for _ in 0..50 {
                let t = rng.uniform_in(-4.0, 4.0);
                if alpha == 1.0 && t.abs() < 1e-3 {
                    continue;
                }
                let h = 1e-6 * (1.0 + t.abs());
                let fd = (f.pdf(t + h) - f.pdf(t - h)) / (2.0 * h);
                let an = f.evaluate(t, 1).unwrap();
                assert!(
                    (fd - an).abs() <= 1e-6 * (1.0 + an.abs()),
                    "alpha={alpha} t={t}: fd={fd} analytic={an}"
                );
                if alpha >= 2.0 {
                    let fd2 = (f.evaluate(t + h, 1).unwrap() - f.evaluate(t - h, 1).unwrap())
                        / (2.0 * h);
                    let an2 = f.evaluate(t, 2).unwrap();
                    assert!(
                        (fd2 - an2).abs() <= 1e-6 * (1.0 + an2.abs()),
                        "alpha={alpha} t={t}: fd2={fd2} analytic={an2}"
                    );
                }
            }
        }
    }

    #[test]
    fn cdf_fixed_points() {
        let gauss = NoiseDensity::new(2.0, std::f64::consts::SQRT_2).unwrap();
        assert!((gauss.cdf(0.0) - 0.5).abs() < 1e-15);
        let lap = NoiseDensity::laplace(1.0).unwrap();
        assert!((lap.cdf(std::f64::consts::LN_2) - 0.75).abs() < 1e-14);
    }

    #[test]
    fn cdf_matches_pdf_quadrature() {
        let f = NoiseDensity::new(3.0, 1.0).unwrap();
        let l = truncation(&f);
        let direct = integrate(&|t| f.pdf(t), -l, 1.0, 1e-10);
        assert!((f.cdf(1.0) - direct).abs() < 1e-8);
    }

    #[test]
    fn cdf_mirror_symmetry_and_monotonicity() {
        let f = NoiseDensity::new(3.0, 0.8).unwrap();
        let mut prev = 0.0;
        for i in 0..200 {
            let t = -6.0 + i as f64 * 0.06;
            let c = f.cdf(t);
            assert!(c >= prev);
            prev = c;
            assert!((f.cdf(-t) - (1.0 - f.cdf(t))).abs() < 1e-13);
        }
    }

    #[test]
    fn cdf_derivative_matches_pdf() {
        let mut rng = SeedStream::new(5);
        for &alpha in &[1.5, 2.0, 3.0] {
            let f = NoiseDensity::new(alpha, 1.2).unwrap();
            for _ in 0..40 {
                let t = rng.uniform_in(-3.0, 3.0);
                let h = 1e-5;
                let fd = (f.cdf(t + h) - f.cdf(t - h)) / (2.0 * h);
                assert!(
                    (fd - f.pdf(t)).abs() < 1e-6 * (1.0 + f.pdf(t)),
                    "alpha={alpha} t={t}"
                );
            }
        }
    }

    /// Maclaurin-series erf, independent of the incomplete-gamma route.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for n in 1..200 {
            let nf = n as f64;
            term *= -x * x / nf;
            let add = term / (2.0 * nf + 1.0);
            sum += add;
            if add.abs() < 1e-18 {
                break;
            }
        }
        2.0 / std::f64::consts::PI.sqrt() * sum
    }

    #[test]
    fn gaussian_embedding_matches_error_function_form() {
        for &sigma in &[0.7, 1.0, 2.0] {
            let f = NoiseDensity::gaussian(sigma).unwrap();
            for i in 0..61 {
                let t = -3.0 * sigma + i as f64 * 0.1 * sigma;
                let pdf_ref = (-0.5 * t * t / (sigma * sigma)).exp()
                    / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
                let cdf_ref = 0.5 * (1.0 + erf_series(t / (sigma * std::f64::consts::SQRT_2)));
                assert!((f.pdf(t) - pdf_ref).abs() < 1e-10);
                assert!((f.cdf(t) - cdf_ref).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sampling_moments() {
        let f = NoiseDensity::new(2.0, std::f64::consts::SQRT_2).unwrap();
        let mut rng = SeedStream::new(17);
        let n = 100_000;
        let draws = f.sample(&mut rng, n);
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        // se(mean) = sigma/sqrt(n); se(var) ~ sqrt(2/n) for the Gaussian.
        assert!(mean.abs() < 3.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 3.0 * (2.0 / n as f64).sqrt());
        // Symmetry holds for every exponent; check another one.
        let f3 = NoiseDensity::new(3.0, 1.4).unwrap();
        let draws = f3.sample(&mut rng, n);
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * f3.variance().sqrt() / (n as f64).sqrt());
    }

    #[test]
    fn sampling_kolmogorov_smirnov() {
        let f = NoiseDensity::laplace(1.0).unwrap();
        let mut rng = SeedStream::new(23);
        let n = 100_000;
        let mut draws = f.sample(&mut rng, n);
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d: f64 = 0.0;
        for (i, &x) in draws.iter().enumerate() {
            let c = f.cdf(x);
            d = d.max((c - i as f64 / n as f64).abs());
            d = d.max((c - (i + 1) as f64 / n as f64).abs());
        }
        assert!(d < 1.63 / (n as f64).sqrt(), "KS statistic {d}");
    }

    #[test]
    fn fisher_integral_closed_forms() {
        let sigma2 = NoiseDensity::gaussian(2.0).unwrap();
        assert!((sigma2.fisher_integral() - 0.25).abs() < 1e-12);
        let lap = NoiseDensity::laplace(1.0).unwrap();
        assert!((lap.fisher_integral() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fisher_integral_matches_quadrature() {
        for &(alpha, d) in &[(2.0, 1.3), (3.0, 1.5), (4.0, 0.9)] {
            let f = NoiseDensity::new(alpha, d).unwrap();
            let l = truncation(&f);
            let quad = integrate(
                &|t| {
                    let fp = f.evaluate(t, 1).unwrap();
                    fp * fp / f.pdf(t)
                },
                -l,
                l,
                1e-11,
            );
            assert!(
                (quad - f.fisher_integral()).abs() < 1e-8,
                "alpha={alpha} d={d}: quad {quad} closed {}",
                f.fisher_integral()
            );
        }
    }

    #[test]
    fn standardized_family_has_unit_variance() {
        for &alpha in &[1.0, 2.0, 3.0, 4.0] {
            let f = NoiseDensity::standardized(alpha).unwrap();
            assert!((f.variance() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let f = NoiseDensity::new(3.0, 1.0).unwrap();
        let a = f.sample(&mut SeedStream::new(99), 32);
        let b = f.sample(&mut SeedStream::new(99), 32);
        assert_eq!(a, b);
    }
}
