//! Population models: a true regression vector, a covariate law, and a
//! noise density. Used by the population criterion, the quadrature route to
//! the asymptotic covariances, and the simulation harness.

use crate::error::{Error, Result};
use crate::noise::NoiseDensity;
use crate::numeric::linalg::{cholesky, dot, Matrix};
use crate::numeric::quad::{gauss_hermite, gauss_legendre_on};
use crate::numeric::rng::SeedStream;

/// Covariate distributions with quadrature support.
#[derive(Debug, Clone)]
pub enum CovariateLaw {
    Gaussian { mean: Vec<f64>, cov: Matrix },
    /// Axis-aligned box with independent uniform coordinates.
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
}

/// One-dimensional reduction of the covariate law along a direction `v`:
/// nodes of `T = v'X` with weights and the conditional moment
/// `x_bar ~ E[X | T = t]` (exact for the Gaussian; the box law keeps the
/// full tensor nodes, so `x_bar` is just the node position).
pub struct ProjectionRule {
    pub t: Vec<f64>,
    pub w: Vec<f64>,
    /// Row-major `len(t) x p` block of conditional covariate positions.
    pub x_bar: Matrix,
}

impl CovariateLaw {
    pub fn dim(&self) -> usize {
        match self {
            CovariateLaw::Gaussian { mean, .. } => mean.len(),
            CovariateLaw::UniformBox { lower, .. } => lower.len(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        match self {
            CovariateLaw::Gaussian { mean, .. } => mean.clone(),
            CovariateLaw::UniformBox { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        }
    }

    /// `E[X X']`.
    pub fn second_moment(&self) -> Matrix {
        match self {
            CovariateLaw::Gaussian { mean, cov } => {
                cov.add(&Matrix::outer(mean, mean))
            }
            CovariateLaw::UniformBox { lower, upper } => {
                let mu = self.mean();
                let mut m = Matrix::outer(&mu, &mu);
                for j in 0..mu.len() {
                    m[(j, j)] += (upper[j] - lower[j]).powi(2) / 12.0;
                }
                m
            }
        }
    }

    /// Variance of the projection `v'X`.
    pub fn projection_variance(&self, v: &[f64]) -> f64 {
        match self {
            CovariateLaw::Gaussian { cov, .. } => dot(&cov.matvec(v), v),
            CovariateLaw::UniformBox { lower, upper } => v
                .iter()
                .enumerate()
                .map(|(j, vj)| vj * vj * (upper[j] - lower[j]).powi(2) / 12.0)
                .collect::<Vec<f64>>()
                .iter()
                .sum(),
        }
    }

    /// Quadrature nodes for integrals of the form
    /// `int g(v'x) f_X(x) dx` and `int x g(v'x) f_X(x) dx`,
    /// with `order` points for a one-dimensional reduction (the box law uses
    /// a tensor rule capped per axis).
    pub fn projection_rule(&self, v: &[f64], order: usize) -> ProjectionRule {
        match self {
            CovariateLaw::Gaussian { mean, cov } => {
                let p = mean.len();
                let m_t = dot(mean, v);
                let var = dot(&cov.matvec(v), v).max(0.0);
                if var <= 1e-300 {
                    return ProjectionRule {
                        t: vec![m_t],
                        w: vec![1.0],
                        x_bar: Matrix {
                            rows: 1,
                            cols: p,
                            data: mean.clone(),
                        },
                    };
                }
                let sd = var.sqrt();
                let (nodes, weights) = gauss_hermite(order);
                let inv_sqrt_pi = 1.0 / std::f64::consts::PI.sqrt();
                let slope = cov.matvec(v); // Cov(X, T) / Var(T) * (t - m_t)
                let mut t = Vec::with_capacity(order);
                let mut w = Vec::with_capacity(order);
                let mut x_bar = Matrix::zeros(order, p);
                for (k, (&z, &wz)) in nodes.iter().zip(&weights).enumerate() {
                    let tk = m_t + std::f64::consts::SQRT_2 * sd * z;
                    t.push(tk);
                    w.push(wz * inv_sqrt_pi);
                    for j in 0..p {
                        x_bar[(k, j)] = mean[j] + slope[j] * (tk - m_t) / var;
                    }
                }
                ProjectionRule { t, w, x_bar }
            }
            CovariateLaw::UniformBox { lower, upper } => {
                let p = lower.len();
                let per_axis = match p {
                    1 => order,
                    2 => order.min(48),
                    _ => order.min(24),
                };
                let mut axes = Vec::with_capacity(p);
                for j in 0..p {
                    let (xs, ws) = gauss_legendre_on(per_axis, lower[j], upper[j]);
                    let width = upper[j] - lower[j];
                    let ws: Vec<f64> = ws.iter().map(|w| w / width).collect();
                    axes.push((xs, ws));
                }
                let total = per_axis.pow(p as u32);
                let mut t = Vec::with_capacity(total);
                let mut w = Vec::with_capacity(total);
                let mut x_bar = Matrix::zeros(total, p);
                let mut index = vec![0usize; p];
                for k in 0..total {
                    let mut weight = 1.0;
                    let mut proj = 0.0;
                    for j in 0..p {
                        let (xs, ws) = &axes[j];
                        let x = xs[index[j]];
                        weight *= ws[index[j]];
                        proj += v[j] * x;
                        x_bar[(k, j)] = x;
                    }
                    t.push(proj);
                    w.push(weight);
                    // odometer increment
                    for j in (0..p).rev() {
                        index[j] += 1;
                        if index[j] < per_axis {
                            break;
                        }
                        index[j] = 0;
                    }
                }
                ProjectionRule { t, w, x_bar }
            }
        }
    }

    /// Draw one covariate vector.
    pub fn sample_into(&self, rng: &mut SeedStream, out: &mut [f64]) -> Result<()> {
        match self {
            CovariateLaw::Gaussian { mean, cov } => {
                let p = mean.len();
                let l = cholesky(cov)?;
                let z: Vec<f64> = (0..p).map(|_| rng.normal()).collect();
                for i in 0..p {
                    let mut acc = mean[i];
                    for k in 0..=i {
                        acc += l[(i, k)] * z[k];
                    }
                    out[i] = acc;
                }
                Ok(())
            }
            CovariateLaw::UniformBox { lower, upper } => {
                for j in 0..lower.len() {
                    out[j] = rng.uniform_in(lower[j], upper[j]);
                }
                Ok(())
            }
        }
    }

    /// Draw `count` rows at once; Gaussian laws factor the covariance once.
    pub fn sample_matrix(&self, rng: &mut SeedStream, count: usize) -> Result<Matrix> {
        let p = self.dim();
        let mut out = Matrix::zeros(count, p);
        match self {
            CovariateLaw::Gaussian { mean, cov } => {
                let l = cholesky(cov)?;
                for r in 0..count {
                    let z: Vec<f64> = (0..p).map(|_| rng.normal()).collect();
                    for i in 0..p {
                        let mut acc = mean[i];
                        for k in 0..=i {
                            acc += l[(i, k)] * z[k];
                        }
                        out[(r, i)] = acc;
                    }
                }
            }
            CovariateLaw::UniformBox { lower, upper } => {
                for r in 0..count {
                    for j in 0..p {
                        out[(r, j)] = rng.uniform_in(lower[j], upper[j]);
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Fully specified data-generating model.
#[derive(Debug, Clone)]
pub struct PopulationModel {
    pub beta0: Vec<f64>,
    pub law: CovariateLaw,
    pub noise: NoiseDensity,
}

impl PopulationModel {
    pub fn new(beta0: Vec<f64>, law: CovariateLaw, noise: NoiseDensity) -> Result<Self> {
        if beta0.len() != law.dim() {
            return Err(Error::DimensionMismatch(format!(
                "beta0 has length {}, covariate law has dimension {}",
                beta0.len(),
                law.dim()
            )));
        }
        Ok(PopulationModel { beta0, law, noise })
    }

    pub fn dim(&self) -> usize {
        self.beta0.len()
    }

    /// Mean and standard deviation of the response `Y = beta0'X + e`.
    pub fn response_moments(&self) -> (f64, f64) {
        let mean = dot(&self.law.mean(), &self.beta0);
        let var = self.law.projection_variance(&self.beta0) + self.noise.variance();
        (mean, var.sqrt())
    }

    /// Draw `(X, Y)` rows from the model.
    pub fn sample_pairs(&self, rng: &mut SeedStream, count: usize) -> Result<(Matrix, Vec<f64>)> {
        let x = self.law.sample_matrix(rng, count)?;
        let eps = self.noise.sample(rng, count.max(1));
        let y: Vec<f64> = (0..count)
            .map(|r| dot(x.row(r), &self.beta0) + eps[r])
            .collect();
        Ok((x, y))
    }
}
