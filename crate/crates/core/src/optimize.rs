//! Maximizers for the likelihood surfaces.
//!
//! Three routes: a quasi-Newton ascent (BFGS secant updates with Armijo
//! backtracking) for smooth exponents, an adaptive Nelder-Mead for the
//! Laplace and DLSE paths, and an exhaustive grid oracle used by tests. All
//! routes confine iterates to the closed ball whose radius comes from the
//! existence certificate, and are deterministic given the seed.

use crate::error::{Error, Result};
use crate::numeric::linalg::{dot, norm2, Matrix};
use crate::numeric::rng::SeedStream;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub gradient_tolerance: f64,
    pub max_iterations: usize,
    /// Random restarts drawn uniformly in the search ball, in addition to
    /// any warm starts the caller passes.
    pub restarts: usize,
    pub search_radius: f64,
    pub seed: u64,
}

impl OptimizerConfig {
    pub fn new(search_radius: f64) -> Self {
        OptimizerConfig {
            gradient_tolerance: 1e-8,
            max_iterations: 500,
            restarts: 8,
            search_radius,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::Domain("tolerance must be positive".into()));
        }
        if self.restarts > 10_000 {
            return Err(Error::Domain("restart count exceeds 10^4".into()));
        }
        if !(self.search_radius > 0.0) {
            return Err(Error::Domain("search radius must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimResult {
    pub argmax: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restart_index: usize,
}

/// Value-and-gradient objective for the smooth path. The optional curvature
/// hook seeds the inverse-Hessian approximation at a start point.
pub trait SmoothObjective: Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>);
    fn curvature(&self, _x: &[f64]) -> Option<Matrix> {
        None
    }
}

/// Adapter for plain closures without a curvature hook.
pub struct FnObjective<V, G> {
    pub value_fn: V,
    pub grad_fn: G,
}

impl<V, G> SmoothObjective for FnObjective<V, G>
where
    V: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> (f64, Vec<f64>) + Sync,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.value_fn)(x)
    }
    fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
        (self.grad_fn)(x)
    }
}

fn project_to_ball(x: &mut [f64], radius: f64) {
    let n = norm2(x);
    if n > radius {
        let s = radius / n;
        x.iter_mut().for_each(|v| *v *= s);
    }
}

fn random_starts(p: usize, config: &OptimizerConfig, warm: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut starts: Vec<Vec<f64>> = warm
        .iter()
        .map(|w| {
            let mut s = w.clone();
            project_to_ball(&mut s, config.search_radius);
            s
        })
        .collect();
    let mut rng = SeedStream::new(config.seed);
    for _ in 0..config.restarts {
        // Uniform direction, radius by the p-th root for uniformity in the ball.
        let mut u: Vec<f64> = (0..p).map(|_| rng.normal()).collect();
        let nrm = norm2(&u);
        let r = config.search_radius * rng.uniform().powf(1.0 / p as f64);
        if nrm > 1e-12 {
            u.iter_mut().for_each(|v| *v *= r / nrm);
        } else {
            u.iter_mut().for_each(|v| *v = 0.0);
        }
        starts.push(u);
    }
    if starts.is_empty() {
        starts.push(vec![0.0; p]);
    }
    starts
}

/// Pick the best run: highest value, ties broken by lexicographically
/// smallest argmax.
fn best_run(runs: Vec<OptimResult>) -> Result<OptimResult> {
    let mut best: Option<OptimResult> = None;
    for run in runs {
        if !run.value.is_finite() {
            continue;
        }
        best = Some(match best.take() {
            None => run,
            Some(cur) => {
                if run.value > cur.value
                    || (run.value == cur.value && lex_less(&run.argmax, &cur.argmax))
                {
                    run
                } else {
                    cur
                }
            }
        });
    }
    best.ok_or(Error::BadStart)
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

const ARMIJO: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;

/// Quasi-Newton ascent with BFGS updates, Armijo backtracking, and iterates
/// projected onto the search ball. Restarts run on independent workers; the
/// best restart wins.
pub fn maximize_smooth(
    objective: &dyn SmoothObjective,
    config: &OptimizerConfig,
    warm_starts: &[Vec<f64>],
) -> Result<OptimResult> {
    config.validate()?;
    let p = warm_starts
        .first()
        .map(|w| w.len())
        .ok_or_else(|| Error::Domain("need at least one warm start".into()))?;
    let starts = random_starts(p, config, warm_starts);
    let runs: Vec<OptimResult> = starts
        .par_iter()
        .enumerate()
        .map(|(idx, start)| bfgs_ascent(objective, config, start, idx))
        .collect();
    best_run(runs)
}

fn bfgs_ascent(
    objective: &dyn SmoothObjective,
    config: &OptimizerConfig,
    start: &[f64],
    restart_index: usize,
) -> OptimResult {
    let p = start.len();
    let radius = config.search_radius;
    let mut x = start.to_vec();
    project_to_ball(&mut x, radius);
    let (mut fval, mut grad) = objective.value_grad(&x);
    if !fval.is_finite() {
        return OptimResult {
            argmax: x,
            value: f64::NEG_INFINITY,
            gradient_norm: f64::INFINITY,
            iterations: 0,
            converged: false,
            restart_index,
        };
    }
    // Inverse Hessian approximation of the NEGATED objective (so the usual
    // minimization update formulas apply).
    let mut h = match objective.curvature(&x) {
        Some(hess) => {
            let neg = hess.scaled(-1.0);
            crate::numeric::linalg::spd_inverse(&neg)
                .unwrap_or_else(|_| Matrix::identity(p).scaled(1.0 / (1.0 + norm2(&grad))))
        }
        None => Matrix::identity(p).scaled(1.0 / (1.0 + norm2(&grad))),
    };
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..config.max_iterations {
        iterations += 1;
        let gnorm = norm2(&grad);
        if gnorm <= config.gradient_tolerance {
            converged = true;
            break;
        }
        // Ascent direction d = H g (H approximates (-Hessian)^-1).
        let mut dir = h.matvec(&grad);
        let mut slope = dot(&dir, &grad);
        if !(slope > 0.0) || !slope.is_finite() {
            h = Matrix::identity(p).scaled(1.0 / (1.0 + gnorm));
            dir = h.matvec(&grad);
            slope = dot(&dir, &grad);
        }
        let mut step = 1.0;
        let mut accepted = false;
        let mut x_new = x.clone();
        let mut f_new = fval;
        // The unit step is usually accepted, so evaluate value and gradient
        // together on the first trial and reuse the gradient on acceptance.
        let mut cached_grad: Option<Vec<f64>> = None;
        for trial in 0..60 {
            for i in 0..p {
                x_new[i] = x[i] + step * dir[i];
            }
            project_to_ball(&mut x_new, radius);
            let cand = if trial == 0 {
                let (c, g) = objective.value_grad(&x_new);
                cached_grad = Some(g);
                c
            } else {
                cached_grad = None;
                objective.value(&x_new)
            };
            // Sufficient increase relative to the *actual* displacement.
            let disp: f64 = (0..p).map(|i| (x_new[i] - x[i]) * grad[i]).sum();
            if cand.is_finite() && cand >= fval + ARMIJO * disp && disp > 0.0 {
                f_new = cand;
                accepted = true;
                break;
            }
            step *= BACKTRACK;
            if step * norm2(&dir) < 1e-16 * (1.0 + norm2(&x)) {
                break;
            }
        }
        if !accepted {
            break;
        }
        let grad_new = match cached_grad {
            Some(g) => g,
            None => objective.value_grad(&x_new).1,
        };
        // BFGS update on the negated problem: s = x+ - x, y = -(g+ - g).
        let s: Vec<f64> = (0..p).map(|i| x_new[i] - x[i]).collect();
        let yv: Vec<f64> = (0..p).map(|i| grad[i] - grad_new[i]).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 * norm2(&s) * norm2(&yv) {
            let rho = 1.0 / sy;
            // H <- (I - rho s y') H (I - rho y s') + rho s s'
            let hy = h.matvec(&yv);
            let yhy = dot(&yv, &hy);
            for i in 0..p {
                for j in 0..p {
                    h[(i, j)] += rho * rho * yhy * s[i] * s[j]
                        - rho * (s[i] * hy[j] + hy[i] * s[j])
                        + rho * s[i] * s[j];
                }
            }
        }
        x = x_new;
        fval = f_new;
        grad = grad_new;
    }
    OptimResult {
        gradient_norm: norm2(&grad),
        argmax: x,
        value: fval,
        iterations,
        converged,
        restart_index,
    }
}

/// Nelder-Mead with dimension-adaptive parameters, restarted from the best
/// vertex until the simplex diameter drops below the tolerance or the
/// iteration cap is reached. Vertices are projected onto the search ball.
pub fn maximize_derivative_free(
    objective: &(dyn Fn(&[f64]) -> f64 + Sync),
    config: &OptimizerConfig,
    warm_starts: &[Vec<f64>],
) -> Result<OptimResult> {
    config.validate()?;
    let p = warm_starts
        .first()
        .map(|w| w.len())
        .ok_or_else(|| Error::Domain("need at least one warm start".into()))?;
    let starts = random_starts(p, config, warm_starts);
    let runs: Vec<OptimResult> = starts
        .par_iter()
        .enumerate()
        .map(|(idx, start)| nelder_mead(objective, config, start, idx))
        .collect();
    best_run(runs)
}

fn nelder_mead(
    objective: &dyn Fn(&[f64]) -> f64,
    config: &OptimizerConfig,
    start: &[f64],
    restart_index: usize,
) -> OptimResult {
    let p = start.len();
    let radius = config.search_radius;
    // Minimize the negation.
    let f = |x: &[f64]| -> f64 { -objective(x) };
    let nf = p as f64;
    let (refl, expa, contr, shrink) = if p >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };
    let mut best_point = start.to_vec();
    project_to_ball(&mut best_point, radius);
    let mut best_value = f(&best_point);
    if !best_value.is_finite() {
        return OptimResult {
            argmax: best_point,
            value: f64::NEG_INFINITY,
            gradient_norm: f64::INFINITY,
            iterations: 0,
            converged: false,
            restart_index,
        };
    }
    let mut evals = 0usize;
    let mut scale = 0.1 * (1.0 + norm2(&best_point));
    let mut diameter = f64::INFINITY;
    'outer: for _round in 0..30 {
        // Fresh simplex around the incumbent.
        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(p + 1);
        let mut values: Vec<f64> = Vec::with_capacity(p + 1);
        simplex.push(best_point.clone());
        values.push(f(&best_point));
        for i in 0..p {
            let mut v = best_point.clone();
            v[i] += scale;
            project_to_ball(&mut v, radius);
            values.push(f(&v));
            simplex.push(v);
            evals += 1;
        }
        loop {
            if evals >= config.max_iterations * (p + 1).max(8) {
                break 'outer;
            }
            let mut order: Vec<usize> = (0..=p).collect();
            order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
            let best = order[0];
            let worst = order[p];
            let second_worst = order[p - 1];
            diameter = simplex
                .iter()
                .map(|v| {
                    v.iter()
                        .zip(&simplex[best])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max);
            if diameter < config.gradient_tolerance {
                best_point = simplex[best].clone();
                best_value = values[best];
                break 'outer;
            }
            // Centroid of all but the worst.
            let mut centroid = vec![0.0; p];
            for (i, v) in simplex.iter().enumerate() {
                if i == worst {
                    continue;
                }
                for l in 0..p {
                    centroid[l] += v[l] / nf;
                }
            }
            let towards = |t: f64| -> Vec<f64> {
                let mut x: Vec<f64> = (0..p)
                    .map(|l| centroid[l] + t * (centroid[l] - simplex[worst][l]))
                    .collect();
                project_to_ball(&mut x, radius);
                x
            };
            let xr = towards(refl);
            let fr = f(&xr);
            evals += 1;
            if fr < values[best] {
                let xe = towards(refl * expa);
                let fe = f(&xe);
                evals += 1;
                if fe < fr {
                    simplex[worst] = xe;
                    values[worst] = fe;
                } else {
                    simplex[worst] = xr;
                    values[worst] = fr;
                }
            } else if fr < values[second_worst] {
                simplex[worst] = xr;
                values[worst] = fr;
            } else {
                let (xc, fc) = if fr < values[worst] {
                    let xc = towards(refl * contr);
                    let fc = f(&xc);
                    (xc, fc)
                } else {
                    let xc = towards(-contr);
                    let fc = f(&xc);
                    (xc, fc)
                };
                evals += 1;
                if fc < values[worst].min(fr) {
                    simplex[worst] = xc;
                    values[worst] = fc;
                } else {
                    // Shrink toward the best vertex.
                    for i in 0..=p {
                        if i == best {
                            continue;
                        }
                        let snap: Vec<f64> = (0..p)
                            .map(|l| simplex[best][l] + shrink * (simplex[i][l] - simplex[best][l]))
                            .collect();
                        simplex[i] = snap;
                        values[i] = f(&simplex[i]);
                        evals += 1;
                    }
                    if shrink == 0.0 {
                        break;
                    }
                }
            }
            let cur_best = (0..=p)
                .min_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap())
                .unwrap();
            if values[cur_best] < best_value {
                best_value = values[cur_best];
                best_point = simplex[cur_best].clone();
            }
        }
        scale *= 0.1;
        if scale < config.gradient_tolerance {
            break;
        }
    }
    OptimResult {
        argmax: best_point,
        value: -best_value,
        gradient_norm: diameter,
        iterations: evals,
        converged: diameter < config.gradient_tolerance,
        restart_index,
    }
}

/// Exhaustive grid search over a box (dimension at most 2), followed by one
/// dyadic refinement pass around the incumbent. Ties keep the lowest-index
/// grid point.
pub fn grid_oracle(
    objective: &(dyn Fn(&[f64]) -> f64 + Sync),
    box_bounds: &[(f64, f64)],
    resolution: usize,
) -> Result<OptimResult> {
    let p = box_bounds.len();
    if p == 0 || p > 2 {
        return Err(Error::Domain(format!(
            "grid oracle supports dimensions 1 and 2, got {p}"
        )));
    }
    if resolution < 2 || resolution > 4001 {
        return Err(Error::Domain(format!(
            "resolution must be in [2, 4001], got {resolution}"
        )));
    }
    let sweep = |bounds: &[(f64, f64)]| -> (Vec<f64>, f64, usize) {
        let mut best_x = vec![bounds[0].0; p];
        if p == 2 {
            best_x[1] = bounds[1].0;
        }
        let mut best_v = f64::NEG_INFINITY;
        let mut count = 0usize;
        let axis = |k: usize, i: usize| -> f64 {
            let (lo, hi) = bounds[k];
            lo + (hi - lo) * i as f64 / (resolution - 1) as f64
        };
        let mut x = vec![0.0; p];
        if p == 1 {
            for i in 0..resolution {
                x[0] = axis(0, i);
                let v = objective(&x);
                count += 1;
                if v > best_v {
                    best_v = v;
                    best_x.copy_from_slice(&x);
                }
            }
        } else {
            for i in 0..resolution {
                x[0] = axis(0, i);
                for j in 0..resolution {
                    x[1] = axis(1, j);
                    let v = objective(&x);
                    count += 1;
                    if v > best_v {
                        best_v = v;
                        best_x.copy_from_slice(&x);
                    }
                }
            }
        }
        (best_x, best_v, count)
    };
    let (coarse_x, coarse_v, n1) = sweep(box_bounds);
    // Dyadic refinement: a box of one coarse step around the incumbent.
    let refined_bounds: Vec<(f64, f64)> = (0..p)
        .map(|k| {
            let (lo, hi) = box_bounds[k];
            let h = (hi - lo) / (resolution - 1) as f64;
            ((coarse_x[k] - h).max(lo), (coarse_x[k] + h).min(hi))
        })
        .collect();
    let (fine_x, fine_v, n2) = sweep(&refined_bounds);
    let (argmax, value) = if fine_v > coarse_v {
        (fine_x, fine_v)
    } else {
        (coarse_x, coarse_v)
    };
    Ok(OptimResult {
        argmax,
        value,
        gradient_norm: 0.0,
        iterations: n1 + n2,
        converged: true,
        restart_index: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        center: Vec<f64>,
        a: Matrix,
    }

    impl SmoothObjective for Quadratic {
        fn value(&self, x: &[f64]) -> f64 {
            let d: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
            -dot(&self.a.matvec(&d), &d)
        }
        fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
            let d: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
            let ad = self.a.matvec(&d);
            (-dot(&ad, &d), ad.iter().map(|v| -2.0 * v).collect())
        }
    }

    #[test]
    fn concave_quadratic_recovers_center() {
        let q = Quadratic {
            center: vec![1.2, -0.7],
            a: Matrix::from_rows(&[vec![3.0, 0.4], vec![0.4, 1.0]]),
        };
        let config = OptimizerConfig::new(10.0);
        let out = maximize_smooth(&q, &config, &[vec![0.0, 0.0]]).unwrap();
        assert!(out.converged);
        assert!((out.argmax[0] - 1.2).abs() < 1e-8);
        assert!((out.argmax[1] + 0.7).abs() < 1e-8);
        assert!(out.gradient_norm <= config.gradient_tolerance);
    }

    #[test]
    fn iteration_cap_returns_unconverged_without_panic() {
        struct NegRosenbrock;
        impl SmoothObjective for NegRosenbrock {
            fn value(&self, x: &[f64]) -> f64 {
                -((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2))
            }
            fn value_grad(&self, x: &[f64]) -> (f64, Vec<f64>) {
                let g = vec![
                    2.0 * (1.0 - x[0]) + 400.0 * x[0] * (x[1] - x[0] * x[0]),
                    -200.0 * (x[1] - x[0] * x[0]),
                ];
                (self.value(x), g)
            }
        }
        let mut config = OptimizerConfig::new(10.0);
        config.max_iterations = 3;
        config.restarts = 0;
        let out = maximize_smooth(&NegRosenbrock, &config, &[vec![-1.2, 1.0]]).unwrap();
        assert!(!out.converged);
    }

    #[test]
    fn nelder_mead_handles_kink() {
        let f = |x: &[f64]| -(x[0] - 3.0).abs();
        let mut config = OptimizerConfig::new(10.0);
        config.gradient_tolerance = 1e-8;
        let out = maximize_derivative_free(&f, &config, &[vec![0.0]]).unwrap();
        assert!((out.argmax[0] - 3.0).abs() < 1e-6, "argmax {:?}", out.argmax);
    }

    #[test]
    fn nelder_mead_deterministic() {
        let f = |x: &[f64]| -(x[0] * x[0] + 0.5 * (x[1] - 1.0).powi(2)) + (x[0] * 3.0).sin() * 0.1;
        let config = OptimizerConfig::new(5.0);
        let a = maximize_derivative_free(&f, &config, &[vec![1.0, 1.0]]).unwrap();
        let b = maximize_derivative_free(&f, &config, &[vec![1.0, 1.0]]).unwrap();
        assert_eq!(a.argmax, b.argmax);
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn argmax_respects_ball() {
        // Unconstrained maximum at (4, 0) but radius 1.
        let q = Quadratic {
            center: vec![4.0, 0.0],
            a: Matrix::identity(2),
        };
        let config = OptimizerConfig::new(1.0);
        let out = maximize_smooth(&q, &config, &[vec![0.0, 0.0]]).unwrap();
        assert!(norm2(&out.argmax) <= 1.0 + 1e-12);
        let f = |x: &[f64]| q.value(x);
        let out = maximize_derivative_free(&f, &config, &[vec![0.0, 0.0]]).unwrap();
        assert!(norm2(&out.argmax) <= 1.0 + 1e-12);
    }

    #[test]
    fn grid_oracle_agrees_with_smooth_path() {
        let f = |x: &[f64]| -(x[0] - 0.731).powi(2);
        let oracle = grid_oracle(&f, &[(-2.0, 2.0)], 801).unwrap();
        let q = Quadratic {
            center: vec![0.731],
            a: Matrix::identity(1),
        };
        let smooth = maximize_smooth(&q, &OptimizerConfig::new(5.0), &[vec![0.0]]).unwrap();
        // Within half a refined grid step (refined box has width 2h).
        let coarse_step = 4.0 / 800.0;
        let refined_step = 2.0 * coarse_step / 800.0;
        assert!((oracle.argmax[0] - smooth.argmax[0]).abs() <= 0.5 * refined_step);
        assert!(oracle.value <= smooth.value + 1e-12);
    }

    #[test]
    fn grid_oracle_constant_objective_lowest_index() {
        let f = |_: &[f64]| 1.0;
        let out = grid_oracle(&f, &[(-1.0, 1.0), (0.0, 2.0)], 11).unwrap();
        assert_eq!(out.argmax, vec![-1.0, 0.0]);
    }

    #[test]
    fn grid_oracle_rejects_high_dimension() {
        let f = |_: &[f64]| 0.0;
        assert!(grid_oracle(&f, &[(0.0, 1.0), (0.0, 1.0), (0.0, 1.0)], 11).is_err());
        assert!(grid_oracle(&f, &[(0.0, 1.0)], 5000).is_err());
    }

    #[test]
    fn oracle_dominance_on_test_instances() {
        // maximize_* must reach at least the grid incumbent on p in {1, 2}.
        let f1 = |x: &[f64]| (x[0]).sin() - 0.1 * x[0] * x[0];
        let config = OptimizerConfig::new(6.0);
        let oracle = grid_oracle(&f1, &[(-6.0, 6.0)], 2001).unwrap();
        let nm = maximize_derivative_free(&f1, &config, &[vec![0.5]]).unwrap();
        assert!(nm.value >= oracle.value - 1e-7);
        let f2 = |x: &[f64]| -(x[0] - 0.3).powi(2) - 2.0 * (x[1] + 0.4).powi(2)
            + 0.3 * (x[0] * x[1]).cos();
        let oracle2 = grid_oracle(&f2, &[(-3.0, 3.0), (-3.0, 3.0)], 301).unwrap();
        let nm2 = maximize_derivative_free(&f2, &config, &[vec![0.0, 0.0]]).unwrap();
        assert!(nm2.value >= oracle2.value - 1e-7);
    }
}
