//! Quadrature rules: Gauss-Hermite, Gauss-Legendre, and adaptive Simpson
//! for scalar- and vector-valued integrands on finite intervals.

use super::special::ln_gamma;

/// Nodes and weights of the `n`-point Gauss-Hermite rule with weight
/// `exp(-x^2)` on the real line. Newton iteration on the Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z = 0.0_f64;
    for i in 0..m {
        // Initial guesses per Numerical Recipes' gauher.
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    // Return in ascending node order.
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..200 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        weights[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    (nodes, weights)
}

/// Gauss-Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        xs.iter().map(|&x| mid + half * x).collect(),
        ws.iter().map(|&w| w * half).collect(),
    )
}

/// Number of fixed panels the interval is split into before adapting;
/// guards against integrands whose mass the first probe points miss.
const PANELS: usize = 16;

/// Adaptive Simpson integration of a scalar function on `[a, b]` to absolute
/// tolerance `tol`.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let mut total = 0.0;
    let step = (b - a) / PANELS as f64;
    let panel_tol = tol / PANELS as f64;
    for k in 0..PANELS {
        let lo = a + k as f64 * step;
        let hi = if k + 1 == PANELS { b } else { lo + step };
        let flo = f(lo);
        let fhi = f(hi);
        let m = 0.5 * (lo + hi);
        let fm = f(m);
        let whole = (hi - lo) / 6.0 * (flo + 4.0 * fm + fhi);
        total += simpson_scalar(f, lo, hi, flo, fm, fhi, whole, panel_tol, 48);
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn simpson_scalar(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_scalar(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_scalar(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson integration of a vector-valued function on `[a, b]`.
/// The integrand writes its value into the provided buffer; the error control
/// is on the max-norm across entries.
pub fn integrate_vec(f: &dyn Fn(f64, &mut [f64]), dim: usize, a: f64, b: f64, tol: f64) -> Vec<f64> {
    let eval = |x: f64| -> Vec<f64> {
        let mut buf = vec![0.0; dim];
        f(x, &mut buf);
        buf
    };
    let mut total = vec![0.0; dim];
    let step = (b - a) / PANELS as f64;
    let panel_tol = tol / PANELS as f64;
    for k in 0..PANELS {
        let lo = a + k as f64 * step;
        let hi = if k + 1 == PANELS { b } else { lo + step };
        let flo = eval(lo);
        let fhi = eval(hi);
        let m = 0.5 * (lo + hi);
        let fm = eval(m);
        let mut whole = vec![0.0; dim];
        for i in 0..dim {
            whole[i] = (hi - lo) / 6.0 * (flo[i] + 4.0 * fm[i] + fhi[i]);
        }
        let part = simpson_vec(&eval, lo, hi, &flo, &fm, &fhi, &whole, panel_tol, 48);
        for i in 0..dim {
            total[i] += part[i];
        }
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn simpson_vec(
    eval: &dyn Fn(f64) -> Vec<f64>,
    a: f64,
    b: f64,
    fa: &[f64],
    fm: &[f64],
    fb: &[f64],
    whole: &[f64],
    tol: f64,
    depth: usize,
) -> Vec<f64> {
    let dim = fa.len();
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = eval(lm);
    let frm = eval(rm);
    let mut left = vec![0.0; dim];
    let mut right = vec![0.0; dim];
    let mut err: f64 = 0.0;
    for i in 0..dim {
        left[i] = (m - a) / 6.0 * (fa[i] + 4.0 * flm[i] + fm[i]);
        right[i] = (b - m) / 6.0 * (fm[i] + 4.0 * frm[i] + fb[i]);
        err = err.max((left[i] + right[i] - whole[i]).abs());
    }
    if depth == 0 || err <= 15.0 * tol {
        let mut out = vec![0.0; dim];
        for i in 0..dim {
            out[i] = left[i] + right[i] + (left[i] + right[i] - whole[i]) / 15.0;
        }
        return out;
    }
    let l = simpson_vec(eval, a, m, fa, &flm, fm, &left, 0.5 * tol, depth - 1);
    let r = simpson_vec(eval, m, b, fm, &frm, fb, &right, 0.5 * tol, depth - 1);
    l.iter().zip(&r).map(|(x, y)| x + y).collect()
}

/// Central moment `E|T|^k` of the exponential-power density with exponent
/// `alpha` and scale `d`, i.e. `integral |t|^k c exp(-(|t|/d)^alpha) dt`.
pub fn exp_power_abs_moment(alpha: f64, d: f64, k: f64) -> f64 {
    // 2 c_a / a * d^{k+1} * Gamma((k+1)/a) with c_a = a/(2 d Gamma(1/a)).
    (ln_gamma((k + 1.0) / alpha) - ln_gamma(1.0 / alpha)).exp() * d.powf(k)
}
