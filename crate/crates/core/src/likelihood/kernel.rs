//! Hot loops for the unmatched double sum `sum_j log( sum_i f(Yu_j - t_i) )`.
//!
//! Cost is O(n^2) per evaluation, accepted at desk scale (n <= 5000). The
//! i-loop is blocked so the exponential runs over contiguous buffers and
//! vectorizes; the j-loop is split into fixed-size chunks whose partial sums
//! are reduced in chunk order, so results are bit-identical for any worker
//! count. Each j-term is shifted log-sum-exp style only when the plain sum
//! underflows, which keeps the fast path branch-light.

use crate::noise::NoiseDensity;
use crate::numeric::linalg::Matrix;
use crate::numeric::vexp::exp_inplace;
use rayon::prelude::*;

const BLOCK: usize = 256;
const CHUNK: usize = 64;
/// Below this, a j-term is recomputed with an explicit shift.
const UNDERFLOW_GUARD: f64 = 1e-280;

/// Per-exponent residual functions:
/// `u(e) = (|e|/d)^a`, `g(e) = -f'(e)/f(e)`, `h(e) = f''(e)/f(e)`.
trait AlphaKernel: Copy + Sync {
    fn u(self, e: f64) -> f64;
    fn g(self, e: f64) -> f64;
    fn h(self, e: f64) -> f64;
}

#[derive(Copy, Clone)]
struct Alpha1 {
    c: f64, // 1/d
}
impl AlphaKernel for Alpha1 {
    #[inline(always)]
    fn u(self, e: f64) -> f64 {
        self.c * e.abs()
    }
    #[inline(always)]
    fn g(self, e: f64) -> f64 {
        // sign(e)/d; the kink at e = 0 is handled by the caller.
        if e > 0.0 {
            self.c
        } else if e < 0.0 {
            -self.c
        } else {
            0.0
        }
    }
    #[inline(always)]
    fn h(self, _e: f64) -> f64 {
        self.c * self.c
    }
}

#[derive(Copy, Clone)]
struct Alpha2 {
    c: f64, // d^-2
}
impl AlphaKernel for Alpha2 {
    #[inline(always)]
    fn u(self, e: f64) -> f64 {
        self.c * e * e
    }
    #[inline(always)]
    fn g(self, e: f64) -> f64 {
        2.0 * self.c * e
    }
    #[inline(always)]
    fn h(self, e: f64) -> f64 {
        let c = self.c;
        4.0 * c * c * e * e - 2.0 * c
    }
}

#[derive(Copy, Clone)]
struct Alpha3 {
    c: f64, // d^-3
}
impl AlphaKernel for Alpha3 {
    #[inline(always)]
    fn u(self, e: f64) -> f64 {
        self.c * e * e * e.abs()
    }
    #[inline(always)]
    fn g(self, e: f64) -> f64 {
        3.0 * self.c * e * e.abs()
    }
    #[inline(always)]
    fn h(self, e: f64) -> f64 {
        let g = self.g(e);
        g * g - 6.0 * self.c * e.abs()
    }
}

#[derive(Copy, Clone)]
struct Alpha4 {
    c: f64, // d^-4
}
impl AlphaKernel for Alpha4 {
    #[inline(always)]
    fn u(self, e: f64) -> f64 {
        let e2 = e * e;
        self.c * e2 * e2
    }
    #[inline(always)]
    fn g(self, e: f64) -> f64 {
        4.0 * self.c * e * e * e
    }
    #[inline(always)]
    fn h(self, e: f64) -> f64 {
        let g = self.g(e);
        g * g - 12.0 * self.c * e * e
    }
}

#[derive(Copy, Clone)]
struct AlphaGeneral {
    alpha: f64,
    inv_d: f64,
    da: f64, // d^-alpha
}
impl AlphaKernel for AlphaGeneral {
    #[inline(always)]
    fn u(self, e: f64) -> f64 {
        (e.abs() * self.inv_d).powf(self.alpha)
    }
    #[inline(always)]
    fn g(self, e: f64) -> f64 {
        let s = if e > 0.0 {
            1.0
        } else if e < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.alpha * self.da * e.abs().powf(self.alpha - 1.0) * s
    }
    #[inline(always)]
    fn h(self, e: f64) -> f64 {
        let g = self.g(e);
        g * g - self.alpha * (self.alpha - 1.0) * self.da * e.abs().powf(self.alpha - 2.0)
    }
}

/// What the pass accumulates.
#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum Want {
    Value,
    Grad,
    GradHess,
}

/// Raw sums over the unmatched pairs, before the `c_alpha` and `1/n`
/// normalizations:
/// `value   = sum_j log( sum_i exp(-u(e_ij)) )`
/// `grad    = sum_j (sum_i w g(e) x_i) / (sum_i w)`
/// `hess    = sum_j [ (sum_i w h(e) x_i x_i') / s0 - s1 s1'/s0^2 ]`
pub(crate) struct PairSums {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

pub(crate) fn unmatched_pass(
    noise: &NoiseDensity,
    x: &Matrix,
    resp: &[f64],
    proj: &[f64],
    want: Want,
) -> PairSums {
    let a = noise.alpha;
    if (a - 1.0).abs() < 1e-12 {
        dispatch(Alpha1 { c: 1.0 / noise.d }, x, resp, proj, want)
    } else if (a - 2.0).abs() < 1e-12 {
        dispatch(Alpha2 { c: noise.d.powi(-2) }, x, resp, proj, want)
    } else if (a - 3.0).abs() < 1e-12 {
        dispatch(Alpha3 { c: noise.d.powi(-3) }, x, resp, proj, want)
    } else if (a - 4.0).abs() < 1e-12 {
        dispatch(Alpha4 { c: noise.d.powi(-4) }, x, resp, proj, want)
    } else {
        dispatch(
            AlphaGeneral {
                alpha: a,
                inv_d: 1.0 / noise.d,
                da: noise.d.powf(-a),
            },
            x,
            resp,
            proj,
            want,
        )
    }
}

fn dispatch<K: AlphaKernel>(
    k: K,
    x: &Matrix,
    resp: &[f64],
    proj: &[f64],
    want: Want,
) -> PairSums {
    match want {
        Want::Value => chunked(k, x, resp, proj, |k, x, resp, proj, j0, j1| {
            value_chunk(k, x, resp, proj, j0, j1)
        }),
        Want::Grad => match x.cols {
            1 => chunked(k, x, resp, proj, grad_chunk::<K, 1>),
            2 => chunked(k, x, resp, proj, grad_chunk::<K, 2>),
            3 => chunked(k, x, resp, proj, grad_chunk::<K, 3>),
            4 => chunked(k, x, resp, proj, grad_chunk::<K, 4>),
            5 => chunked(k, x, resp, proj, grad_chunk::<K, 5>),
            _ => chunked(k, x, resp, proj, grad_chunk_dyn::<K>),
        },
        Want::GradHess => chunked(k, x, resp, proj, hess_chunk::<K>),
    }
}

fn chunked<K: AlphaKernel>(
    k: K,
    x: &Matrix,
    resp: &[f64],
    proj: &[f64],
    body: impl Fn(K, &Matrix, &[f64], &[f64], usize, usize) -> PairSums + Sync,
) -> PairSums {
    let n_y = resp.len();
    let p = x.cols;
    let chunks: Vec<usize> = (0..n_y.div_ceil(CHUNK)).collect();
    let partials: Vec<PairSums> = chunks
        .par_iter()
        .map(|&c| {
            let j0 = c * CHUNK;
            let j1 = (j0 + CHUNK).min(n_y);
            body(k, x, resp, proj, j0, j1)
        })
        .collect();
    // Fixed-order reduction, independent of the worker count.
    let mut total = PairSums {
        value: 0.0,
        grad: vec![0.0; p],
        hess: vec![0.0; p * p],
    };
    for part in partials {
        total.value += part.value;
        for (t, v) in total.grad.iter_mut().zip(&part.grad) {
            *t += v;
        }
        for (t, v) in total.hess.iter_mut().zip(&part.hess) {
            *t += v;
        }
    }
    total
}

/// log(sum_i exp(-u_ij)) for one response, shifted only when needed.
#[inline]
fn value_term<K: AlphaKernel>(k: K, yj: f64, proj: &[f64], ubuf: &mut [f64; BLOCK]) -> f64 {
    let n = proj.len();
    let mut s0 = 0.0f64;
    let mut start = 0;
    while start < n {
        let len = BLOCK.min(n - start);
        let tc = &proj[start..start + len];
        for i in 0..len {
            let e = yj - tc[i];
            ubuf[i] = -k.u(e);
        }
        exp_inplace(&mut ubuf[..len]);
        for u in ubuf[..len].iter() {
            s0 += *u;
        }
        start += len;
    }
    if s0 > UNDERFLOW_GUARD {
        return s0.ln();
    }
    // All terms tiny: shift by the smallest exponent and retry.
    let umin = proj
        .iter()
        .map(|&t| k.u(yj - t))
        .fold(f64::INFINITY, f64::min);
    let mut s = 0.0f64;
    for &t in proj {
        s += (umin - k.u(yj - t)).exp();
    }
    s.ln() - umin
}

fn value_chunk<K: AlphaKernel>(
    k: K,
    x: &Matrix,
    resp: &[f64],
    proj: &[f64],
    j0: usize,
    j1: usize,
) -> PairSums {
    let mut ubuf = [0.0f64; BLOCK];
    let mut value = 0.0;
    for j in j0..j1 {
        value += value_term(k, resp[j], proj, &mut ubuf);
    }
    PairSums {
        value,
        grad: vec![0.0; x.cols],
        hess: Vec::new(),
    }
}

fn grad_chunk<K: AlphaKernel, const P: usize>(
    k: K,
    x: &Matrix,
    resp: &[f64],
    proj: &[f64],
    j0: usize,
    j1: usize,
) -> PairSums {
    debug_assert_eq!(x.cols, P);
    let n = proj.len();
    let mut ubuf = [0.0f64; BLOCK];
    let mut ebuf = [0.0f64; BLOCK];
    let mut value = 0.0;
    let mut grad = [0.0f64; P];
    for j in j0..j1 {
        let yj = resp[j];
        let mut s0 = 0.0f64;
        let mut s1 = [0.0f64; P];
        let mut start = 0;
        while start < n {
            let len = BLOCK.min(n - start);
            let tc = &proj[start..start + len];
            for i in 0..len {
                let e = yj - tc[i];
                ebuf[i] = e;
                ubuf[i] = -k.u(e);
            }
            exp_inplace(&mut ubuf[..len]);
            let xc = &x.data[start * P..(start + len) * P];
            for i in 0..len {
                let w = ubuf[i];
                let wg = w * k.g(ebuf[i]);
                s0 += w;
                for l in 0..P {
                    s1[l] += wg * xc[i * P + l];
                }
            }
            start += len;
        }
        if s0 > UNDERFLOW_GUARD {
            value += s0.ln();
            let inv = 1.0 / s0;
            for l in 0..P {
                grad[l] += s1[l] * inv;
            }
        } else {
            let (v, g) = shifted_grad(k, yj, x, proj);
            value += v;
            for l in 0..P {
                grad[l] += g[l];
            }
        }
    }
    PairSums {
        value,
        grad: grad.to_vec(),
        hess: Vec::new(),
    }
}

fn grad_chunk_dyn<K: AlphaKernel>(
    k: K,
    x: &Matrix,
    resp: &[f64],
    proj: &[f64],
    j0: usize,
    j1: usize,
) -> PairSums {
    let n = proj.len();
    let p = x.cols;
    let mut ubuf = [0.0f64; BLOCK];
    let mut ebuf = [0.0f64; BLOCK];
    let mut value = 0.0;
    let mut grad = vec![0.0f64; p];
    let mut s1 = vec![0.0f64; p];
    for j in j0..j1 {
        let yj = resp[j];
        let mut s0 = 0.0f64;
        s1.iter_mut().for_each(|v| *v = 0.0);
        let mut start = 0;
        while start < n {
            let len = BLOCK.min(n - start);
            let tc = &proj[start..start + len];
            for i in 0..len {
                let e = yj - tc[i];
                ebuf[i] = e;
                ubuf[i] = -k.u(e);
            }
            exp_inplace(&mut ubuf[..len]);
            let xc = &x.data[start * p..(start + len) * p];
            for i in 0..len {
                let w = ubuf[i];
                let wg = w * k.g(ebuf[i]);
                s0 += w;
                for l in 0..p {
                    s1[l] += wg * xc[i * p + l];
                }
            }
            start += len;
        }
        if s0 > UNDERFLOW_GUARD {
            value += s0.ln();
            let inv = 1.0 / s0;
            for l in 0..p {
                grad[l] += s1[l] * inv;
            }
        } else {
            let (v, g) = shifted_grad(k, yj, x, proj);
            value += v;
            for l in 0..p {
                grad[l] += g[l];
            }
        }
    }
    PairSums {
        value,
        grad,
        hess: Vec::new(),
    }
}

fn hess_chunk<K: AlphaKernel>(
    k: K,
    x: &Matrix,
    resp: &[f64],
    proj: &[f64],
    j0: usize,
    j1: usize,
) -> PairSums {
    let n = proj.len();
    let p = x.cols;
    let mut ubuf = [0.0f64; BLOCK];
    let mut ebuf = [0.0f64; BLOCK];
    let mut value = 0.0;
    let mut grad = vec![0.0f64; p];
    let mut hess = vec![0.0f64; p * p];
    let mut s1 = vec![0.0f64; p];
    let mut s2 = vec![0.0f64; p * p];
    for j in j0..j1 {
        let yj = resp[j];
        let mut s0 = 0.0f64;
        let mut shift = 0.0f64;
        s1.iter_mut().for_each(|v| *v = 0.0);
        s2.iter_mut().for_each(|v| *v = 0.0);
        // Up to two rounds: plain weights first, shifted retry on underflow.
        for round in 0..2 {
            let mut start = 0;
            while start < n {
                let len = BLOCK.min(n - start);
                let tc = &proj[start..start + len];
                for i in 0..len {
                    let e = yj - tc[i];
                    ebuf[i] = e;
                    ubuf[i] = shift - k.u(e);
                }
                exp_inplace(&mut ubuf[..len]);
                let xc = &x.data[start * p..(start + len) * p];
                for i in 0..len {
                    let w = ubuf[i];
                    let wg = w * k.g(ebuf[i]);
                    let wh = w * k.h(ebuf[i]);
                    s0 += w;
                    for l in 0..p {
                        s1[l] += wg * xc[i * p + l];
                    }
                    for l1 in 0..p {
                        let f = wh * xc[i * p + l1];
                        for l2 in 0..p {
                            s2[l1 * p + l2] += f * xc[i * p + l2];
                        }
                    }
                }
                start += len;
            }
            if s0 > UNDERFLOW_GUARD || round == 1 {
                break;
            }
            shift = proj
                .iter()
                .map(|&t| k.u(yj - t))
                .fold(f64::INFINITY, f64::min);
            s0 = 0.0;
            s1.iter_mut().for_each(|v| *v = 0.0);
            s2.iter_mut().for_each(|v| *v = 0.0);
        }
        value += s0.ln() - shift;
        let inv = 1.0 / s0;
        for l in 0..p {
            grad[l] += s1[l] * inv;
        }
        for l1 in 0..p {
            for l2 in 0..p {
                hess[l1 * p + l2] +=
                    s2[l1 * p + l2] * inv - s1[l1] * s1[l2] * inv * inv;
            }
        }
    }
    PairSums { value, grad, hess }
}

/// Shifted recomputation of a single underflowing j-term (value + gradient).
#[cold]
fn shifted_grad<K: AlphaKernel>(k: K, yj: f64, x: &Matrix, proj: &[f64]) -> (f64, Vec<f64>) {
    let p = x.cols;
    let umin = proj
        .iter()
        .map(|&t| k.u(yj - t))
        .fold(f64::INFINITY, f64::min);
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    for (i, &t) in proj.iter().enumerate() {
        let e = yj - t;
        let w = (umin - k.u(e)).exp();
        s0 += w;
        let wg = w * k.g(e);
        for l in 0..p {
            s1[l] += wg * x[(i, l)];
        }
    }
    let inv = 1.0 / s0;
    (s0.ln() - umin, s1.iter().map(|v| v * inv).collect())
}
