//! Small dense matrices (row-major) with the factorizations needed here:
//! Cholesky, symmetric Jacobi eigendecomposition, and Householder least
//! squares. Dimensions are tiny (p <= 8), so simplicity wins over BLAS.

use crate::error::{Error, Result};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| x * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        self.add(&other.scaled(-1.0))
    }

    /// x y' rank-one matrix.
    pub fn outer(x: &[f64], y: &[f64]) -> Matrix {
        let mut m = Matrix::zeros(x.len(), y.len());
        for i in 0..x.len() {
            for j in 0..y.len() {
                m[(i, j)] = x[i] * y[j];
            }
        }
        m
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Symmetrize in place; guards against drift in accumulated outer products.
    pub fn symmetrize(&mut self) {
        assert!(self.is_square());
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                let v = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = v;
                self[(j, i)] = v;
            }
        }
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(m: &Matrix) -> Result<Matrix> {
    assert!(m.is_square());
    let n = m.rows;
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::NotPositiveDefinite(format!(
                        "pivot {s:.3e} at index {i}"
                    )));
                }
                l[(i, i)] = s.sqrt();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Ok(l)
}

/// Solve `M x = b` given the Cholesky factor of `M`.
pub fn chol_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = l.rows;
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= l[(i, k)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            y[i] -= l[(k, i)] * y[k];
        }
        y[i] /= l[(i, i)];
    }
    y
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(m: &Matrix) -> Result<Matrix> {
    let l = cholesky(m)?;
    let n = m.rows;
    let mut inv = Matrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = chol_solve(&l, &e);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    inv.symmetrize();
    Ok(inv)
}

/// log(det M) for symmetric positive-definite `M`.
pub fn spd_log_det(m: &Matrix) -> Result<f64> {
    let l = cholesky(m)?;
    Ok((0..m.rows).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0)
}

/// Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix,
/// by cyclic Jacobi rotations.
pub fn sym_eigen(m: &Matrix) -> (Vec<f64>, Matrix) {
    assert!(m.is_square());
    let n = m.rows;
    let mut a = m.clone();
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + frobenius(&a)) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = 0.5 * (a[(q, q)] - a[(p, p)]) / apq;
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap());
    let eigenvalues: Vec<f64> = idx.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (newcol, &oldcol) in idx.iter().enumerate() {
        for k in 0..n {
            vectors[(k, newcol)] = v[(k, oldcol)];
        }
    }
    (eigenvalues, vectors)
}

fn frobenius(m: &Matrix) -> f64 {
    m.data.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Symmetric square root of a positive-semidefinite matrix. Eigenvalues below
/// `-1e-10 * max` are rejected; small negatives are clamped to zero.
pub fn sym_sqrt(m: &Matrix) -> Result<Matrix> {
    let (vals, vecs) = sym_eigen(m);
    let max = vals.iter().cloned().fold(0.0, f64::max);
    let n = m.rows;
    let mut out = Matrix::zeros(n, n);
    for k in 0..n {
        if vals[k] < -1e-10 * max.max(1.0) {
            return Err(Error::NotPositiveDefinite(format!(
                "eigenvalue {:.3e}",
                vals[k]
            )));
        }
        let s = vals[k].max(0.0).sqrt();
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] += s * vecs[(i, k)] * vecs[(j, k)];
            }
        }
    }
    Ok(out)
}

/// Least squares solution of `X b = y` by Householder QR. `X` is tall
/// (rows >= cols) with full column rank.
pub fn qr_least_squares(x: &Matrix, y: &[f64]) -> Result<Vec<f64>> {
    let n = x.rows;
    let p = x.cols;
    if n < p {
        return Err(Error::Sizing(format!(
            "least squares needs at least as many rows ({n}) as columns ({p})"
        )));
    }
    let mut a = x.clone();
    let mut b = y.to_vec();
    for k in 0..p {
        let mut norm = 0.0;
        for i in k..n {
            norm += a[(i, k)] * a[(i, k)];
        }
        let norm = norm.sqrt();
        if norm == 0.0 {
            return Err(Error::RankDeficient { rank: k, needed: p });
        }
        let sign = if a[(k, k)] >= 0.0 { 1.0 } else { -1.0 };
        let mut v = vec![0.0; n - k];
        v[0] = a[(k, k)] + sign * norm;
        for i in (k + 1)..n {
            v[i - k] = a[(i, k)];
        }
        let vtv = dot(&v, &v);
        if vtv == 0.0 {
            continue;
        }
        for j in k..p {
            let mut s = 0.0;
            for i in k..n {
                s += v[i - k] * a[(i, j)];
            }
            let f = 2.0 * s / vtv;
            for i in k..n {
                a[(i, j)] -= f * v[i - k];
            }
        }
        let mut s = 0.0;
        for i in k..n {
            s += v[i - k] * b[i];
        }
        let f = 2.0 * s / vtv;
        for i in k..n {
            b[i] -= f * v[i - k];
        }
    }
    // Back substitution on the upper-triangular block.
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = b[i];
        for j in (i + 1)..p {
            s -= a[(i, j)] * beta[j];
        }
        let d = a[(i, i)];
        if d.abs() < 1e-300 {
            return Err(Error::RankDeficient { rank: i, needed: p });
        }
        beta[i] = s / d;
    }
    Ok(beta)
}

/// Singular values of a tall matrix via the eigenvalues of `X'X`.
pub fn singular_values(x: &Matrix) -> Vec<f64> {
    let gram = x.transpose().matmul(x);
    let (vals, _) = sym_eigen(&gram);
    let mut svals: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    svals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    svals
}

/// Numerical rank with tolerance `tol_rel * largest singular value`.
pub fn numerical_rank(x: &Matrix, tol_rel: f64) -> usize {
    let svals = singular_values(x);
    let cutoff = tol_rel * svals.first().copied().unwrap_or(0.0);
    svals.iter().filter(|&&s| s > cutoff).count()
}
