//! Sample containers and ingestion.
//!
//! A [`SemiSupervisedSample`] holds `m` matched pairs plus unmatched
//! covariate and response blocks. The unmatched blocks are deliberately
//! unlinked: permuting either block independently changes nothing downstream.

use crate::error::{Error, Result};
use crate::numeric::linalg::Matrix;
use crate::numeric::rng::SeedStream;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct SemiSupervisedSample {
    /// Matched covariates, `m x p`.
    pub matched_x: Matrix,
    /// Matched responses, length `m`.
    pub matched_y: Vec<f64>,
    /// Unmatched covariates, `n_x x p`.
    pub unmatched_x: Matrix,
    /// Unmatched responses, length `n_y`.
    pub unmatched_y: Vec<f64>,
}

impl SemiSupervisedSample {
    pub fn new(
        matched_x: Matrix,
        matched_y: Vec<f64>,
        unmatched_x: Matrix,
        unmatched_y: Vec<f64>,
    ) -> Result<Self> {
        if matched_x.rows != matched_y.len() {
            return Err(Error::DimensionMismatch(format!(
                "matched block: {} covariate rows vs {} responses",
                matched_x.rows,
                matched_y.len()
            )));
        }
        if matched_x.rows > 0 && unmatched_x.rows > 0 && matched_x.cols != unmatched_x.cols {
            return Err(Error::DimensionMismatch(format!(
                "matched dimension {} vs unmatched dimension {}",
                matched_x.cols, unmatched_x.cols
            )));
        }
        Ok(SemiSupervisedSample {
            matched_x,
            matched_y,
            unmatched_x,
            unmatched_y,
        })
    }

    /// Matched-only sample (no unmatched blocks).
    pub fn matched_only(matched_x: Matrix, matched_y: Vec<f64>) -> Result<Self> {
        let p = matched_x.cols;
        SemiSupervisedSample::new(matched_x, matched_y, Matrix::zeros(0, p), Vec::new())
    }

    pub fn p(&self) -> usize {
        if self.matched_x.rows > 0 || self.unmatched_x.rows == 0 {
            self.matched_x.cols
        } else {
            self.unmatched_x.cols
        }
    }

    pub fn m(&self) -> usize {
        self.matched_y.len()
    }

    pub fn n_x(&self) -> usize {
        self.unmatched_x.rows
    }

    pub fn n_y(&self) -> usize {
        self.unmatched_y.len()
    }

    /// Observed sample-size ratio `m / n_y`, reported alongside every fit.
    pub fn lambda_hat(&self) -> f64 {
        self.m() as f64 / self.n_y() as f64
    }
}

/// A plain numeric table read from CSV (row order preserved).
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Read `response_column` and `covariate_columns` from a headed CSV file.
/// Comma delimiter, `.` decimal point, no quoting; every referenced cell
/// must parse as a decimal number.
pub fn load_csv(
    path: &Path,
    response_column: &str,
    covariate_columns: &[&str],
) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::MalformedCsv("empty file, expected a header row".into()))?;
    let names: Vec<&str> = header.split(',').map(|s| s.trim()).collect();
    let find = |name: &str| -> Result<usize> {
        names
            .iter()
            .position(|&h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let y_idx = find(response_column)?;
    let x_idx: Vec<usize> = covariate_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<_>>()?;

    let p = x_idx.len();
    let mut y = Vec::new();
    let mut xdata = Vec::new();
    for (row, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(|s| s.trim()).collect();
        if cells.len() != names.len() {
            return Err(Error::MalformedCsv(format!(
                "data row {row} has {} cells, header has {}",
                cells.len(),
                names.len()
            )));
        }
        let parse = |idx: usize| -> Result<f64> {
            cells[idx].parse::<f64>().map_err(|e| Error::ParseCell {
                column: names[idx].to_string(),
                row,
                detail: format!("{:?}: {e}", cells[idx]),
            })
        };
        y.push(parse(y_idx)?);
        for &j in &x_idx {
            xdata.push(parse(j)?);
        }
    }
    let rows = y.len();
    Ok(Dataset {
        x: Matrix {
            rows,
            cols: p,
            data: xdata,
        },
        y,
    })
}

/// Read only the named covariate columns (no response) from a headed CSV.
pub fn load_csv_columns(path: &Path, columns: &[&str]) -> Result<Matrix> {
    if columns.is_empty() {
        return Err(Error::MalformedCsv("no columns requested".into()));
    }
    let ds = load_csv(path, columns[0], &columns[1..])?;
    // Reassemble in the requested order: response column first.
    let rows = ds.len();
    let p = columns.len();
    let mut out = Matrix::zeros(rows, p);
    for i in 0..rows {
        out[(i, 0)] = ds.y[i];
        for j in 1..p {
            out[(i, j)] = ds.x[(i, j - 1)];
        }
    }
    Ok(out)
}

/// Sizes and seed of the golden-sample split.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    /// Fraction of rows that go to the training set.
    pub train_fraction: f64,
    /// Matched rows drawn from the training set.
    pub matched_count: usize,
    /// Unmatched rows drawn from the training set, disjoint from the matched
    /// ones.
    pub unmatched_count: usize,
    pub seed: u64,
}

/// Disjoint train/test split, then `m` matched and `n` unmatched rows from
/// the training set. The unmatched covariates and responses come from the
/// same `n` rows but are stored as separate unlinked blocks.
pub fn subsample_protocol(
    full: &Dataset,
    spec: &SplitSpec,
) -> Result<(SemiSupervisedSample, Dataset)> {
    if !(0.0..=1.0).contains(&spec.train_fraction) {
        return Err(Error::Sizing(format!(
            "train fraction {} outside [0, 1]",
            spec.train_fraction
        )));
    }
    let total = full.len();
    let train_size = (spec.train_fraction * total as f64).round() as usize;
    if spec.matched_count + spec.unmatched_count > train_size {
        return Err(Error::Sizing(format!(
            "matched {} + unmatched {} exceeds training size {train_size}",
            spec.matched_count, spec.unmatched_count
        )));
    }
    let mut rng = SeedStream::new(spec.seed);
    let perm = rng.sample_indices(total, total);
    let train = &perm[..train_size];
    let test: Vec<usize> = perm[train_size..].to_vec();

    let pick = rng.sample_indices(train_size, spec.matched_count + spec.unmatched_count);
    let matched_rows: Vec<usize> = pick[..spec.matched_count].iter().map(|&i| train[i]).collect();
    let unmatched_rows: Vec<usize> = pick[spec.matched_count..]
        .iter()
        .map(|&i| train[i])
        .collect();

    let p = full.x.cols;
    let extract = |rows: &[usize]| -> (Matrix, Vec<f64>) {
        let mut m = Matrix::zeros(rows.len(), p);
        let mut y = Vec::with_capacity(rows.len());
        for (k, &r) in rows.iter().enumerate() {
            m.data[k * p..(k + 1) * p].copy_from_slice(full.x.row(r));
            y.push(full.y[r]);
        }
        (m, y)
    };
    let (mx, my) = extract(&matched_rows);
    // De-linking: covariates and responses of the same unmatched rows are
    // stored as separate blocks with no pairing retained.
    let (ux, uy) = extract(&unmatched_rows);
    let (tx, ty) = extract(&test);
    Ok((
        SemiSupervisedSample::new(mx, my, ux, uy)?,
        Dataset { x: tx, y: ty },
    ))
}

/// Per-column affine map produced by [`standardize`].
#[derive(Debug, Clone)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    /// Map coefficients fitted on standardized covariates back to original
    /// units. `intercept` is the fitted intercept on the standardized scale.
    pub fn coefficients_to_original(&self, beta_std: &[f64], intercept_std: f64) -> (Vec<f64>, f64) {
        let beta: Vec<f64> = beta_std
            .iter()
            .zip(&self.scales)
            .map(|(b, s)| b / s)
            .collect();
        let shift: f64 = beta.iter().zip(&self.means).map(|(b, m)| b * m).sum();
        (beta, intercept_std - shift)
    }

    pub fn apply_row(&self, row: &[f64], out: &mut [f64]) {
        for j in 0..row.len() {
            out[j] = (row[j] - self.means[j]) / self.scales[j];
        }
    }
}

/// Center and scale each covariate column of a matrix; responses are left
/// untouched. Errors on a zero-variance column.
pub fn standardize(x: &Matrix) -> Result<(Matrix, Standardization)> {
    let n = x.rows;
    let p = x.cols;
    if n < 2 {
        return Err(Error::Sizing(
            "need at least two rows to standardize".into(),
        ));
    }
    let mut means = vec![0.0; p];
    for i in 0..n {
        for j in 0..p {
            means[j] += x[(i, j)];
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut scales = vec![0.0; p];
    for i in 0..n {
        for j in 0..p {
            let d = x[(i, j)] - means[j];
            scales[j] += d * d;
        }
    }
    for (j, s) in scales.iter_mut().enumerate() {
        *s = (*s / (n as f64 - 1.0)).sqrt();
        if *s <= 0.0 {
            return Err(Error::DegenerateColumn(format!("{j}")));
        }
    }
    let mut out = Matrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            out[(i, j)] = (x[(i, j)] - means[j]) / scales[j];
        }
    }
    Ok((out, Standardization { means, scales }))
}
