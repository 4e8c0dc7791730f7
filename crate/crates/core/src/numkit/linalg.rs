use nalgebra::linalg::Schur;
use num_complex::Complex64;
use serde::{Serialize, Serializer};

use super::{CMatrix, Matrix};
use crate::error::{dim_err, Error, Result};

const SCHUR_MAX_ITER: usize = 10_000;

/// Eigenvalues of a square real matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Complex64> {
        self.eigenvalues.iter()
    }

    pub fn max_modulus(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.norm()).fold(0.0, f64::max)
    }

    pub fn max_real(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| l.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Eigenvalues with conjugate duplicates dropped (keeps `im >= 0`)
    /// and near-coincident values merged.
    pub fn distinct(&self, tol: f64) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = Vec::new();
        for l in &self.eigenvalues {
            if l.im < -tol * (1.0 + l.norm()) {
                continue;
            }
            if out.iter().all(|o| (o - l).norm() > tol * (1.0 + l.norm())) {
                out.push(*l);
            }
        }
        out
    }
}

impl Serialize for Spectrum {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = self.eigenvalues.iter().map(|l| [l.re, l.im]).collect();
        pairs.serialize(s)
    }
}

fn require_square(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(dim_err(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Full spectrum via real Schur reduction.
pub fn eigenvalues(m: &Matrix) -> Result<Spectrum> {
    require_square(m, "eigenvalue input")?;
    if m.nrows() == 0 {
        return Ok(Spectrum {
            eigenvalues: Vec::new(),
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or_else(|| {
        Error::Numeric(format!(
            "Schur iteration did not converge in {SCHUR_MAX_ITER} sweeps"
        ))
    })?;
    Ok(Spectrum {
        eigenvalues: schur.complex_eigenvalues().iter().copied().collect(),
    })
}

pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?.max_modulus())
}

pub fn spectral_abscissa(m: &Matrix) -> Result<f64> {
    Ok(eigenvalues(m)?.max_real())
}

/// `max |λ| < 1 - tol`. Empty matrices are trivially Schur.
pub fn is_schur(m: &Matrix, tol: f64) -> Result<bool> {
    Ok(spectral_radius(m)? < 1.0 - tol)
}

/// `max Re λ < -tol`. Empty matrices are trivially Hurwitz.
pub fn is_hurwitz(m: &Matrix, tol: f64) -> Result<bool> {
    if m.nrows() == 0 {
        return Ok(true);
    }
    Ok(spectral_abscissa(m)? < -tol)
}

fn rank_from_singular_values(sv: &[f64], tol: f64) -> usize {
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * smax).count()
}

/// Number of singular values above `tol` times the largest one.
pub fn rank_svd(m: &Matrix, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    rank_from_singular_values(sv.as_slice(), tol)
}

/// Complex counterpart of [`rank_svd`].
pub fn rank_svd_complex(m: &CMatrix, tol: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.singular_values();
    rank_from_singular_values(sv.as_slice(), tol)
}

/// Spectral norm (largest singular value).
pub fn norm2(m: &Matrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().iter().cloned().fold(0.0, f64::max)
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

pub fn zeros(rows: usize, cols: usize) -> Matrix {
    Matrix::zeros(rows, cols)
}

pub fn identity(n: usize) -> Matrix {
    Matrix::identity(n, n)
}

pub fn to_complex(m: &Matrix) -> CMatrix {
    m.map(|v| Complex64::new(v, 0.0))
}

/// `e₁ᵀ ⊗ I_copies`: picks the first block of a `degree*copies` vector.
pub fn selector_first(degree: usize, copies: usize) -> Matrix {
    let mut e1 = zeros(1, degree);
    if degree > 0 {
        e1[(0, 0)] = 1.0;
    }
    kron(&e1, &identity(copies))
}

/// Build a matrix from rows; all rows must have `cols` entries.
pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Result<Matrix> {
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != cols) {
        return Err(dim_err(format!(
            "row {i} has {} entries, expected {cols}",
            r.len()
        )));
    }
    Ok(Matrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

pub fn hstack(blocks: &[&Matrix]) -> Result<Matrix> {
    let rows = blocks.first().map(|b| b.nrows()).unwrap_or(0);
    if blocks.iter().any(|b| b.nrows() != rows) {
        return Err(dim_err("hstack: row counts differ"));
    }
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    Ok(out)
}

pub fn vstack(blocks: &[&Matrix]) -> Result<Matrix> {
    let cols = blocks.first().map(|b| b.ncols()).unwrap_or(0);
    if blocks.iter().any(|b| b.ncols() != cols) {
        return Err(dim_err("vstack: column counts differ"));
    }
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    Ok(out)
}

pub fn block_diag(blocks: &[&Matrix]) -> Matrix {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(*b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}
