//! Symmetric positive-definite matrices and Gaussian measures.
//!
//! Every [`SpdMatrix`] carries its symmetric eigendecomposition, computed once
//! at construction. Square roots, inverses and log-determinants are spectral
//! maps over that decomposition, so they cost one matrix product each.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest tolerated absolute asymmetry `|a_ij - a_ji|` for user input.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// A matrix is rejected when `lambda_min <= DEFINITENESS_FLOOR * lambda_max`.
pub const DEFINITENESS_FLOOR: f64 = 1e-12;

/// Real symmetric positive-definite matrix with a cached eigendecomposition.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    matrix: DMatrix<f64>,
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

impl SpdMatrix {
    /// Validates `m` and symmetrizes it as `(m + m^T) / 2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        let asym = max_asymmetry(&m);
        if asym > SYMMETRY_TOL {
            return Err(Error::NotSymmetric {
                max_asymmetry: asym,
                tolerance: SYMMETRY_TOL,
            });
        }
        Self::from_symmetric_part(m)
    }

    /// Builds from row-major nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?)
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(dim, dim),
            eigenvalues: DVector::from_element(dim, 1.0),
            eigenvectors: DMatrix::identity(dim, dim),
        }
    }

    /// Takes the symmetric part of `m` without the asymmetry check. Used for
    /// products that are symmetric in exact arithmetic.
    pub(crate) fn from_symmetric_part(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        let sym = symmetrize(&m);
        let eig = SymmetricEigen::new(sym.clone());
        let (lo, hi) = extremes(&eig.eigenvalues);
        if hi <= 0.0 || lo <= DEFINITENESS_FLOOR * hi {
            return Err(Error::NotPositiveDefinite {
                eigenvalue: lo,
                largest: hi,
            });
        }
        Ok(Self {
            matrix: sym,
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        })
    }

    /// `V diag(f(lambda)) V^T`; `f` must map positive reals to positive reals.
    pub(crate) fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> SpdMatrix {
        let values = self.eigenvalues.map(f);
        let v = &self.eigenvectors;
        let scaled = v * DMatrix::from_diagonal(&values);
        let matrix = symmetrize(&(scaled * v.transpose()));
        SpdMatrix {
            matrix,
            eigenvalues: values,
            eigenvectors: v.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Eigenvalues in the order returned by the decomposition (unsorted).
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn min_eigenvalue(&self) -> f64 {
        extremes(&self.eigenvalues).0
    }

    pub fn max_eigenvalue(&self) -> f64 {
        extremes(&self.eigenvalues).1
    }

    pub fn condition_number(&self) -> f64 {
        let (lo, hi) = extremes(&self.eigenvalues);
        hi / lo
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn logdet(&self) -> f64 {
        self.eigenvalues.iter().map(|l| l.ln()).sum()
    }

    pub fn sqrt(&self) -> SpdMatrix {
        self.map_spectrum(f64::sqrt)
    }

    pub fn inv_sqrt(&self) -> SpdMatrix {
        self.map_spectrum(|l| 1.0 / l.sqrt())
    }

    pub fn inv(&self) -> SpdMatrix {
        self.map_spectrum(|l| 1.0 / l)
    }

    /// `self + shift * I`, for `shift >= 0`.
    pub fn shifted(&self, shift: f64) -> SpdMatrix {
        assert!(shift >= 0.0, "shift must be nonnegative");
        self.map_spectrum(|l| l + shift)
    }

    /// Full factorization bundle.
    pub fn factor(&self) -> SpdFactorization {
        spd_factor(self)
    }
}

/// Principal square root, inverse square root, inverse and log-determinant of an SPD matrix.
#[derive(Debug, Clone)]
pub struct SpdFactorization {
    source: SpdMatrix,
    sqrt: SpdMatrix,
    inv_sqrt: SpdMatrix,
    inv: SpdMatrix,
    logdet: f64,
}

impl SpdFactorization {
    pub fn source(&self) -> &SpdMatrix {
        &self.source
    }
    pub fn sqrt(&self) -> &SpdMatrix {
        &self.sqrt
    }
    pub fn inv_sqrt(&self) -> &SpdMatrix {
        &self.inv_sqrt
    }
    pub fn inv(&self) -> &SpdMatrix {
        &self.inv
    }
    pub fn logdet(&self) -> f64 {
        self.logdet
    }
}

pub fn spd_factor(a: &SpdMatrix) -> SpdFactorization {
    SpdFactorization {
        source: a.clone(),
        sqrt: a.sqrt(),
        inv_sqrt: a.inv_sqrt(),
        inv: a.inv(),
        logdet: a.logdet(),
    }
}

/// Gaussian measure `N(mean, cov)` on `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: SpdMatrix,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::DimensionMismatch {
                expected: cov.dim(),
                found: mean.len(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { mean, cov })
    }

    /// Builds from plain slices, the shape used by problem files.
    pub fn from_parts(mean: &[f64], cov_rows: &[Vec<f64>]) -> Result<Self> {
        validate_gaussian(DVector::from_column_slice(mean), matrix_from_rows(cov_rows)?)
    }

    pub fn centered(cov: SpdMatrix) -> Self {
        Self {
            mean: DVector::zeros(cov.dim()),
            cov,
        }
    }

    pub fn standard(dim: usize) -> Self {
        Self::centered(SpdMatrix::identity(dim))
    }

    pub fn dim(&self) -> usize {
        self.cov.dim()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }

    pub fn translated(&self, shift: &DVector<f64>) -> Result<Self> {
        Self::new(&self.mean + shift, self.cov.clone())
    }
}

/// Validates raw moments and returns a [`Gaussian`].
pub fn validate_gaussian(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Gaussian> {
    check_square(&cov)?;
    if mean.len() != cov.nrows() {
        return Err(Error::DimensionMismatch {
            expected: cov.nrows(),
            found: mean.len(),
        });
    }
    Gaussian::new(mean, SpdMatrix::new(cov)?)
}

pub(crate) fn ensure_same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    for r in rows {
        if r.len() != n {
            return Err(Error::NotSquare {
                rows: n,
                cols: r.len(),
            });
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn extremes(values: &DVector<f64>) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}
