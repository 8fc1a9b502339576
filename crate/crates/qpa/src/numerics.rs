//! Dense linear-algebra kernels: numerical rank, minimum-norm least squares,
//! Hermitian eigendecomposition and a Cholesky-based PSD test.
//!
//! Everything here is small and direct. Matrices are at most a few hundred
//! rows by n² ≤ 256 columns.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{param_labels, Param};
use crate::{tol, CMat};

/// Coefficient matrix and right-hand side of the real consistency equations.
#[derive(Debug, Clone, PartialEq)]
pub struct RealLinearSystem {
    dimension: usize,
    a: DMatrix<f64>,
    b: DVector<f64>,
    labels: Vec<Param>,
}

impl RealLinearSystem {
    /// Wraps `a` and `b` after checking the column count is `dimension²`.
    pub fn new(dimension: usize, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let cols = dimension * dimension;
        if a.ncols() != cols {
            return Err(Error::DimensionMismatch {
                index: 0,
                expected: cols,
                found: a.ncols(),
            });
        }
        if b.len() != a.nrows() {
            return Err(Error::DimensionMismatch {
                index: 1,
                expected: a.nrows(),
                found: b.len(),
            });
        }
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self {
            dimension,
            a,
            b,
            labels: param_labels(dimension),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }

    /// The parameter carried by each column.
    pub fn column_labels(&self) -> &[Param] {
        &self.labels
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    /// The subsystem made of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let a = self.a.select_rows(rows);
        let b = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.b[r]));
        Self {
            dimension: self.dimension,
            a,
            b,
            labels: self.labels.clone(),
        }
    }

    /// Same coefficients, different right-hand side.
    pub fn with_rhs(&self, b: DVector<f64>) -> Result<Self> {
        Self::new(self.dimension, self.a.clone(), b)
    }
}

/// Singular values and the rank they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct RankProfile {
    pub rank: usize,
    /// Nonincreasing.
    pub singular_values: Vec<f64>,
    pub threshold_used: f64,
}

fn check_finite_real(a: &DMatrix<f64>) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput)
    }
}

/// Full SVD of `a` with at least `a.ncols()` rows (zero-padded), sorted by
/// decreasing singular value. Returns (U, σ, V) with V square.
fn padded_svd(a: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    let padded = if m < n {
        let mut p = DMatrix::zeros(n, n);
        p.view_mut((0, 0), (m, n)).copy_from(a);
        p
    } else {
        a.clone()
    };
    let svd = padded.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .expect("finite singular values")
            .then(i.cmp(&j))
    });
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u_sorted = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v_sorted = DMatrix::from_fn(n, order.len(), |r, c| v_t[(order[c], r)]);
    (u_sorted, sigma, v_sorted)
}

fn profile_from(sigma: &[f64], keep: usize) -> RankProfile {
    let sigma_max = sigma.first().copied().unwrap_or(0.0);
    let threshold = tol::RANK * sigma_max;
    let singular_values: Vec<f64> = sigma[..keep.min(sigma.len())].to_vec();
    let rank = singular_values.iter().filter(|&&s| s > threshold).count();
    RankProfile {
        rank,
        singular_values,
        threshold_used: threshold,
    }
}

/// Rank by thresholding singular values at `1e−9·σ_max`.
pub fn numerical_rank(a: &DMatrix<f64>) -> Result<RankProfile> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    check_finite_real(a)?;
    let (_, sigma, _) = padded_svd(a);
    Ok(profile_from(&sigma, a.nrows().min(a.ncols())))
}

/// Result of [`least_squares_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    /// Minimum-norm least-squares solution.
    pub solution: DVector<f64>,
    /// ‖A·solution − b‖₂.
    pub residual_norm: f64,
    pub nullspace_dim: usize,
    /// Orthonormal basis of ker A.
    pub nullspace_basis: Vec<DVector<f64>>,
    pub rank_profile: RankProfile,
}

/// Minimum-norm least squares through the SVD pseudo-inverse.
pub fn least_squares_solve(sys: &RealLinearSystem) -> Result<LeastSquares> {
    let a = sys.matrix();
    if a.nrows() == 0 {
        return Err(Error::InvalidArgument("system has no rows".into()));
    }
    let n = a.ncols();
    let (u, sigma, v) = padded_svd(a);
    let profile = profile_from(&sigma, a.nrows().min(n));
    let mut b = DVector::zeros(u.nrows());
    b.rows_mut(0, a.nrows()).copy_from(sys.rhs());

    let mut solution = DVector::zeros(n);
    for (i, &s) in sigma.iter().enumerate().take(profile.rank) {
        let coeff = u.column(i).dot(&b) / s;
        solution.axpy(coeff, &v.column(i), 1.0);
    }
    let residual_norm = (a * &solution - sys.rhs()).norm();
    let nullspace_basis: Vec<DVector<f64>> = (profile.rank..n).map(|i| v.column(i).into_owned()).collect();
    Ok(LeastSquares {
        solution,
        residual_norm,
        nullspace_dim: nullspace_basis.len(),
        nullspace_basis,
        rank_profile: profile,
    })
}

/// Orthonormal basis of the left nullspace {u : uᵀA = 0}.
pub fn left_nullspace(a: &DMatrix<f64>) -> Result<Vec<DVector<f64>>> {
    check_finite_real(a)?;
    let at = a.transpose();
    let rank = numerical_rank(a)?.rank;
    let (_, _, v) = padded_svd(&at);
    Ok((rank..a.nrows()).map(|i| v.column(i).into_owned()).collect())
}

/// Eigenvalues (nondecreasing) and matching orthonormal eigenvectors as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl HermitianEigen {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// V·diag(f(λ))·V†.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (c, &l) in self.values.iter().enumerate() {
            let w = Complex64::new(f(l), 0.0);
            for r in 0..n {
                scaled[(r, c)] *= w;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

pub(crate) fn check_finite(m: &CMat) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput)
    }
}

pub(crate) fn hermitian_deviation(m: &CMat) -> f64 {
    (m - m.adjoint()).norm()
}

fn require_hermitian(m: &CMat) -> Result<()> {
    check_finite(m)?;
    if !m.is_square() {
        return Err(Error::DimensionMismatch {
            index: 0,
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    let deviation = hermitian_deviation(m);
    if deviation > tol::HERM * m.norm().max(1.0) {
        return Err(Error::NotHermitian { index: 0, deviation });
    }
    Ok(())
}

/// Spectrum of a Hermitian matrix, sorted ascending.
pub fn hermitian_eigen(m: &CMat) -> Result<HermitianEigen> {
    require_hermitian(m)?;
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .expect("finite eigenvalues")
            .then(i.cmp(&j))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let n = m.nrows();
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(HermitianEigen { values, vectors })
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMat) -> Result<f64> {
    Ok(hermitian_eigen(m)?.min())
}

/// Lower-triangular L with L·L† = M, or `None` when a pivot is not positive.
pub fn cholesky(m: &CMat) -> Option<CMat> {
    let n = m.nrows();
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if d.is_nan() || d <= 0.0 {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = Complex64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

/// Outcome of [`psd_check`].
#[derive(Debug, Clone, PartialEq)]
pub enum PsdVerdict {
    /// `factor·factor† = M + shift·I`.
    IsPsd { factor: CMat, shift: f64 },
    NotPsd { min_eigenvalue: f64 },
}

impl PsdVerdict {
    pub fn is_psd(&self) -> bool {
        matches!(self, PsdVerdict::IsPsd { .. })
    }
}

/// PSD test by Cholesky of `M + shift_tol·I`, with an eigenvalue fallback.
pub fn psd_check(m: &CMat, shift_tol: f64) -> Result<PsdVerdict> {
    require_hermitian(m)?;
    let n = m.nrows();
    let shifted = |s: f64| {
        let mut h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
        for i in 0..n {
            h[(i, i)] += Complex64::new(s, 0.0);
        }
        h
    };
    if let Some(factor) = cholesky(&shifted(shift_tol)) {
        return Ok(PsdVerdict::IsPsd {
            factor,
            shift: shift_tol,
        });
    }
    let lambda_min = min_eigenvalue(m)?;
    if lambda_min < -shift_tol {
        return Ok(PsdVerdict::NotPsd {
            min_eigenvalue: lambda_min,
        });
    }
    // Borderline: λ_min sits within the shift but the factorization broke
    // down on rounding. Grow the shift until it goes through.
    let mut s = shift_tol.max(f64::EPSILON) + lambda_min.abs();
    for _ in 0..64 {
        s *= 2.0;
        if let Some(factor) = cholesky(&shifted(s)) {
            return Ok(PsdVerdict::IsPsd { factor, shift: s });
        }
    }
    Ok(PsdVerdict::NotPsd {
        min_eigenvalue: lambda_min,
    })
}
