//! Dense algebra on small symmetric positive (semi)definite matrices.
//!
//! Everything here works on `k x k` blocks with `k <= MAX_DIM`, using direct
//! symmetric eigendecompositions. Returned matrices are always symmetrized.

use std::ops::Add;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// A general `k x k` real block (currents, voltages, gradients).
pub type Block = DMatrix<f64>;

/// Largest block dimension accepted by [`SpdMatrix`].
pub const MAX_DIM: usize = 16;

/// Relative symmetry tolerance applied when a matrix enters the crate.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Default Dykstra stopping tolerance.
pub const DEFAULT_PROJECTION_TOL: f64 = 1e-10;

/// Default Dykstra iteration cap.
pub const DEFAULT_PROJECTION_MAX_ITER: usize = 500;

/// A symmetric positive (semi)definite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

impl SpdMatrix {
    /// Wraps a symmetric matrix, rejecting non-square or asymmetric input.
    ///
    /// Definiteness is not checked here; use [`SpdMatrix::positive_definite`]
    /// where strict positivity is part of the contract.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        check_square(&m)?;
        if m.nrows() > MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "block dimension {} exceeds the supported maximum {MAX_DIM}",
                m.nrows()
            )));
        }
        let scale = m.amax();
        let asymmetry = (&m - m.transpose()).amax();
        if asymmetry > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric { asymmetry });
        }
        Ok(Self::symmetrize(m))
    }

    /// Like [`SpdMatrix::new`], but also requires the smallest eigenvalue to be positive.
    pub fn positive_definite(m: DMatrix<f64>) -> Result<Self> {
        let s = Self::new(m)?;
        let min = s.min_eigenvalue();
        if min.is_nan() || min <= 0.0 {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        Ok(s)
    }

    /// Symmetrizes `(M + M^T) / 2` without any validation.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        let t = m.transpose();
        Self((m + t) * 0.5)
    }

    pub fn identity(k: usize) -> Self {
        Self(DMatrix::identity(k, k))
    }

    pub fn scaled_identity(k: usize, c: f64) -> Self {
        Self(DMatrix::identity(k, k) * c)
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(diag)))
    }

    /// Builds a matrix from row-major nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        for r in rows {
            if r.len() != n {
                return Err(Error::NotSquare {
                    rows: n,
                    cols: r.len(),
                });
            }
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.0.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().expect("non-empty matrix")
    }

    pub fn is_positive_definite(&self) -> bool {
        Cholesky::new(self.0.clone()).is_some()
    }

    /// Inverse of a strictly positive definite matrix.
    pub fn inverse(&self) -> Result<Self> {
        match Cholesky::new(self.0.clone()) {
            Some(ch) => Ok(Self::symmetrize(ch.inverse())),
            None => Err(Error::NotPositiveDefinite {
                min_eigenvalue: self.min_eigenvalue(),
            }),
        }
    }

    /// Symmetric square root of the positive part.
    pub fn sqrt(&self) -> Self {
        spectral_map(&self.0, |l| l.max(0.0).sqrt())
    }
}

impl Add for &SpdMatrix {
    type Output = SpdMatrix;

    fn add(self, rhs: &SpdMatrix) -> SpdMatrix {
        SpdMatrix::symmetrize(&self.0 + &rhs.0)
    }
}

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

fn check_same_dim(a: &SpdMatrix, b: &SpdMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// Applies `f` to the eigenvalues of a symmetric matrix.
fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> SpdMatrix {
    let eig = SymmetricEigen::new(m.clone());
    let mapped = eig.eigenvalues.map(f);
    let v = &eig.eigenvectors;
    SpdMatrix::symmetrize(v * DMatrix::from_diagonal(&mapped) * v.transpose())
}

/// Projection onto the PSD cone: negative eigenvalues clipped to zero.
pub fn psd_part(m: &DMatrix<f64>) -> SpdMatrix {
    spectral_map(m, |l| l.max(0.0))
}

/// Moore-Penrose pseudoinverse with the default cutoff `k * eps * lambda_max`.
pub fn pinv(m: &SpdMatrix) -> SpdMatrix {
    pinv_with_tol(m, m.dim() as f64 * f64::EPSILON)
}

/// Pseudoinverse treating eigenvalues below `rel_tol * lambda_max` as zero.
pub fn pinv_with_tol(m: &SpdMatrix, rel_tol: f64) -> SpdMatrix {
    let eig = SymmetricEigen::new(m.0.clone());
    let lmax = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b));
    let cutoff = rel_tol * lmax;
    let inv = eig
        .eigenvalues
        .map(|l| if l > cutoff && l > 0.0 { 1.0 / l } else { 0.0 });
    let v = &eig.eigenvectors;
    SpdMatrix::symmetrize(v * DMatrix::from_diagonal(&inv) * v.transpose())
}

/// Parallel sum `A : B = A (A + B)^+ B`.
///
/// For strictly positive definite inputs this is `(A^-1 + B^-1)^-1`, the
/// matrix analogue of two resistors in parallel.
pub fn parallel_add(a: &SpdMatrix, b: &SpdMatrix) -> Result<SpdMatrix> {
    check_same_dim(a, b)?;
    let sum_pinv = pinv(&(a + b));
    Ok(SpdMatrix::symmetrize(&a.0 * sum_pinv.0 * &b.0))
}

/// `A <= B` in the Loewner order: the smallest eigenvalue of `B - A` is at least `-tol`.
pub fn loewner_leq(a: &SpdMatrix, b: &SpdMatrix, tol: f64) -> Result<bool> {
    check_same_dim(a, b)?;
    let diff = SpdMatrix::symmetrize(&b.0 - &a.0);
    Ok(diff.min_eigenvalue() >= -tol)
}

/// Result of [`project_box`].
#[derive(Clone, Debug)]
pub struct BoxProjection {
    pub matrix: SpdMatrix,
    pub iterations: usize,
    pub converged: bool,
    /// Frobenius norm of the last successive-iterate change.
    pub last_change: f64,
}

/// Frobenius-nearest point of the Loewner interval `[lower, upper]`.
///
/// Runs Dykstra's alternating projections between `{Y >= lower}` and
/// `{Y <= upper}`; each half-step clips the eigenvalues of `Y - lower`
/// (resp. `upper - Y`). Stops once the iterate moves less than `tol` and
/// satisfies both bounds at `tol`. When `max_iter` is exhausted the last
/// iterate is returned with `converged == false`.
pub fn project_box(
    x: &Block,
    lower: &SpdMatrix,
    upper: &SpdMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<BoxProjection> {
    check_same_dim(lower, upper)?;
    check_square(x)?;
    if x.nrows() != lower.dim() {
        return Err(Error::DimensionMismatch {
            expected: lower.dim(),
            got: x.nrows(),
        });
    }
    if !loewner_leq(lower, upper, tol)? {
        return Err(Error::InfeasibleBounds);
    }
    let x = SpdMatrix::symmetrize(x.clone());
    if loewner_leq(lower, &x, 0.0)? && loewner_leq(&x, upper, 0.0)? {
        return Ok(BoxProjection {
            matrix: x,
            iterations: 0,
            converged: true,
            last_change: 0.0,
        });
    }

    let k = lower.dim();
    let proj_lower = |m: &DMatrix<f64>| &lower.0 + psd_part(&(m - &lower.0)).0;
    let proj_upper = |m: &DMatrix<f64>| &upper.0 - psd_part(&(&upper.0 - m)).0;

    let mut cur = x.0;
    let mut p = DMatrix::zeros(k, k);
    let mut q = DMatrix::zeros(k, k);
    let mut change = f64::INFINITY;
    for it in 1..=max_iter {
        let y = proj_lower(&(&cur + &p));
        p = &cur + &p - &y;
        let next = proj_upper(&(&y + &q));
        q = &y + &q - &next;
        change = (&next - &cur).norm();
        cur = next;
        if change < tol {
            let candidate = SpdMatrix::symmetrize(cur.clone());
            if loewner_leq(lower, &candidate, tol)? && loewner_leq(&candidate, upper, tol)? {
                return Ok(BoxProjection {
                    matrix: candidate,
                    iterations: it,
                    converged: true,
                    last_change: change,
                });
            }
        }
    }
    Ok(BoxProjection {
        matrix: SpdMatrix::symmetrize(cur),
        iterations: max_iter,
        converged: false,
        last_change: change,
    })
}

/// Frobenius inner product `<A, B> = Tr(A^T B)`.
pub fn frobenius_inner(a: &Block, b: &Block) -> f64 {
    a.dot(b)
}
