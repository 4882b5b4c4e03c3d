//! Dense complex matrix utilities.
//!
//! Everything here works on `nalgebra::DMatrix<Complex64>`. Hermitian input is
//! wrapped in [`HermitianMatrix`] so that the eigensolver and the PSD checks
//! downstream never see a matrix that is only "almost" Hermitian.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

/// Relative tolerance used when validating Hermitian symmetry.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Singular values below `sigma_max * PINV_RCOND` are treated as zero.
pub const PINV_RCOND: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: max |A - A^H| = {deviation:e} exceeds {tolerance:e}")]
    NotHermitian { deviation: f64, tolerance: f64 },
    #[error("norm weights must be positive, got ({0}, {1})")]
    NonPositiveWeight(f64, f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// A square matrix equal to its conjugate transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(ComplexMatrix);

impl HermitianMatrix {
    /// Validates symmetry within [`HERMITIAN_TOL`] (relative to the largest
    /// entry) and stores the exactly symmetrized matrix.
    pub fn new(m: ComplexMatrix) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(LinalgError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        let deviation = (&m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let tolerance = HERMITIAN_TOL * scale;
        if deviation > tolerance {
            return Err(LinalgError::NotHermitian {
                deviation,
                tolerance,
            });
        }
        Ok(Self::symmetrized(m))
    }

    /// Returns `(m + m^H) / 2` without checking how far `m` was from Hermitian.
    pub fn symmetrized(m: ComplexMatrix) -> Self {
        assert!(m.is_square(), "symmetrized: matrix must be square");
        let h = (&m + m.adjoint()).scale(0.5);
        Self(h)
    }

    pub fn zeros(n: usize) -> Self {
        Self(ComplexMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n, n))
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let v = ComplexVector::from_iterator(d.len(), d.iter().map(|&x| Complex64::new(x, 0.0)));
        Self(ComplexMatrix::from_diagonal(&v))
    }

    /// `v v^H` for a column vector `v`.
    pub fn outer(v: &ComplexVector) -> Self {
        Self::symmetrized(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.0.norm()
    }

    /// The diagonal part of the matrix as a real vector.
    pub fn real_diagonal(&self) -> Vec<f64> {
        self.0.diagonal().iter().map(|z| z.re).collect()
    }

    /// `diag(A)`: same diagonal, zero elsewhere.
    pub fn diagonal_part(&self) -> Self {
        Self::from_real_diagonal(&self.real_diagonal())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *hermitian_eig(self).eigenvalues.last().unwrap_or(&0.0)
    }
}

impl std::ops::Add for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn add(self, rhs: Self) -> HermitianMatrix {
        HermitianMatrix(&self.0 + &rhs.0)
    }
}

impl std::ops::Sub for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn sub(self, rhs: Self) -> HermitianMatrix {
        HermitianMatrix(&self.0 - &rhs.0)
    }
}

/// Eigenpairs of a Hermitian matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    /// Unitary matrix whose columns are the eigenvectors, in eigenvalue order.
    pub eigenvectors: ComplexMatrix,
}

impl EigenDecomposition {
    /// `U diag(f(lambda)) U^H`.
    pub fn rebuild_with(&self, f: impl Fn(f64) -> f64) -> HermitianMatrix {
        let u = &self.eigenvectors;
        let mut scaled = u.clone();
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            let s = f(lam);
            scaled.column_mut(k).scale_mut(s);
        }
        HermitianMatrix::symmetrized(scaled * u.adjoint())
    }

    pub fn reconstruct(&self) -> HermitianMatrix {
        self.rebuild_with(|x| x)
    }
}

pub fn hermitian_eig(a: &HermitianMatrix) -> EigenDecomposition {
    let n = a.dim();
    if n == 0 {
        return EigenDecomposition {
            eigenvalues: Vec::new(),
            eigenvectors: ComplexMatrix::zeros(0, 0),
        };
    }
    let eig = nalgebra::linalg::SymmetricEigen::new(a.0.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = ComplexMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    EigenDecomposition {
        eigenvalues,
        eigenvectors,
    }
}

/// Eigenvalues of an arbitrary square complex matrix via the Schur form.
pub fn eigenvalues(a: &ComplexMatrix) -> Result<Vec<Complex64>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = nalgebra::linalg::Schur::new(a.clone());
    let (_, t) = schur.unpack();
    Ok(t.diagonal().iter().copied().collect())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &ComplexMatrix) -> Result<f64, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    // Hermitian input takes the more accurate symmetric path.
    if let Ok(h) = HermitianMatrix::new(a.clone()) {
        let eig = hermitian_eig(&h);
        return Ok(eig.eigenvalues.iter().map(|x| x.abs()).fold(0.0, f64::max));
    }
    Ok(eigenvalues(a)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Moore-Penrose pseudoinverse with singular values below
/// `sigma_max * PINV_RCOND` truncated.
pub fn pseudo_inverse(a: &ComplexMatrix) -> ComplexMatrix {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return ComplexMatrix::zeros(c, r);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return ComplexMatrix::zeros(c, r);
    }
    let cutoff = smax * PINV_RCOND;
    let u = svd.u.as_ref().expect("svd computed with u");
    let v_t = svd.v_t.as_ref().expect("svd computed with v_t");
    let mut out = ComplexMatrix::zeros(c, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            let vk = v_t.row(k).adjoint();
            let uk = u.column(k).adjoint();
            out += (vk * uk).scale(1.0 / s);
        }
    }
    out
}

/// Number of singular values above `sigma_max * rcond`.
pub fn numerical_rank(a: &ComplexMatrix, rcond: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > smax * rcond).count()
}

/// `max(||X1||_F / w1, ||X2||_F / w2)`.
pub fn weighted_max_norm(
    x1: &HermitianMatrix,
    x2: &HermitianMatrix,
    w: (f64, f64),
) -> Result<f64, LinalgError> {
    if !(w.0 > 0.0 && w.1 > 0.0) {
        return Err(LinalgError::NonPositiveWeight(w.0, w.1));
    }
    Ok((x1.frobenius() / w.0).max(x2.frobenius() / w.1))
}

/// Circulant matrix whose first row is `first_row`; row `j` is the first row
/// cyclically shifted right by `j`.
pub fn circulant_matrix(first_row: &[Complex64]) -> ComplexMatrix {
    let m = first_row.len();
    ComplexMatrix::from_fn(m, m, |j, k| first_row[(k + m - j) % m])
}

/// Eigenvalues of [`circulant_matrix`]`(first_row)`; entry `m` belongs to the
/// Fourier eigenvector `(1, w^m, w^2m, ...)`, `w = exp(2 pi i / M)`.
pub fn circulant_eigenvalues(first_row: &[Complex64]) -> Vec<Complex64> {
    let m = first_row.len();
    (0..m)
        .map(|idx| {
            first_row
                .iter()
                .enumerate()
                .map(|(l, &c)| {
                    let phase = 2.0 * std::f64::consts::PI * ((idx * l) % m) as f64 / m as f64;
                    c * Complex64::from_polar(1.0, phase)
                })
                .sum()
        })
        .collect()
}

/// Deterministic generator for a seed. All sampling in the crate goes through
/// generators created here or handed in by the caller.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One circularly-symmetric complex Gaussian sample with unit variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `rows x cols` matrix of i.i.d. CN(0, 1) entries, filled in row-major order.
pub fn sample_complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    let data: Vec<Complex64> = (0..rows * cols).map(|_| complex_gaussian(rng)).collect();
    ComplexMatrix::from_row_slice(rows, cols, &data)
}

/// `log2 det(A)` for Hermitian positive definite `A`, via Cholesky.
/// Returns `None` when `A` is not numerically positive definite.
pub fn log2_det_hpd(a: &ComplexMatrix) -> Option<f64> {
    let chol = cholesky_hpd(a)?;
    let l = chol.l_dirty();
    Some(2.0 * l.diagonal().iter().map(|z| z.re.log2()).sum::<f64>())
}

/// Inverse of a Hermitian positive definite matrix.
pub fn inverse_hpd(a: &HermitianMatrix) -> Option<HermitianMatrix> {
    let chol = cholesky_hpd(&a.0)?;
    Some(HermitianMatrix::symmetrized(chol.inverse()))
}

// nalgebra's complex Cholesky takes complex square roots of negative pivots
// instead of failing, so the pivots are checked here.
fn cholesky_hpd(a: &ComplexMatrix) -> Option<nalgebra::linalg::Cholesky<Complex64, nalgebra::Dyn>> {
    let chol = nalgebra::linalg::Cholesky::new(a.clone())?;
    let ok = chol
        .l_dirty()
        .diagonal()
        .iter()
        .all(|z| z.re > 0.0 && z.im.abs() <= 1e-12 * z.re);
    ok.then_some(chol)
}

pub fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}
