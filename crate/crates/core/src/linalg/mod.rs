//! Dense numerical kernels shared by the estimators.
//!
//! Everything here is a thin, validated layer over `nalgebra` (QR, SVD,
//! Schur) and `rustfft`, plus a small Hungarian solver. Inputs are checked
//! for finiteness up front so that failures surface as [`Error::NonFinite`]
//! instead of as silently propagated NaNs.
//!
//! SVD results are verified after the fact: `nalgebra`'s bidiagonal solver
//! can return non-reconstructing factors for rank-deficient inputs, and
//! such results are recomputed with a one-sided Jacobi sweep.

mod fft;
mod hungarian;
mod jacobi;

pub use fft::{irfft, rfft, RealFft};
pub use hungarian::{assignment_cost, hungarian_match};

use nalgebra::linalg::balancing::balance_parlett_reinsch;
use nalgebra::{DMatrix, DVector, Schur, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative cutoff used for numerical rank: singular values below
/// `max(rows, cols) · σ_max · PINV_RTOL` are treated as zero.
pub const PINV_RTOL: f64 = 1e-12;

/// Thin singular value decomposition `M = U·diag(σ)·Vᵀ`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// `U`, a×k with orthonormal columns.
    pub left_vectors: DMatrix<f64>,
    /// σ, length k = min(a, b), descending and non-negative.
    pub singular_values: DVector<f64>,
    /// `V`, b×k with orthonormal columns.
    pub right_vectors: DMatrix<f64>,
}

impl SvdResult {
    /// Number of singular triplets, `min(a, b)`.
    pub fn len(&self) -> usize {
        self.singular_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singular_values.is_empty()
    }

    /// `U·diag(σ)·Vᵀ` using all triplets.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        low_rank_product(self, self.len())
    }
}

pub(crate) fn ensure_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Relative reconstruction/orthonormality defect above which a `nalgebra`
/// SVD is rejected.
const SVD_CHECK_TOL: f64 = 1e-10;

fn decompose(m: &DMatrix<f64>) -> Result<SvdResult> {
    // `try_new` sorts the singular values in descending order.
    if let Some(d) = SVD::try_new(m.clone(), true, true, f64::EPSILON, 0) {
        let result = SvdResult {
            left_vectors: d.u.expect("left vectors were requested"),
            singular_values: d.singular_values,
            right_vectors: d.v_t.expect("right vectors were requested").transpose(),
        };
        if is_valid(m, &result) {
            return Ok(result);
        }
    }
    let (left_vectors, singular_values, right_vectors) = jacobi::jacobi_svd(m);
    let result = SvdResult {
        left_vectors,
        singular_values,
        right_vectors,
    };
    if is_valid(m, &result) {
        Ok(result)
    } else {
        Err(Error::NoConvergence("svd"))
    }
}

fn is_valid(m: &DMatrix<f64>, d: &SvdResult) -> bool {
    let k = d.len();
    let identity = DMatrix::<f64>::identity(k, k);
    (d.reconstruct() - m).norm() <= SVD_CHECK_TOL * m.norm()
        && (d.left_vectors.transpose() * &d.left_vectors - &identity).amax() <= SVD_CHECK_TOL
        && (d.right_vectors.transpose() * &d.right_vectors - &identity).amax() <= SVD_CHECK_TOL
        && d.singular_values.as_slice().windows(2).all(|w| w[0] >= w[1])
}

/// Thin SVD with singular values sorted in descending order.
pub fn svd(matrix: &DMatrix<f64>) -> Result<SvdResult> {
    ensure_finite(matrix, "svd input")?;
    if matrix.is_empty() {
        return Err(Error::InvalidArgument("svd of an empty matrix".into()));
    }
    decompose(matrix)
}

/// Singular values and right singular vectors only.
///
/// Tall inputs are first reduced by QR, so the (possibly very long) left
/// factor is never formed.
pub fn right_singular(matrix: &DMatrix<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
    ensure_finite(matrix, "svd input")?;
    if matrix.is_empty() {
        return Err(Error::InvalidArgument("svd of an empty matrix".into()));
    }
    let (a, b) = matrix.shape();
    let reduced = if a > b { matrix.clone().qr().r() } else { matrix.clone() };
    let d = decompose(&reduced)?;
    Ok((d.singular_values, d.right_vectors))
}

/// `U_ρ·diag(σ_ρ)·V_ρᵀ`, the best rank-ρ approximation of the decomposed matrix.
pub fn truncate_rank(svd: &SvdResult, rank: usize) -> Result<DMatrix<f64>> {
    if rank == 0 || rank > svd.len() {
        return Err(Error::RankOutOfRange { rank, max: svd.len() });
    }
    Ok(low_rank_product(svd, rank))
}

fn low_rank_product(svd: &SvdResult, rank: usize) -> DMatrix<f64> {
    let mut left = svd.left_vectors.columns(0, rank).into_owned();
    for (j, mut col) in left.column_iter_mut().enumerate() {
        col *= svd.singular_values[j];
    }
    left * svd.right_vectors.columns(0, rank).transpose()
}

/// Minimum-Frobenius-norm minimiser of `‖B − A·W‖_F`.
///
/// Tall systems are reduced with a Householder QR (`Qᵀ` applied to `B` in
/// place) before the pseudoinverse of the small triangular factor is taken.
pub fn least_squares(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::shape("least_squares", a.nrows(), b.nrows()));
    }
    if a.nrows() == 0 || a.ncols() == 0 {
        return Err(Error::InvalidArgument("least squares needs N ≥ 1 and L ≥ 1".into()));
    }
    ensure_finite(a, "least-squares design")?;
    ensure_finite(b, "least-squares target")?;

    let (n, l) = a.shape();
    let cutoff_dim = n.max(l) as f64;
    if n > l {
        let qr = a.clone().qr();
        let mut qtb = b.clone();
        qr.q_tr_mul(&mut qtb);
        let rhs = qtb.rows(0, l).into_owned();
        pinv_solve(qr.r(), &rhs, cutoff_dim)
    } else {
        pinv_solve(a.clone(), b, cutoff_dim)
    }
}

fn pinv_solve(a: DMatrix<f64>, b: &DMatrix<f64>, cutoff_dim: f64) -> Result<DMatrix<f64>> {
    let SvdResult {
        left_vectors: u,
        singular_values: sigma,
        right_vectors: v,
    } = decompose(&a)?;
    let cutoff = cutoff_dim * sigma.max() * PINV_RTOL;
    let mut utb = u.transpose() * b;
    for (i, mut row) in utb.row_iter_mut().enumerate() {
        let s = sigma[i];
        if s > cutoff {
            row /= s;
        } else {
            row.fill(0.0);
        }
    }
    Ok(v * utb)
}

/// All eigenvalues of a real square matrix, with multiplicity, unordered.
///
/// The matrix is balanced (Parlett–Reinsch) before the real Schur
/// decomposition, which matters for companion matrices whose entries span
/// many orders of magnitude.
pub fn eigenvalues(matrix: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    if !matrix.is_square() {
        return Err(Error::shape(
            "eigenvalues",
            "square matrix",
            format!("{}×{}", matrix.nrows(), matrix.ncols()),
        ));
    }
    ensure_finite(matrix, "eigenvalue input")?;
    let n = matrix.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut work = matrix.clone();
    balance_parlett_reinsch(&mut work);
    let schur = Schur::try_new(work, f64::EPSILON, 0).ok_or(Error::NoConvergence("schur"))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}
