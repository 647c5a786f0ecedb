//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;

/// Eigenvalues below this are clamped before taking square roots.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// `(A + Aᵀ) / 2`, exactly symmetric.
pub fn sym(a: &Mat) -> Mat {
    // Floating-point addition is commutative, so this is bitwise symmetric.
    (a + a.transpose()) * 0.5
}

pub fn skew(a: &Mat) -> Mat {
    (a - a.transpose()) * 0.5
}

pub fn ensure_square(a: &Mat, d: usize) -> Result<()> {
    if a.nrows() != d || a.ncols() != d {
        return Err(Error::dims(
            format!("{d}x{d}"),
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    Ok(())
}

/// Frobenius inner product `tr(Aᵀ B)`.
pub fn frob(a: &Mat, b: &Mat) -> f64 {
    a.dot(b)
}

/// Thin QR with the sign convention that `R` has a non-negative diagonal.
///
/// Returns `Err(RankDeficient)` if some `|R_ii|` falls below `1e-12 · ‖A‖_F`.
pub fn qr_positive(a: &Mat) -> Result<Mat> {
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let qr = a.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..r.nrows().min(r.ncols()) {
        let rjj = r[(j, j)];
        if !rjj.is_finite() || rjj.abs() <= 1e-12 * scale {
            return Err(Error::RankDeficient);
        }
        if rjj < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

/// Symmetric eigendecomposition `(values, vectors)` of a symmetric matrix.
pub fn sym_eigen(a: &Mat) -> SymmetricEigen<f64, Dyn> {
    SymmetricEigen::new(sym(a))
}

pub fn min_eigenvalue(a: &Mat) -> f64 {
    sym_eigen(a).eigenvalues.min()
}

/// Unique SPD square root via eigendecomposition; eigenvalues below
/// [`EIGEN_FLOOR`] are clamped (with a warning).
pub fn spd_sqrt(a: &Mat) -> Mat {
    let eig = sym_eigen(a);
    let mut clamped = false;
    let roots = eig.eigenvalues.map(|l| {
        if l < EIGEN_FLOOR {
            clamped = true;
            EIGEN_FLOOR.sqrt()
        } else {
            l.sqrt()
        }
    });
    if clamped {
        log::warn!("clamped eigenvalues below {EIGEN_FLOOR:e} while taking matrix square root");
    }
    let v = &eig.eigenvectors;
    let scaled = v * Mat::from_diagonal(&roots);
    sym(&(scaled * v.transpose()))
}

pub fn cholesky(a: &Mat) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(a.clone()).ok_or(Error::NotPositiveDefinite)
}

/// `‖AᵀA − I‖_F`.
pub fn orthogonality_error(a: &Mat) -> f64 {
    let n = a.ncols();
    (a.transpose() * a - Mat::identity(n, n)).norm()
}

pub fn is_finite(a: &Mat) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Normalize columns to unit L2 norm in place; returns the indices of
/// columns whose norm was zero (left untouched).
pub fn normalize_columns(a: &mut Mat) -> Vec<usize> {
    let mut zero = Vec::new();
    for (j, mut col) in a.column_iter_mut().enumerate() {
        let n = col.norm();
        if n > 0.0 && n.is_finite() {
            col /= n;
        } else {
            zero.push(j);
        }
    }
    zero
}
