//! Orthogonal group, SPD cone and their product.
//!
//! The orthogonal factor uses the embedded (Frobenius) metric with the QR
//! retraction. The SPD factor uses the affine-invariant metric
//! `⟨ξ, η⟩_B = tr(B⁻¹ ξ B⁻¹ η)` with the second-order retraction
//! `B + sξ + ½ s² ξ B⁻¹ ξ`, which stays positive definite for every step.
//! Vector transport is by re-projection onto the destination tangent space.
//!
//! A [`ProductPoint`] may additionally carry unconstrained Euclidean
//! factors; these are used by the unconstrained-map ablation.

use crate::error::{Error, Result};
use crate::linalg::{self, ensure_square, frob, sym, Mat};

/// Tolerance for accepting a matrix as orthogonal, relative to `sqrt(d)`.
pub const ORTH_TOL: f64 = 1e-10;

/// Condition number above which SPD retraction logs a warning.
pub const SPD_COND_WARN: f64 = 1e12;

/// A point on `O(d)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OrthPoint(Mat);

impl OrthPoint {
    pub fn new(u: Mat) -> Result<Self> {
        if u.nrows() != u.ncols() {
            return Err(Error::dims("square matrix", format!("{}x{}", u.nrows(), u.ncols())));
        }
        if !linalg::is_finite(&u) {
            return Err(Error::NonFinite("orthogonal factor"));
        }
        let err = linalg::orthogonality_error(&u);
        let tol = ORTH_TOL * (u.nrows() as f64).sqrt().max(1.0);
        if err > tol {
            return Err(Error::InvalidConfig(format!(
                "matrix is not orthogonal (‖UᵀU − I‖_F = {err:e})"
            )));
        }
        Ok(OrthPoint(u))
    }

    /// Wrap `u` without checking orthogonality. Costs may be evaluated at
    /// such points (finite differences); the solver never produces them.
    pub fn new_unchecked(u: Mat) -> Self {
        OrthPoint(u)
    }

    pub fn identity(d: usize) -> Self {
        OrthPoint(Mat::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_matrix(self) -> Mat {
        self.0
    }

    pub fn orthogonality_error(&self) -> f64 {
        linalg::orthogonality_error(&self.0)
    }
}

/// A symmetric positive-definite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdPoint(Mat);

impl SpdPoint {
    /// Symmetrizes `b` and checks positive definiteness via Cholesky.
    pub fn new(b: Mat) -> Result<Self> {
        if b.nrows() != b.ncols() {
            return Err(Error::dims("square matrix", format!("{}x{}", b.nrows(), b.ncols())));
        }
        if !linalg::is_finite(&b) {
            return Err(Error::NonFinite("SPD factor"));
        }
        let b = sym(&b);
        linalg::cholesky(&b)?;
        Ok(SpdPoint(b))
    }

    pub fn identity(d: usize) -> Self {
        SpdPoint(Mat::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_matrix(self) -> Mat {
        self.0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.0)
    }

    fn solve(&self, rhs: &Mat) -> Result<Mat> {
        Ok(linalg::cholesky(&self.0)?.solve(rhs))
    }
}

/// Point on `O(d)^k × SPD(d) × (ℝ^{d×d})^m`. Any of the three lists may be
/// empty (the SPD factor is optional).
#[derive(Clone, Debug, PartialEq)]
pub struct ProductPoint {
    pub orth: Vec<OrthPoint>,
    pub spd: Option<SpdPoint>,
    pub free: Vec<Mat>,
}

/// Per-factor matrices; used both for tangent vectors and for Euclidean
/// gradients (which share the same layout).
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub orth: Vec<Mat>,
    pub spd: Option<Mat>,
    pub free: Vec<Mat>,
}

impl ProductPoint {
    pub fn new(orth: Vec<OrthPoint>, spd: Option<SpdPoint>, free: Vec<Mat>) -> Result<Self> {
        let p = ProductPoint { orth, spd, free };
        let d = p.dim();
        for u in &p.orth {
            ensure_square(u.matrix(), d)?;
        }
        if let Some(b) = &p.spd {
            ensure_square(b.matrix(), d)?;
        }
        for w in &p.free {
            ensure_square(w, d)?;
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.orth
            .first()
            .map(OrthPoint::dim)
            .or_else(|| self.spd.as_ref().map(SpdPoint::dim))
            .or_else(|| self.free.first().map(|w| w.nrows()))
            .unwrap_or(0)
    }

    pub fn zero_tangent(&self) -> TangentVector {
        let d = self.dim();
        TangentVector {
            orth: vec![Mat::zeros(d, d); self.orth.len()],
            spd: self.spd.as_ref().map(|_| Mat::zeros(d, d)),
            free: vec![Mat::zeros(d, d); self.free.len()],
        }
    }

    /// Largest orthogonality error over orthogonal factors.
    pub fn max_orthogonality_error(&self) -> f64 {
        self.orth
            .iter()
            .map(OrthPoint::orthogonality_error)
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.orth.iter().all(|u| linalg::is_finite(u.matrix()))
            && self.spd.iter().all(|b| linalg::is_finite(b.matrix()))
            && self.free.iter().all(linalg::is_finite)
    }
}

impl TangentVector {
    pub fn scale(&self, a: f64) -> TangentVector {
        self.map(|m| m * a)
    }

    pub fn map(&self, f: impl Fn(&Mat) -> Mat) -> TangentVector {
        TangentVector {
            orth: self.orth.iter().map(&f).collect(),
            spd: self.spd.as_ref().map(&f),
            free: self.free.iter().map(&f).collect(),
        }
    }

    /// `a·self + b·other`.
    pub fn lincomb(&self, a: f64, other: &TangentVector, b: f64) -> TangentVector {
        TangentVector {
            orth: self
                .orth
                .iter()
                .zip(&other.orth)
                .map(|(x, y)| x * a + y * b)
                .collect(),
            spd: match (&self.spd, &other.spd) {
                (Some(x), Some(y)) => Some(x * a + y * b),
                _ => None,
            },
            free: self
                .free
                .iter()
                .zip(&other.free)
                .map(|(x, y)| x * a + y * b)
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.orth.iter().all(linalg::is_finite)
            && self.spd.iter().all(linalg::is_finite)
            && self.free.iter().all(linalg::is_finite)
    }

    fn check_layout(&self, x: &ProductPoint) -> Result<()> {
        if self.orth.len() != x.orth.len()
            || self.spd.is_some() != x.spd.is_some()
            || self.free.len() != x.free.len()
        {
            return Err(Error::dims(
                format!(
                    "{} orthogonal / {} SPD / {} free factors",
                    x.orth.len(),
                    x.spd.is_some() as usize,
                    x.free.len()
                ),
                format!(
                    "{} / {} / {}",
                    self.orth.len(),
                    self.spd.is_some() as usize,
                    self.free.len()
                ),
            ));
        }
        Ok(())
    }
}

/// `G − U·sym(UᵀG)`.
pub fn orth_project(u: &OrthPoint, g: &Mat) -> Result<Mat> {
    ensure_square(g, u.dim())?;
    let u = u.matrix();
    Ok(g - u * sym(&(u.transpose() * g)))
}

/// Q factor of `qr(U + step·ξ)` with positive `R` diagonal.
pub fn orth_retract(u: &OrthPoint, xi: &Mat, step: f64) -> Result<OrthPoint> {
    ensure_square(xi, u.dim())?;
    let y = u.matrix() + xi * step;
    Ok(OrthPoint(linalg::qr_positive(&y)?))
}

/// Riemannian gradient under the affine-invariant metric: `B·sym(G)·B`.
pub fn spd_egrad_to_rgrad(b: &SpdPoint, g: &Mat) -> Result<Mat> {
    ensure_square(g, b.dim())?;
    let b = b.matrix();
    Ok(sym(&(b * sym(g) * b)))
}

/// `tr(B⁻¹ ξ B⁻¹ η)`.
pub fn spd_inner(b: &SpdPoint, xi: &Mat, eta: &Mat) -> Result<f64> {
    ensure_square(xi, b.dim())?;
    ensure_square(eta, b.dim())?;
    let chol = linalg::cholesky(b.matrix())?;
    let bx = chol.solve(xi);
    let be = chol.solve(eta);
    // tr(P Q) = Σ_ij P_ij Q_ji
    Ok(frob(&bx, &be.transpose()))
}

/// `B + sξ + ½ s² ξ B⁻¹ ξ`, symmetrized.
pub fn spd_retract(b: &SpdPoint, xi: &Mat, step: f64) -> Result<SpdPoint> {
    ensure_square(xi, b.dim())?;
    let xi = sym(xi);
    let binv_xi = b.solve(&xi)?;
    let y = b.matrix() + &xi * step + (&xi * binv_xi) * (0.5 * step * step);
    let y = sym(&y);
    if !linalg::is_finite(&y) {
        return Err(Error::NonFinite("SPD retraction"));
    }
    let chol = linalg::cholesky(&y)?;
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..l.nrows() {
        lo = lo.min(l[(i, i)].abs());
        hi = hi.max(l[(i, i)].abs());
    }
    // (max L_ii / min L_ii)² is a lower bound on the condition number.
    let cond_lb = (hi / lo).powi(2);
    if cond_lb > SPD_COND_WARN {
        log::warn!("SPD iterate is ill-conditioned (condition number >= {cond_lb:e})");
    }
    Ok(SpdPoint(y))
}

/// Riemannian gradient of every factor from the per-factor Euclidean gradient.
pub fn egrad_to_rgrad(x: &ProductPoint, egrad: &TangentVector) -> Result<TangentVector> {
    egrad.check_layout(x)?;
    let orth = x
        .orth
        .iter()
        .zip(&egrad.orth)
        .map(|(u, g)| orth_project(u, g))
        .collect::<Result<Vec<_>>>()?;
    let spd = match (&x.spd, &egrad.spd) {
        (Some(b), Some(g)) => Some(spd_egrad_to_rgrad(b, g)?),
        _ => None,
    };
    Ok(TangentVector {
        orth,
        spd,
        free: egrad.free.clone(),
    })
}

pub fn retract(x: &ProductPoint, xi: &TangentVector, step: f64) -> Result<ProductPoint> {
    xi.check_layout(x)?;
    let orth = x
        .orth
        .iter()
        .zip(&xi.orth)
        .map(|(u, v)| orth_retract(u, v, step))
        .collect::<Result<Vec<_>>>()?;
    let spd = match (&x.spd, &xi.spd) {
        (Some(b), Some(v)) => Some(spd_retract(b, v, step)?),
        _ => None,
    };
    let free = x.free.iter().zip(&xi.free).map(|(w, v)| w + v * step).collect();
    Ok(ProductPoint { orth, spd, free })
}

/// Projection transport: re-project each factor onto the tangent space at `to`.
pub fn transport(
    _from: &ProductPoint,
    to: &ProductPoint,
    xi: &TangentVector,
) -> Result<TangentVector> {
    xi.check_layout(to)?;
    let orth = to
        .orth
        .iter()
        .zip(&xi.orth)
        .map(|(u, v)| orth_project(u, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(TangentVector {
        orth,
        spd: xi.spd.as_ref().map(sym),
        free: xi.free.clone(),
    })
}

pub fn product_inner(x: &ProductPoint, xi: &TangentVector, eta: &TangentVector) -> Result<f64> {
    xi.check_layout(x)?;
    eta.check_layout(x)?;
    let mut acc = 0.0;
    for (a, b) in xi.orth.iter().zip(&eta.orth) {
        acc += frob(a, b);
    }
    if let (Some(b), Some(p), Some(q)) = (&x.spd, &xi.spd, &eta.spd) {
        acc += spd_inner(b, p, q)?;
    }
    for (a, b) in xi.free.iter().zip(&eta.free) {
        acc += frob(a, b);
    }
    Ok(acc)
}

pub fn product_norm(x: &ProductPoint, xi: &TangentVector) -> Result<f64> {
    Ok(product_inner(x, xi, xi)?.max(0.0).sqrt())
}
