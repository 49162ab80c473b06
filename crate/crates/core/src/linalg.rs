//! Small complex-matrix helpers shared by the design and theory modules.
//!
//! Everything here operates on `nalgebra::DMatrix<Complex64>`. The matrices
//! involved are per-subcarrier channel/precoder blocks (at most a few rows
//! and columns), so clarity wins over blocking or allocation tricks.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::{FbmcError, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;
pub type RMat = DMatrix<f64>;

/// Relative singular-value cutoff: anything below `SVD_REL_TOL * sigma_max`
/// counts as numerically zero.
pub const SVD_REL_TOL: f64 = 1e-10;

/// Condition-number limit beyond which regularized inverses fall back to a
/// ridge-stabilized solve.
pub const RIDGE_COND_LIMIT: f64 = 1e12;

/// Scale of the stabilizing ridge, relative to the mean diagonal magnitude.
pub const RIDGE_SCALE: f64 = 1e-12;

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn herm(a: &CMat) -> CMat {
    a.adjoint()
}

pub fn re_mat(a: &CMat) -> RMat {
    a.map(|z| z.re)
}

pub fn im_mat(a: &CMat) -> RMat {
    a.map(|z| z.im)
}

/// tr[A B^H] as a complex scalar.
pub fn fro_inner(a: &CMat, b: &CMat) -> Complex64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

/// tr[A A^H] = squared Frobenius norm.
pub fn fro_norm_sq(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// tr[Im(X) Im^T(Y)] evaluated entrywise on real parts of the traces.
pub fn tr_im_im(x: &CMat, y: &CMat) -> f64 {
    debug_assert_eq!(x.shape(), y.shape());
    x.iter().zip(y.iter()).map(|(a, b)| a.im * b.im).sum()
}

/// tr[Re(X) Re^T(Y)].
pub fn tr_re_re(x: &CMat, y: &CMat) -> f64 {
    debug_assert_eq!(x.shape(), y.shape());
    x.iter().zip(y.iter()).map(|(a, b)| a.re * b.re).sum()
}

fn svd_parts(a: &CMat) -> (CMat, DVector<f64>, CMat) {
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("SVD requested with u");
    let v_t = svd.v_t.expect("SVD requested with v_t");
    (u, svd.singular_values, v_t)
}

/// Largest/smallest singular value ratio; `inf` for a singular matrix.
pub fn cond(a: &CMat) -> f64 {
    let (_, s, _) = svd_parts(a);
    let max = s.iter().cloned().fold(0.0f64, f64::max);
    let min = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Moore-Penrose pseudo-inverse via SVD. Singular values at or below
/// `SVD_REL_TOL * sigma_max` raise `RankDeficient`; use [`pinv_clip`] where
/// a rank-deficient input is legitimate.
pub fn pinv_strict(a: &CMat, context: &'static str) -> Result<CMat> {
    let (u, s, v_t) = svd_parts(a);
    let smax = s.iter().cloned().fold(0.0f64, f64::max);
    if smax == 0.0 {
        return Err(FbmcError::RankDeficient { context, ratio: 0.0 });
    }
    let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin <= SVD_REL_TOL * smax {
        return Err(FbmcError::RankDeficient {
            context,
            ratio: smin / smax,
        });
    }
    Ok(pinv_from_parts(&u, &s, &v_t, SVD_REL_TOL * smax))
}

/// Pseudo-inverse that zeroes numerically negligible singular values instead
/// of failing. This is the vanishing-regularizer limit used by the optimized
/// ZF designs at N_0 = 0.
pub fn pinv_clip(a: &CMat) -> CMat {
    let (u, s, v_t) = svd_parts(a);
    let smax = s.iter().cloned().fold(0.0f64, f64::max);
    if smax == 0.0 {
        return CMat::zeros(a.ncols(), a.nrows());
    }
    pinv_from_parts(&u, &s, &v_t, SVD_REL_TOL * smax)
}

fn pinv_from_parts(u: &CMat, s: &DVector<f64>, v_t: &CMat, cut: f64) -> CMat {
    let r = s.len();
    let mut sinv = CMat::zeros(r, r);
    for i in 0..r {
        if s[i] > cut {
            sinv[(i, i)] = Complex64::new(1.0 / s[i], 0.0);
        }
    }
    v_t.adjoint() * sinv * u.adjoint()
}

/// Inverse of a square regularized matrix. If the condition number exceeds
/// `RIDGE_COND_LIMIT`, a ridge `RIDGE_SCALE * tr(A)/n * I` is added first and
/// a warning is logged.
pub fn inverse_or_ridge(a: &CMat, context: &'static str) -> Result<CMat> {
    debug_assert_eq!(a.nrows(), a.ncols());
    let n = a.nrows();
    let c = cond(a);
    let work = if c > RIDGE_COND_LIMIT {
        let tr: Complex64 = (0..n).map(|i| a[(i, i)]).sum();
        let ridge = RIDGE_SCALE * tr.norm() / n as f64;
        log::warn!(
            "condition number {c:.3e} in {context}; adding ridge {ridge:.3e} before inverting"
        );
        a + identity(n).scale(ridge)
    } else {
        a.clone()
    };
    work.try_inverse()
        .ok_or(FbmcError::SingularMatrix { context })
}

/// Solve min ||B A - I|| for tall full-column-rank `A` via QR, i.e. the left
/// pseudo-inverse computed on an SVD-free route. Used by oracle tests.
pub fn left_pinv_qr(a: &CMat) -> Result<CMat> {
    let qr = a.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let rinv = r
        .try_inverse()
        .ok_or(FbmcError::SingularMatrix { context: "left_pinv_qr" })?;
    Ok(rinv * q.adjoint())
}

// ---------------------------------------------------------------------------
