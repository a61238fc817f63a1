//! Dense linear-algebra kernel.
//!
//! Everything here is deterministic and allocation-light; matrices are
//! `nalgebra` dynamic matrices. Factorizations that need pivoting or
//! orthogonal reductions (QR, SVD) go through `nalgebra`; the symmetric
//! eigenvalue routine is a cyclic Jacobi sweep kept local so it can serve as
//! an independent check on the SVD path.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative threshold on the diagonal of `R` below which a factor is
/// treated as rank deficient (scaled by the larger dimension at use site).
pub const RANK_TOL: f64 = 256.0 * f64::EPSILON;

/// Entry-wise symmetry tolerance for [`sym_eigenvalues`], relative to the
/// largest entry magnitude.
pub const SYMMETRY_TOL: f64 = 1e-12;

const SVD_MAX_ITERS: usize = 0;
const JACOBI_MAX_SWEEPS: usize = 100;

pub(crate) fn ensure_finite_mat(a: &Mat) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

pub(crate) fn ensure_finite_vec(v: &Vector) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn rank_threshold(rows: usize, cols: usize, tol: f64) -> f64 {
    tol * rows.max(cols) as f64
}

/// Orthonormal basis for the range of `a` via Householder QR.
///
/// The returned `Q` is normalized so that the triangular factor has a
/// nonnegative diagonal, which makes the output unique for full-rank input.
pub fn orthonormalize(a: &Mat) -> Result<Mat> {
    orthonormalize_with_tol(a, RANK_TOL)
}

pub fn orthonormalize_with_tol(a: &Mat, tol: f64) -> Result<Mat> {
    let (n, d) = a.shape();
    if d == 0 || n < d {
        return Err(Error::Shape(format!(
            "orthonormalize needs n >= d >= 1, got {n}x{d}"
        )));
    }
    ensure_finite_mat(a)?;
    let qr = a.clone().qr();
    let r = qr.r();
    let diag_max = (0..d).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let threshold = rank_threshold(n, d, tol) * diag_max;
    if diag_max == 0.0 || (0..d).any(|i| r[(i, i)].abs() <= threshold) {
        return Err(Error::RankDeficient);
    }
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

/// Least-squares solution of `c w ≈ b` through a QR factorization of `c`.
pub fn least_squares(c: &Mat, b: &Vector) -> Result<Vector> {
    least_squares_with_tol(c, b, RANK_TOL)
}

pub fn least_squares_with_tol(c: &Mat, b: &Vector, tol: f64) -> Result<Vector> {
    let (m, d) = c.shape();
    if m == 0 || d == 0 || b.len() != m {
        return Err(Error::Shape(format!(
            "least_squares needs c: m x d with m, d >= 1 and b of length m, got {m}x{d} and {}",
            b.len()
        )));
    }
    if m < d {
        return Err(Error::SingularNormalEquations);
    }
    ensure_finite_mat(c)?;
    ensure_finite_vec(b)?;
    let qr = c.clone().qr();
    let r = qr.r();
    let diag_max = (0..d).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    let threshold = rank_threshold(m, d, tol) * diag_max;
    if diag_max == 0.0 || (0..d).any(|i| r[(i, i)].abs() <= threshold) {
        return Err(Error::SingularNormalEquations);
    }
    let qtb = qr.q().tr_mul(b);
    r.solve_upper_triangular(&qtb)
        .ok_or(Error::SingularNormalEquations)
}

/// Singular values in descending order.
pub fn singular_values(a: &Mat) -> Result<Vector> {
    let (m, k) = a.shape();
    if m == 0 || k == 0 {
        return Err(Error::Shape(format!("singular_values of a {m}x{k} matrix")));
    }
    ensure_finite_mat(a)?;
    let svd = a
        .clone()
        .try_svd(false, false, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or(Error::NoConvergence("svd"))?;
    let mut values: Vec<f64> = svd.singular_values.iter().map(|s| s.abs()).collect();
    values.sort_by(|x, y| y.total_cmp(x));
    Ok(Vector::from_vec(values))
}

/// Orthogonal polar factor of a square nonsingular matrix: the orthogonal
/// `V` minimizing `‖a − V‖_F`, computed as `U Vᵀ` from a thin SVD.
pub fn nearest_orthogonal(a: &Mat) -> Result<Mat> {
    nearest_orthogonal_with_tol(a, RANK_TOL)
}

pub fn nearest_orthogonal_with_tol(a: &Mat, tol: f64) -> Result<Mat> {
    let (m, k) = a.shape();
    if m != k || m == 0 {
        return Err(Error::Shape(format!(
            "nearest_orthogonal needs a nonempty square matrix, got {m}x{k}"
        )));
    }
    ensure_finite_mat(a)?;
    let svd = a
        .clone()
        .try_svd(true, true, f64::EPSILON, SVD_MAX_ITERS)
        .ok_or(Error::NoConvergence("svd"))?;
    let s = &svd.singular_values;
    let s_max = s.max();
    let s_min = s.min();
    if s_max == 0.0 || s_min <= rank_threshold(m, m, tol) * s_max {
        return Err(Error::SingularAlignment);
    }
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::NoConvergence("svd")),
    };
    Ok(u * v_t)
}

/// Eigenvalues of a symmetric matrix in descending order (cyclic Jacobi).
pub fn sym_eigenvalues(g: &Mat) -> Result<Vector> {
    sym_eigenvalues_with_tol(g, SYMMETRY_TOL)
}

pub fn sym_eigenvalues_with_tol(g: &Mat, symmetry_tol: f64) -> Result<Vector> {
    let (m, k) = g.shape();
    if m != k || m == 0 {
        return Err(Error::Shape(format!(
            "sym_eigenvalues needs a nonempty square matrix, got {m}x{k}"
        )));
    }
    ensure_finite_mat(g)?;
    let scale = g.amax().max(1.0);
    for i in 0..m {
        for j in (i + 1)..m {
            if (g[(i, j)] - g[(j, i)]).abs() > symmetry_tol * scale {
                return Err(Error::NotSymmetric);
            }
        }
    }
    // Work on the symmetrized copy so tiny asymmetries cannot leak in.
    let mut a = (g + g.transpose()) * 0.5;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..m)
            .flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let diag: f64 = (0..m).map(|i| a[(i, i)] * a[(i, i)]).sum();
        if off <= f64::EPSILON * f64::EPSILON * diag || off == 0.0 {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for r in 0..m {
                    let arp = a[(r, p)];
                    let arq = a[(r, q)];
                    a[(r, p)] = c * arp - s * arq;
                    a[(r, q)] = s * arp + c * arq;
                }
                for r in 0..m {
                    let apr = a[(p, r)];
                    let aqr = a[(q, r)];
                    a[(p, r)] = c * apr - s * aqr;
                    a[(q, r)] = s * apr + c * aqr;
                }
            }
        }
    }
    let mut values: Vec<f64> = (0..m).map(|i| a[(i, i)]).collect();
    values.sort_by(|x, y| y.total_cmp(x));
    Ok(Vector::from_vec(values))
}

/// `‖aᵀa − I‖_F`, the departure of `a` from having orthonormal columns.
pub fn orthonormality_defect(a: &Mat) -> f64 {
    let mut g = a.transpose() * a;
    for i in 0..g.nrows() {
        g[(i, i)] -= 1.0;
    }
    g.norm()
}

/// Orthonormal basis of the orthogonal complement of a nonzero `w` in `R^d`,
/// returned as a `d × (d − 1)` matrix.
pub fn orthogonal_complement(w: &Vector) -> Result<Mat> {
    let d = w.len();
    let norm = w.norm();
    if d == 0 || norm == 0.0 {
        return Err(Error::NoRevealedDirection);
    }
    // Householder reflector mapping e_k to ±w/‖w‖; its other columns span w⊥.
    let k = w.iamax();
    let mut h = w / norm;
    let sign = if h[k] >= 0.0 { 1.0 } else { -1.0 };
    h[k] += sign;
    let hn2 = h.norm_squared();
    let mut reflector = Mat::identity(d, d);
    reflector -= (&h * h.transpose()) * (2.0 / hn2);
    let cols: Vec<usize> = (0..d).filter(|&j| j != k).collect();
    Ok(reflector.select_columns(cols.iter()))
}
