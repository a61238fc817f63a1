//! Distances and regularity measures between subspaces.
//!
//! The subspace error `ε = Σ sin²φ_i` is evaluated as `‖U − ŪŪᵀU‖²_F`, the
//! squared norm of the part of `U` lying outside `R(Ū)`. For orthonormal
//! bases this equals `d − ‖ŪᵀU‖²_F` exactly, but it keeps full relative
//! precision when the subspaces nearly coincide (the Gram form loses
//! everything below about `1e-15`). [`epsilon_from_gram`] is kept as a cross
//! check.

use rand::Rng;
use serde::Serialize;

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::partial::EXACT_FIT_TOL;
use crate::sampling;

/// Principal angles between `R(u)` and `R(ubar)`, ascending, in radians.
pub fn principal_angles(u: &Basis, ubar: &Basis) -> Result<Vector> {
    u.same_shape(ubar)?;
    let cross = ubar.matrix().transpose() * u.matrix();
    let sigma = linalg::singular_values(&cross)?;
    Ok(sigma.map(|s| s.clamp(0.0, 1.0).acos()))
}

/// Subspace error `ε = d − ‖ŪᵀU‖²_F`, computed in residual form.
pub fn epsilon(u: &Basis, ubar: &Basis) -> Result<f64> {
    u.same_shape(ubar)?;
    Ok(residual_norm_sq(&outside_component(u.matrix(), ubar)).clamp(0.0, u.d() as f64))
}

/// `d − ‖ŪᵀU‖²_F` evaluated literally.
pub fn epsilon_from_gram(u: &Basis, ubar: &Basis) -> Result<f64> {
    u.same_shape(ubar)?;
    let cross = ubar.matrix().transpose() * u.matrix();
    Ok((u.d() as f64 - cross.norm_squared()).clamp(0.0, u.d() as f64))
}

/// `(I − ŪŪᵀ) a`.
pub(crate) fn outside_component(a: &Mat, ubar: &Basis) -> Mat {
    let ub = ubar.matrix();
    a - ub * (ub.transpose() * a)
}

pub(crate) fn outside_component_vec(x: &Vector, ubar: &Basis) -> Vector {
    let ub = ubar.matrix();
    x - ub * ub.tr_mul(x)
}

fn residual_norm_sq(r: &Mat) -> f64 {
    r.norm_squared()
}

/// Coherence `μ(U) = (n/d) max_i ‖U_{i·}‖²`.
pub fn coherence_basis(u: &Basis) -> f64 {
    let m = u.matrix();
    let max_row = m
        .row_iter()
        .map(|row| row.norm_squared())
        .fold(0.0, f64::max);
    u.n() as f64 / u.d() as f64 * max_row
}

/// Coherence of a vector, `μ(x) = n ‖x‖²_∞ / ‖x‖²`.
pub fn coherence_vector(x: &Vector) -> Result<f64> {
    let norm_sq = x.norm_squared();
    if x.is_empty() || norm_sq == 0.0 {
        return Err(Error::UndefinedCoherence);
    }
    let inf = x.amax();
    Ok(x.len() as f64 * inf * inf / norm_sq)
}

/// `sin²θ` for the angle between `v` and `R(u)`: `‖v − UUᵀv‖² / ‖v‖²`.
pub fn revealed_angle_sin_sq(u: &Basis, v: &Vector) -> Result<f64> {
    if v.len() != u.n() {
        return Err(Error::Shape(format!(
            "vector of length {} against basis with n = {}",
            v.len(),
            u.n()
        )));
    }
    let norm_sq = v.norm_squared();
    if norm_sq == 0.0 {
        return Err(Error::ZeroVector);
    }
    let m = u.matrix();
    let resid = v - m * m.tr_mul(v);
    let ratio = resid.norm_squared() / norm_sq;
    if ratio <= EXACT_FIT_TOL * EXACT_FIT_TOL {
        return Ok(0.0);
    }
    Ok(ratio.min(1.0))
}

/// Orthogonal `V` closest to `ŪᵀU`; `ŪV` is then the frame of `R(Ū)` best
/// matched to the columns of `U`.
pub fn alignment(u: &Basis, ubar: &Basis) -> Result<Mat> {
    u.same_shape(ubar)?;
    let cross = ubar.matrix().transpose() * u.matrix();
    linalg::nearest_orthogonal(&cross).map_err(|e| match e {
        Error::SingularAlignment => Error::NoAlignedFrame,
        other => other,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SubspaceDiagnostics {
    pub principal_angles: Vec<f64>,
    pub epsilon: f64,
    pub cos_sq_theta: Option<f64>,
    pub coherence_current: f64,
    pub coherence_target: f64,
}

pub fn diagnostics(u: &Basis, ubar: &Basis, v: Option<&Vector>) -> Result<SubspaceDiagnostics> {
    let angles = principal_angles(u, ubar)?;
    let cos_sq_theta = v
        .map(|v| revealed_angle_sin_sq(u, v).map(|s| 1.0 - s))
        .transpose()?;
    Ok(SubspaceDiagnostics {
        principal_angles: angles.iter().copied().collect(),
        epsilon: epsilon(u, ubar)?,
        cos_sq_theta,
        coherence_current: coherence_basis(u),
        coherence_target: coherence_basis(ubar),
    })
}

/// A basis whose principal angles to `ubar` are exactly `angles`
/// (`angles.len() ≤ min(d, n − d)`; missing angles are zero), presented in a
/// random frame.
pub fn basis_at_angles<R: Rng + ?Sized>(ubar: &Basis, angles: &[f64], rng: &mut R) -> Result<Basis> {
    let (n, d) = (ubar.n(), ubar.d());
    let k = angles.len();
    if k > d || k > n - d {
        return Err(Error::InvalidParameter(format!(
            "{k} rotated directions do not fit n = {n}, d = {d}"
        )));
    }
    // Directions orthogonal to R(ubar) for the rotated columns.
    let extra = outside_component(&sampling::gaussian_matrix(rng, n, k.max(1), 1.0), ubar);
    let outside = linalg::orthonormalize(&extra)?;
    let ub = ubar.matrix();
    let mut cols = ub.clone();
    for (j, &phi) in angles.iter().enumerate() {
        let rotated = ub.column(j) * phi.cos() + outside.column(j) * phi.sin();
        cols.set_column(j, &rotated);
    }
    let frame = sampling::random_orthogonal(rng, d)?;
    Basis::new(cols * frame)
}

/// A basis at subspace error `eps` from `ubar`, spreading the error evenly
/// over `min(d, n − d)` principal angles.
pub fn basis_at_epsilon<R: Rng + ?Sized>(ubar: &Basis, eps: f64, rng: &mut R) -> Result<Basis> {
    let k = ubar.d().min(ubar.n() - ubar.d());
    if !(0.0..=k as f64).contains(&eps) {
        return Err(Error::InvalidParameter(format!(
            "epsilon {eps} outside [0, {k}]"
        )));
    }
    let phi = (eps / k as f64).sqrt().asin();
    basis_at_angles(ubar, &vec![phi; k], rng)
}

/// Incrementally maintained `ε(U, Ū)` for a basis evolving by rank-one
/// updates `U ← U + y kᵀ`.
///
/// Holds `R = (I − ŪŪᵀ)U`, so each update costs `O(nd)` instead of the
/// `O(nd²)` of a fresh evaluation.
#[derive(Clone, Debug)]
pub struct EpsilonTracker {
    outside: Mat,
}

impl EpsilonTracker {
    pub fn new(u: &Basis, ubar: &Basis) -> Result<Self> {
        u.same_shape(ubar)?;
        Ok(EpsilonTracker {
            outside: outside_component(u.matrix(), ubar),
        })
    }

    /// Recomputes the residual from scratch (after re-orthonormalization).
    pub fn refresh(&mut self, u: &Basis, ubar: &Basis) {
        self.outside = outside_component(u.matrix(), ubar);
    }

    pub fn rank_one(&mut self, ubar: &Basis, y: &Vector, k: &Vector) {
        let y_out = outside_component_vec(y, ubar);
        self.outside.ger(1.0, &y_out, k, 1.0);
    }

    pub fn epsilon(&self) -> f64 {
        residual_norm_sq(&self.outside).clamp(0.0, self.outside.ncols() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_basis, rng_from_seed};
    use nalgebra::dmatrix;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn identical_subspaces() {
        let mut rng = rng_from_seed(1);
        let u = random_basis(&mut rng, 8, 3).unwrap();
        assert!(principal_angles(&u, &u).unwrap().amax() < 1e-7);
        assert!(epsilon(&u, &u).unwrap() < 1e-28);
    }

    #[test]
    fn orthogonal_lines() {
        let u = Basis::new(dmatrix![1.0; 0.0]).unwrap();
        let ubar = Basis::new(dmatrix![0.0; 1.0]).unwrap();
        let a = principal_angles(&u, &ubar).unwrap();
        assert!((a[0] - FRAC_PI_2).abs() < 1e-15);
        assert!((epsilon(&u, &ubar).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fully_orthogonal_planes() {
        let ubar = Basis::coordinate(6, 2).unwrap();
        let mut m = Mat::zeros(6, 2);
        m[(2, 0)] = 1.0;
        m[(5, 1)] = 1.0;
        let u = Basis::new(m).unwrap();
        assert_eq!(epsilon(&u, &ubar).unwrap(), 2.0);
    }

    #[test]
    fn rotated_plane_in_r4() {
        let a = 0.4_f64;
        let ubar = Basis::coordinate(4, 2).unwrap();
        let u = Basis::new(dmatrix![a.cos(), 0.0; 0.0, 1.0; a.sin(), 0.0; 0.0, 0.0]).unwrap();
        let angles = principal_angles(&u, &ubar).unwrap();
        assert!(angles[0].abs() < 1e-7);
        assert!((angles[1] - a).abs() < 1e-12);
        let eps = epsilon(&u, &ubar).unwrap();
        assert!((eps - a.sin().powi(2)).abs() < 1e-15);
        let via_angles: f64 = angles.iter().map(|p| p.sin().powi(2)).sum();
        assert!((eps - via_angles).abs() < 1e-10);
    }

    #[test]
    fn residual_and_gram_forms_agree() {
        let mut rng = rng_from_seed(2);
        let ubar = random_basis(&mut rng, 30, 4).unwrap();
        let u = random_basis(&mut rng, 30, 4).unwrap();
        let a = epsilon(&u, &ubar).unwrap();
        let b = epsilon_from_gram(&u, &ubar).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn coherence_extremes() {
        let spike = Basis::coordinate(10, 2).unwrap();
        assert!((coherence_basis(&spike) - 5.0).abs() < 1e-12);
        let flat = Basis::new(dmatrix![1.0, 1.0; 1.0, -1.0; 1.0, 1.0; 1.0, -1.0] * 0.5).unwrap();
        assert!((coherence_basis(&flat) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coherence_basis_matches_row_scan() {
        let mut rng = rng_from_seed(5);
        let u = random_basis(&mut rng, 100, 5).unwrap();
        let m = u.matrix();
        let mut best = 0.0_f64;
        for i in 0..100 {
            let mut s = 0.0;
            for j in 0..5 {
                s += m[(i, j)] * m[(i, j)];
            }
            best = best.max(s * 100.0 / 5.0);
        }
        assert!((coherence_basis(&u) - best).abs() < 1e-12);
        assert!((1.0..=20.0).contains(&best));
    }

    #[test]
    fn coherence_vector_examples() {
        let mut e1 = Vector::zeros(7);
        e1[0] = 1.0;
        assert_eq!(coherence_vector(&e1).unwrap(), 7.0);
        assert!((coherence_vector(&Vector::from_element(9, 1.0)).unwrap() - 1.0).abs() < 1e-15);
        let x = Vector::from_vec(vec![3.0, 4.0, 0.0, 0.0]);
        assert!((coherence_vector(&x).unwrap() - 2.56).abs() < 1e-15);
        assert!(matches!(
            coherence_vector(&Vector::zeros(3)),
            Err(Error::UndefinedCoherence)
        ));
    }

    #[test]
    fn revealed_angle_examples() {
        let u = Basis::new(dmatrix![1.0; 0.0]).unwrap();
        assert_eq!(
            revealed_angle_sin_sq(&u, &Vector::from_vec(vec![2.0, 0.0])).unwrap(),
            0.0
        );
        assert_eq!(
            revealed_angle_sin_sq(&u, &Vector::from_vec(vec![0.0, -3.0])).unwrap(),
            1.0
        );
        let a = 1.1_f64;
        let v = Vector::from_vec(vec![a.cos(), a.sin()]);
        assert!((revealed_angle_sin_sq(&u, &v).unwrap() - a.sin().powi(2)).abs() < 1e-15);
        assert!(matches!(
            revealed_angle_sin_sq(&u, &Vector::zeros(2)),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn alignment_of_identical_and_rotated_frames() {
        let mut rng = rng_from_seed(9);
        let ubar = random_basis(&mut rng, 12, 3).unwrap();
        let v = alignment(&ubar, &ubar).unwrap();
        assert!((v - Mat::identity(3, 3)).norm() < 1e-12);

        let rot = sampling::random_orthogonal(&mut rng, 3).unwrap();
        let u = Basis::new(ubar.matrix() * &rot).unwrap();
        let v = alignment(&u, &ubar).unwrap();
        assert!((&v - &rot).norm() < 1e-12);
        assert!((ubar.matrix() * v - u.matrix()).norm_squared() < 1e-20);
    }

    #[test]
    fn alignment_fails_without_common_frame() {
        let u = Basis::new(dmatrix![1.0; 0.0]).unwrap();
        let ubar = Basis::new(dmatrix![0.0; 1.0]).unwrap();
        assert!(matches!(alignment(&u, &ubar), Err(Error::NoAlignedFrame)));
    }

    #[test]
    fn sandwich_near_ten_milli() {
        let mut rng = rng_from_seed(13);
        let ubar = random_basis(&mut rng, 40, 4).unwrap();
        let u = basis_at_epsilon(&ubar, 0.01, &mut rng).unwrap();
        let eps = epsilon(&u, &ubar).unwrap();
        assert!((eps - 0.01).abs() < 1e-12);
        let v = alignment(&u, &ubar).unwrap();
        let gap = (ubar.matrix() * &v - u.matrix()).norm_squared();
        assert!(eps <= gap + 1e-9 && gap <= 2.0 * eps + 1e-9);
        let cross = ubar.matrix().tr_mul(u.matrix());
        assert!((cross - v).norm_squared() <= 2.0 * eps + 1e-9);
    }

    #[test]
    fn basis_at_angles_realizes_angles() {
        let mut rng = rng_from_seed(17);
        let ubar = random_basis(&mut rng, 20, 3).unwrap();
        let u = basis_at_angles(&ubar, &[0.2, 0.5], &mut rng).unwrap();
        let a = principal_angles(&u, &ubar).unwrap();
        assert!(a[0].abs() < 1e-6);
        assert!((a[1] - 0.2).abs() < 1e-12);
        assert!((a[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tracker_follows_rank_one_updates() {
        let mut rng = rng_from_seed(19);
        let ubar = random_basis(&mut rng, 15, 3).unwrap();
        let u = basis_at_epsilon(&ubar, 0.3, &mut rng).unwrap();
        let mut tracker = EpsilonTracker::new(&u, &ubar).unwrap();
        assert!((tracker.epsilon() - 0.3).abs() < 1e-12);
        // Rotate the first column of U into a direction inside R(Ū).
        let k = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let target = ubar.matrix().column(0).into_owned();
        let y = &target - u.matrix().column(0);
        tracker.rank_one(&ubar, &y, &k);
        let mut m = u.matrix().clone();
        m.set_column(0, &target);
        let direct = residual_norm_sq(&outside_component(&m, &ubar));
        assert!((tracker.epsilon() - direct).abs() < 1e-14);
    }
}
