//! GROUSE with fully observed vectors.
//!
//! With every entry visible the weights are simply `w = Uᵀv`, and the step
//! `η = θ/σ` rotates the prediction direction `p/‖p‖` exactly onto `v/‖v‖`.
//! The change in subspace error over one step then has a closed form,
//! [`predicted_decrease`], which the tests use as an oracle.

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::linalg::Vector;
use crate::metrics::{self, EpsilonTracker};
use crate::partial::{apply_rank_one, rotation, Maintenance, RankOne, StreamConfig};
use crate::sampling::{gaussian_vector, rng_from_seed};
use crate::trajectory::{StepSummary, TrialResult};

/// Angles within this distance of `0` or `π/2` leave the basis unchanged.
///
/// This sits at the rounding floor of `r = v − UUᵀv`; the update itself is
/// well defined for any angle strictly inside `(0, π/2)`.
pub const THETA_FLOOR: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq)]
pub struct FullStepRecord {
    pub w: Vector,
    pub p: Vector,
    pub r: Vector,
    pub sigma: f64,
    /// Angle between `v` and `R(U)`.
    pub theta: f64,
    pub eta: f64,
    pub epsilon_before: f64,
    pub epsilon_after: f64,
    pub predicted_decrease: f64,
}

#[derive(Clone, Debug)]
struct Geometry {
    w: Vector,
    p: Vector,
    r: Vector,
    theta: f64,
    sigma: f64,
}

fn geometry(u: &Basis, v: &Vector) -> Result<Geometry> {
    if v.len() != u.n() {
        return Err(Error::Shape(format!(
            "vector of length {} against basis with n = {}",
            v.len(),
            u.n()
        )));
    }
    if v.norm_squared() == 0.0 {
        return Err(Error::ZeroVector);
    }
    let w = u.matrix().tr_mul(v);
    let p = u.matrix() * &w;
    let r = v - &p;
    let norm_r = r.norm();
    let norm_w = w.norm();
    Ok(Geometry {
        theta: norm_r.atan2(norm_w),
        sigma: norm_r * p.norm(),
        w,
        p,
        r,
    })
}

fn moves(theta: f64) -> bool {
    (THETA_FLOOR..=FRAC_PI_2 - THETA_FLOOR).contains(&theta)
}

/// `η = θ/σ` (zero when the step is degenerate) and the resulting update.
fn plan(geo: &Geometry) -> Result<(f64, Option<RankOne>)> {
    if !moves(geo.theta) || geo.sigma == 0.0 {
        return Ok((0.0, None));
    }
    let eta = geo.theta / geo.sigma;
    Ok((eta, rotation(&geo.w, &geo.p, &geo.r, geo.theta)?))
}

/// `1 − wᵀAAᵀw / wᵀw` with `A = UᵀŪ`, evaluated as `‖(I − ŪŪᵀ)p‖² / ‖p‖²`
/// (equal for orthonormal `U`, `Ū`, and free of cancellation near zero).
fn misfit(geo: &Geometry, ubar: &Basis) -> f64 {
    let norm_p_sq = geo.p.norm_squared();
    if norm_p_sq == 0.0 {
        return 0.0;
    }
    metrics::outside_component_vec(&geo.p, ubar).norm_squared() / norm_p_sq
}

fn decrease_for(geo: &Geometry, ubar: &Basis, angle: f64) -> f64 {
    let sin_theta = geo.theta.sin();
    if sin_theta == 0.0 {
        return 0.0;
    }
    let gain = angle.sin() * (2.0 * geo.theta - angle).sin() / (sin_theta * sin_theta);
    gain * misfit(geo, ubar)
}

/// Closed-form `ε_t − ε_{t+1}` for a full-data step with step size `eta`:
///
/// `sin(ση) sin(2θ − ση) / sin²θ · (1 − wᵀAAᵀw / wᵀw)`.
///
/// Returns zero when `v ∈ R(U)`.
pub fn predicted_decrease(u: &Basis, ubar: &Basis, v: &Vector, eta: f64) -> Result<f64> {
    u.same_shape(ubar)?;
    let geo = geometry(u, v)?;
    Ok(decrease_for(&geo, ubar, geo.sigma * eta))
}

/// One full-data step with `η = θ/σ`.
pub fn full_step(u: &Basis, v: &Vector, ubar: &Basis) -> Result<(Basis, FullStepRecord)> {
    u.same_shape(ubar)?;
    let geo = geometry(u, v)?;
    let (eta, rank_one) = plan(&geo)?;
    let next = match &rank_one {
        Some(step) => apply_rank_one(u, step),
        None => u.clone(),
    };
    let predicted = if rank_one.is_some() {
        decrease_for(&geo, ubar, geo.theta)
    } else {
        0.0
    };
    let rec = FullStepRecord {
        epsilon_before: metrics::epsilon(u, ubar)?,
        epsilon_after: metrics::epsilon(&next, ubar)?,
        predicted_decrease: predicted,
        sigma: geo.sigma,
        theta: geo.theta,
        eta,
        w: geo.w,
        p: geo.p,
        r: geo.r,
    };
    Ok((next, rec))
}

/// Runs `iters` full-data steps on samples `v_t = Ū s_t`, `s_t ~ N(0, I_d)`.
pub fn run_full(u0: &Basis, ubar: &Basis, iters: usize, seed: u64) -> Result<(Basis, TrialResult)> {
    run_full_with(u0, ubar, iters, seed, &StreamConfig::default())
}

/// [`run_full`] with explicit maintenance settings (`alpha` and `gate` are
/// ignored: the full-data step size is fixed and there is no gate).
pub fn run_full_with(
    u0: &Basis,
    ubar: &Basis,
    iters: usize,
    seed: u64,
    config: &StreamConfig,
) -> Result<(Basis, TrialResult)> {
    u0.same_shape(ubar)?;
    let start = Instant::now();
    let mut rng = rng_from_seed(seed);
    let mut u = u0.clone();
    let mut tracker = EpsilonTracker::new(&u, ubar)?;
    let mut upkeep = Maintenance::new(config.reortho_every, config.drift_check_every);
    let mut result = TrialResult {
        epsilons: Vec::with_capacity(iters + 1),
        steps: Vec::with_capacity(iters),
        ..TrialResult::default()
    };
    result.epsilons.push(tracker.epsilon());
    for t in 1..=iters {
        let s = gaussian_vector(&mut rng, ubar.d());
        let v = ubar.matrix() * s;
        let geo = geometry(&u, &v)?;
        let (_, rank_one) = plan(&geo)?;
        if let Some(step) = &rank_one {
            u = apply_rank_one(&u, step);
            tracker.rank_one(ubar, &step.y, &step.k);
        }
        if upkeep.after_step(t, &mut u)? {
            tracker.refresh(&u, ubar);
        }
        result.epsilons.push(tracker.epsilon());
        result.steps.push(StepSummary {
            gate_passed: None,
            taken: rank_one.is_some(),
            norm_r: geo.r.norm(),
            norm_p: geo.p.norm(),
            theta: geo.theta,
        });
    }
    result.reorthonormalizations = upkeep.count;
    result.wall_time = start.elapsed().as_secs_f64();
    Ok((u, result))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::metrics::basis_at_epsilon;
    use crate::sampling::random_basis;
    use nalgebra::dmatrix;

    #[test]
    fn sample_inside_subspace_is_noop() {
        let mut rng = rng_from_seed(1);
        let u = random_basis(&mut rng, 30, 3).unwrap();
        let ubar = random_basis(&mut rng, 30, 3).unwrap();
        let v = u.matrix() * gaussian_vector(&mut rng, 3);
        let (next, rec) = full_step(&u, &v, &ubar).unwrap();
        assert_eq!(next, u);
        assert_eq!(rec.predicted_decrease, 0.0);
    }

    #[test]
    fn sample_orthogonal_to_subspace_is_noop() {
        let u = Basis::coordinate(4, 2).unwrap();
        let ubar = Basis::new(dmatrix![0.0, 0.0; 0.0, 0.0; 1.0, 0.0; 0.0, 1.0]).unwrap();
        let v = Vector::from_vec(vec![0.0, 0.0, 1.0, -2.0]);
        let (next, rec) = full_step(&u, &v, &ubar).unwrap();
        assert_eq!(next, u);
        assert_eq!(rec.predicted_decrease, 0.0);
        assert!((rec.theta - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn zero_vector_rejected() {
        let u = Basis::coordinate(4, 2).unwrap();
        assert!(matches!(
            full_step(&u, &Vector::zeros(4), &u),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn line_converges_in_one_step() {
        let u = Basis::new(dmatrix![1.0; 0.0]).unwrap();
        let ubar = Basis::new(dmatrix![0.6; -0.8]).unwrap();
        let v = ubar.matrix().column(0) * 1.7;
        let (_, rec) = full_step(&u, &v.into_owned(), &ubar).unwrap();
        assert!(rec.epsilon_after <= 1e-20);
    }

    #[test]
    fn record_trigonometry() {
        let mut rng = rng_from_seed(2);
        let ubar = random_basis(&mut rng, 50, 4).unwrap();
        let u = basis_at_epsilon(&ubar, 0.3, &mut rng).unwrap();
        let v = ubar.matrix() * gaussian_vector(&mut rng, 4);
        let (_, rec) = full_step(&u, &v, &ubar).unwrap();
        let nv = v.norm();
        assert!((rec.theta.cos() - rec.w.norm() / nv).abs() < 1e-10);
        assert!((rec.theta.sin() - rec.r.norm() / nv).abs() < 1e-10);
        let sigma = 0.5 * nv * nv * (2.0 * rec.theta).sin();
        assert!((rec.sigma - sigma).abs() <= 1e-10 * sigma);
        assert!((rec.sigma * rec.eta - rec.theta).abs() < 1e-15);
    }

    #[test]
    fn predicted_decrease_special_step_sizes() {
        let mut rng = rng_from_seed(3);
        let ubar = random_basis(&mut rng, 40, 3).unwrap();
        let u = basis_at_epsilon(&ubar, 0.2, &mut rng).unwrap();
        let v = ubar.matrix() * gaussian_vector(&mut rng, 3);
        let geo = geometry(&u, &v).unwrap();
        // η = θ/σ: the trigonometric factor is exactly one.
        let at_theta = predicted_decrease(&u, &ubar, &v, geo.theta / geo.sigma).unwrap();
        let a = u.matrix().tr_mul(ubar.matrix());
        let w = &geo.w;
        let literal = 1.0 - (w.transpose() * &a * a.transpose() * w)[0] / w.norm_squared();
        assert!((at_theta - literal).abs() < 1e-12);
        // ση = 2θ: no decrease.
        let at_double = predicted_decrease(&u, &ubar, &v, 2.0 * geo.theta / geo.sigma).unwrap();
        assert!(at_double.abs() < 1e-15);
    }

    #[test]
    fn predicted_matches_measured() {
        let mut rng = rng_from_seed(4);
        let ubar = random_basis(&mut rng, 100, 4).unwrap();
        let u = basis_at_epsilon(&ubar, 0.1, &mut rng).unwrap();
        let v = ubar.matrix() * gaussian_vector(&mut rng, 4);
        let (next, rec) = full_step(&u, &v, &ubar).unwrap();
        let measured = metrics::epsilon(&u, &ubar).unwrap() - metrics::epsilon(&next, &ubar).unwrap();
        assert!((measured - rec.predicted_decrease).abs() <= 1e-8 * measured.abs());
    }

    #[test]
    fn decrease_nonnegative_inside_interval() {
        let mut rng = rng_from_seed(5);
        let ubar = random_basis(&mut rng, 30, 3).unwrap();
        for trial in 0..20 {
            let u = basis_at_epsilon(&ubar, 0.05 + 0.1 * trial as f64, &mut rng).unwrap();
            let v = ubar.matrix() * gaussian_vector(&mut rng, 3);
            let geo = geometry(&u, &v).unwrap();
            for k in 1..50 {
                let angle = 2.0 * geo.theta * k as f64 / 50.0;
                let dec = predicted_decrease(&u, &ubar, &v, angle / geo.sigma).unwrap();
                assert!(dec >= -1e-12);
            }
        }
    }

    /// `ψ = Σ s̃_i² sin²φ_i / Σ s̃_i²` with `s̃ = Ȳᵀs` from the SVD
    /// `ŪᵀU = Ȳ Γ Yᵀ`.
    fn psi(u: &Basis, ubar: &Basis, s: &Vector) -> f64 {
        let cross: Mat = ubar.matrix().tr_mul(u.matrix());
        let svd = cross.svd(true, false);
        let y_bar = svd.u.unwrap();
        let s_rot = y_bar.tr_mul(s);
        let num: f64 = s_rot
            .iter()
            .zip(svd.singular_values.iter())
            .map(|(x, c)| x * x * (1.0 - (c.min(1.0)).powi(2)))
            .sum();
        num / s_rot.norm_squared()
    }

    #[test]
    fn psi_within_epsilon_and_matches_decrease() {
        let mut rng = rng_from_seed(6);
        let ubar = random_basis(&mut rng, 60, 4).unwrap();
        for _ in 0..50 {
            let u = basis_at_epsilon(&ubar, 0.05, &mut rng).unwrap();
            let eps = metrics::epsilon(&u, &ubar).unwrap();
            let s = gaussian_vector(&mut rng, 4);
            let value = psi(&u, &ubar, &s);
            assert!((0.0..=eps + 1e-12).contains(&value));
            let (_, rec) = full_step(&u, &(ubar.matrix() * &s), &ubar).unwrap();
            assert!(rec.predicted_decrease >= (1.0 - 3.0 * eps) * value - 1e-12);
        }
    }

    #[test]
    fn expected_ratio_respects_rate_bound() {
        let (n, d) = (80, 4);
        let mut rng = rng_from_seed(7);
        let ubar = random_basis(&mut rng, n, d).unwrap();
        for &eps in &[0.01, 0.1, 0.3] {
            let u = basis_at_angles_uneven(&ubar, eps, &mut rng);
            let eps_t = metrics::epsilon(&u, &ubar).unwrap();
            let ratios: Vec<f64> = (0..1000)
                .map(|_| {
                    let v = ubar.matrix() * gaussian_vector(&mut rng, d);
                    let (_, rec) = full_step(&u, &v, &ubar).unwrap();
                    rec.epsilon_after / eps_t
                })
                .collect();
            let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
            let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (ratios.len() - 1) as f64;
            let se = (var / ratios.len() as f64).sqrt();
            let bound = 1.0 - (1.0 - 3.0 * eps_t) / d as f64;
            assert!(mean - 4.0 * se <= bound, "eps {eps_t}: mean {mean} se {se} bound {bound}");
        }
    }

    fn basis_at_angles_uneven(ubar: &Basis, eps: f64, rng: &mut crate::sampling::SeededRng) -> Basis {
        // Weights 1:2:3:4 across the angles.
        let weights = [1.0, 2.0, 3.0, 4.0];
        let total: f64 = weights.iter().sum();
        let angles: Vec<f64> = weights.iter().map(|w| (eps * w / total).sqrt().asin()).collect();
        metrics::basis_at_angles(ubar, &angles, rng).unwrap()
    }

    #[test]
    fn run_full_single_dimension() {
        for seed in 0..5 {
            let mut rng = rng_from_seed(100 + seed);
            let ubar = random_basis(&mut rng, 50, 1).unwrap();
            let u0 = random_basis(&mut rng, 50, 1).unwrap();
            let (_, res) = run_full(&u0, &ubar, 1, seed).unwrap();
            assert_eq!(res.epsilons.len(), 2);
            assert!(res.epsilons[1] <= 1e-20, "{}", res.epsilons[1]);
        }
    }

    #[test]
    fn run_full_zero_iterations_and_determinism() {
        let mut rng = rng_from_seed(8);
        let ubar = random_basis(&mut rng, 40, 3).unwrap();
        let u0 = random_basis(&mut rng, 40, 3).unwrap();
        let (_, res) = run_full(&u0, &ubar, 0, 1).unwrap();
        assert_eq!(res.epsilons.len(), 1);
        let (a, ra) = run_full(&u0, &ubar, 120, 9).unwrap();
        let (b, rb) = run_full(&u0, &ubar, 120, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.epsilons, rb.epsilons);
        assert_eq!(ra.reorthonormalizations, 1);
    }
}
