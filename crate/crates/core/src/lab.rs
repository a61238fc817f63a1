//! Monte-Carlo checks of the probabilistic statements behind the
//! partial-data convergence analysis.
//!
//! Each validator draws independent trials from per-trial derived seeds, so
//! results do not depend on thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::metrics;
use crate::partial::gate_check;
use crate::sampling::{derive_seed, draw_subset, draw_with_replacement, gaussian_vector, rng_from_seed};

/// `m` i.i.d. uniform draws from `0..n` (0-based).
pub fn sample_with_replacement(n: usize, m: usize, seed: u64) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    draw_with_replacement(&mut rng, n, m)
}

/// `γ = sqrt(8 d μ / (3 |Ω|) · ln(2d/δ))`.
pub fn gamma_bound(d: usize, mu: f64, omega_size: usize, delta: f64) -> f64 {
    (8.0 * d as f64 * mu / (3.0 * omega_size as f64) * (2.0 * d as f64 / delta).ln()).sqrt()
}

/// Smallest sample size at which the sampled-Gram concentration result
/// applies: `(8/3) d μ ln(2d/δ)`.
pub fn gram_hypothesis_size(d: usize, mu: f64, delta: f64) -> f64 {
    8.0 / 3.0 * d as f64 * mu * (2.0 * d as f64 / delta).ln()
}

/// `ξ = sqrt(2 μ(x)² / |Ω| · ln(1/δ))`.
pub fn xi_bound(mu_x: f64, omega_size: usize, delta: f64) -> f64 {
    (2.0 * mu_x * mu_x / omega_size as f64 * (1.0 / delta).ln()).sqrt()
}

/// `β = sqrt(2 μ(x) ln(1/δ))`.
pub fn beta_bound(mu_x: f64, delta: f64) -> f64 {
    (2.0 * mu_x * (1.0 / delta).ln()).sqrt()
}

/// Factor multiplying `‖x‖²` in the sampled-residual lower bound:
/// `(|Ω|(1 − ξ) − d μ(U) (1 + β)² / (1 − γ)) / n`.
pub fn residual_factor(n: usize, d: usize, mu_u: f64, omega_size: usize, xi: f64, beta: f64, gamma: f64) -> f64 {
    (omega_size as f64 * (1.0 - xi) - d as f64 * mu_u * (1.0 + beta).powi(2) / (1.0 - gamma)) / n as f64
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")))
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        Err(Error::InvalidParameter("trials must be ≥ 1".into()))
    } else {
        Ok(())
    }
}

/// Minimum, median and maximum of a sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Quantiles {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        let median = if m % 2 == 1 {
            sorted[m / 2]
        } else {
            0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
        };
        Some(Quantiles {
            min: sorted[0],
            median,
            max: sorted[m - 1],
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub trial: usize,
    pub eig_min: f64,
    pub eig_max: f64,
    pub in_window: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub trials: usize,
    pub delta: f64,
    pub gamma: f64,
    pub omega_size: usize,
    pub failure_rate: f64,
    /// Whether `omega_size` exceeds [`gram_hypothesis_size`].
    pub hypothesis_met: bool,
    pub eigen_min_quantiles: Quantiles,
    pub eigen_max_quantiles: Quantiles,
    pub rows: Vec<ConcentrationRow>,
}

impl ConcentrationReport {
    /// `δ + 3 sqrt(δ(1 − δ)/trials)`.
    pub fn allowed_rate(&self) -> f64 {
        self.delta + 3.0 * (self.delta * (1.0 - self.delta) / self.trials as f64).sqrt()
    }
}

/// Draws `trials` with-replacement multisets `Ω` of size `omega_size` and
/// records whether the spectrum of `[U]_Ωᵀ[U]_Ω` stays inside
/// `[(1 − γ)|Ω|/n, (1 + γ)|Ω|/n]`.
pub fn validate_gram_concentration(
    u: &Basis,
    omega_size: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<ConcentrationReport> {
    check_delta(delta)?;
    check_trials(trials)?;
    if omega_size == 0 {
        return Err(Error::InvalidParameter("omega_size must be ≥ 1".into()));
    }
    let (n, d) = (u.n(), u.d());
    let mu = metrics::coherence_basis(u);
    let gamma = gamma_bound(d, mu, omega_size, delta);
    let scale = omega_size as f64 / n as f64;
    let (lo, hi) = ((1.0 - gamma) * scale, (1.0 + gamma) * scale);

    let rows: Vec<ConcentrationRow> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let omega = sample_with_replacement(n, omega_size, derive_seed(seed, &[trial as u64]));
            let rows = u.rows(&omega);
            let eig = linalg::sym_eigenvalues(&(rows.transpose() * &rows))?;
            let (eig_max, eig_min) = (eig[0], eig[d - 1]);
            Ok(ConcentrationRow {
                trial,
                eig_min,
                eig_max,
                in_window: eig_min >= lo && eig_max <= hi,
            })
        })
        .collect::<Result<_>>()?;

    let failures = rows.iter().filter(|r| !r.in_window).count();
    let mins: Vec<f64> = rows.iter().map(|r| r.eig_min).collect();
    let maxs: Vec<f64> = rows.iter().map(|r| r.eig_max).collect();
    Ok(ConcentrationReport {
        trials,
        delta,
        gamma,
        omega_size,
        failure_rate: failures as f64 / trials as f64,
        hypothesis_met: omega_size as f64 > gram_hypothesis_size(d, mu, delta),
        eigen_min_quantiles: Quantiles::of(&mins).expect("trials ≥ 1"),
        eigen_max_quantiles: Quantiles::of(&maxs).expect("trials ≥ 1"),
        rows,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub trial: usize,
    /// `‖[v]_Ω − [p]_Ω‖²`, the sampled residual after the least-squares fit.
    pub lhs: f64,
    /// Bound factor times `‖v − UUᵀv‖²`.
    pub rhs: f64,
    /// Only set when the bound factor was positive.
    pub violated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualBoundReport {
    pub trials: usize,
    pub delta: f64,
    pub gamma: f64,
    /// Medians over trials; `ξ` and `β` depend on the residual's coherence.
    pub xi: f64,
    pub beta: f64,
    pub bound_rhs: f64,
    /// Trials whose bound factor was positive, so the inequality was checked.
    pub asserted: usize,
    /// Violations among the asserted trials.
    pub violation_rate: f64,
    pub hypothesis_met: bool,
    pub rows: Vec<ResidualRow>,
}

impl ResidualBoundReport {
    /// `3δ + 3 sqrt(3δ(1 − 3δ)/asserted)`.
    pub fn allowed_rate(&self) -> f64 {
        let p = (3.0 * self.delta).min(1.0);
        p + 3.0 * (p * (1.0 - p) / self.asserted.max(1) as f64).sqrt()
    }
}

/// Checks the lower bound on the sampled residual for fresh `v = Ū s` and
/// fresh with-replacement multisets `Ω`.
pub fn validate_residual_bound(
    u: &Basis,
    ubar: &Basis,
    omega_size: usize,
    delta: f64,
    trials: usize,
    seed: u64,
) -> Result<ResidualBoundReport> {
    check_delta(delta)?;
    check_trials(trials)?;
    u.same_shape(ubar)?;
    if omega_size < u.d() {
        return Err(Error::InvalidParameter("omega_size must be ≥ d".into()));
    }
    let (n, d) = (u.n(), u.d());
    let mu_u = metrics::coherence_basis(u);
    let gamma = gamma_bound(d, mu_u, omega_size, delta);

    struct Trial {
        row: ResidualRow,
        xi: f64,
        beta: f64,
        asserted: bool,
    }

    let outcomes: Vec<Trial> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = rng_from_seed(derive_seed(seed, &[trial as u64]));
            let s = gaussian_vector(&mut rng, d);
            let v = ubar.matrix() * &s;
            let omega = draw_with_replacement(&mut rng, n, omega_size);
            let x = &v - u.matrix() * (u.matrix().transpose() * &v);
            let x_sq = x.norm_squared();

            let u_omega = u.rows(&omega);
            let v_omega = Vector::from_iterator(omega.len(), omega.iter().map(|&i| v[i]));
            let lhs = match linalg::least_squares(&u_omega, &v_omega) {
                Ok(w) => (&v_omega - &u_omega * w).norm_squared(),
                Err(Error::SingularNormalEquations) => v_omega.norm_squared(),
                Err(e) => return Err(e),
            };

            if x_sq == 0.0 {
                return Ok(Trial {
                    row: ResidualRow {
                        trial,
                        lhs,
                        rhs: 0.0,
                        violated: false,
                    },
                    xi: 0.0,
                    beta: 0.0,
                    asserted: false,
                });
            }
            let mu_x = metrics::coherence_vector(&x)?;
            let xi = xi_bound(mu_x, omega_size, delta);
            let beta = beta_bound(mu_x, delta);
            let factor = if gamma < 1.0 {
                residual_factor(n, d, mu_u, omega_size, xi, beta, gamma)
            } else {
                f64::NEG_INFINITY
            };
            let asserted = factor > 0.0;
            let rhs = factor.max(0.0) * x_sq;
            Ok(Trial {
                row: ResidualRow {
                    trial,
                    lhs,
                    rhs,
                    violated: asserted && lhs < rhs,
                },
                xi,
                beta,
                asserted,
            })
        })
        .collect::<Result<_>>()?;

    let asserted = outcomes.iter().filter(|t| t.asserted).count();
    let violations = outcomes.iter().filter(|t| t.row.violated).count();
    let median = |f: &dyn Fn(&Trial) -> f64| {
        Quantiles::of(&outcomes.iter().map(f).collect::<Vec<_>>())
            .map(|q| q.median)
            .unwrap_or(0.0)
    };
    Ok(ResidualBoundReport {
        trials,
        delta,
        gamma,
        xi: median(&|t| t.xi),
        beta: median(&|t| t.beta),
        bound_rhs: median(&|t| t.row.rhs),
        asserted,
        violation_rate: if asserted == 0 {
            0.0
        } else {
            violations as f64 / asserted as f64
        },
        hypothesis_met: omega_size as f64 > gram_hypothesis_size(d, mu_u, delta),
        rows: outcomes.into_iter().map(|t| t.row).collect(),
    })
}

/// Fraction of without-replacement draws `Ω`, `|Ω| = q`, that fail the
/// eigenvalue gate for `u`.
pub fn estimate_skip_rate(u: &Basis, q: usize, trials: usize, seed: u64) -> Result<f64> {
    check_trials(trials)?;
    if q < u.d() || q > u.n() {
        return Err(Error::InvalidParameter(format!(
            "q must lie in [d, n] = [{}, {}], got {q}",
            u.d(),
            u.n()
        )));
    }
    let skips = (0..trials)
        .into_par_iter()
        .filter(|&trial| {
            let mut rng = rng_from_seed(derive_seed(seed, &[trial as u64]));
            !gate_check(u, &draw_subset(&mut rng, u.n(), q)).passed
        })
        .count();
    Ok(skips as f64 / trials as f64)
}

/// Sample mean and standard error of `sin²θ` for `v = Ū s`, `s ~ N(0, I)`.
/// The expectation is `ε/d`.
pub fn validate_sin_sq_expectation(u: &Basis, ubar: &Basis, trials: usize, seed: u64) -> Result<(f64, f64)> {
    if trials < 100 {
        return Err(Error::InvalidParameter("need at least 100 trials".into()));
    }
    u.same_shape(ubar)?;
    let mut rng = rng_from_seed(seed);
    let samples = (0..trials)
        .map(|_| {
            let v = ubar.matrix() * gaussian_vector(&mut rng, ubar.d());
            metrics::revealed_angle_sin_sq(u, &v)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_stderr(&samples))
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// Mean and standard error of `w_i² / ‖w‖²` for `w ~ N(0, I_d)`.
pub fn component_share(d: usize, i: usize, trials: usize, seed: u64) -> Result<(f64, f64)> {
    if i >= d || trials < 2 {
        return Err(Error::InvalidParameter("need i < d and trials ≥ 2".into()));
    }
    let mut rng = rng_from_seed(seed);
    let xs: Vec<f64> = (0..trials)
        .map(|_| {
            let w = gaussian_vector(&mut rng, d);
            w[i] * w[i] / w.norm_squared()
        })
        .collect();
    Ok(mean_stderr(&xs))
}

/// Mean and standard error of the Rayleigh quotient `wᵀQw / wᵀw` for
/// `w ~ N(0, I_d)`.
pub fn rayleigh_mean(q: &Mat, trials: usize, seed: u64) -> Result<(f64, f64)> {
    if !q.is_square() || q.nrows() == 0 || trials < 2 {
        return Err(Error::InvalidParameter("need a nonempty square Q and trials ≥ 2".into()));
    }
    let mut rng = rng_from_seed(seed);
    let xs: Vec<f64> = (0..trials)
        .map(|_| {
            let w = gaussian_vector(&mut rng, q.nrows());
            w.dot(&(q * &w)) / w.norm_squared()
        })
        .collect();
    Ok(mean_stderr(&xs))
}

/// The two upper bounds on `μ(x_t)` used in the skip-probability argument,
/// for a user-chosen constant `C₁`.
pub fn mu_xt_thresholds(n: usize, d: usize, mu_ubar: f64, c1: f64) -> (f64, f64) {
    let ln_n = (n as f64).ln();
    let ln_20d = (20.0 * d as f64).ln();
    let a = ln_n * (0.045 / 10f64.ln() * c1 * d as f64 * mu_ubar * ln_20d).sqrt();
    let b = ln_n * ln_n * (0.05 / (8.0 * 10f64.ln()) * c1 * ln_20d);
    (a, b)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MuXtSummary {
    pub trials: usize,
    pub c1: f64,
    pub quantiles: Quantiles,
    pub mean: f64,
    pub threshold_a: f64,
    pub threshold_b: f64,
    /// Fraction of samples meeting both thresholds.
    pub satisfied_fraction: f64,
}

/// Empirical distribution of `μ(x)` for `x = v − UUᵀv`, `v = Ū s`.
/// Diagnostic only.
pub fn mu_xt_diagnostics(u: &Basis, ubar: &Basis, c1: f64, trials: usize, seed: u64) -> Result<MuXtSummary> {
    check_trials(trials)?;
    u.same_shape(ubar)?;
    let mut rng = rng_from_seed(seed);
    let mus = (0..trials)
        .map(|_| {
            let v = ubar.matrix() * gaussian_vector(&mut rng, ubar.d());
            let x = &v - u.matrix() * (u.matrix().transpose() * &v);
            metrics::coherence_vector(&x)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (a, b) = mu_xt_thresholds(u.n(), u.d(), metrics::coherence_basis(ubar), c1);
    let ok = mus.iter().filter(|&&m| m <= a && m <= b).count();
    Ok(MuXtSummary {
        trials,
        c1,
        quantiles: Quantiles::of(&mus).expect("trials ≥ 1"),
        mean: mus.iter().sum::<f64>() / trials as f64,
        threshold_a: a,
        threshold_b: b,
        satisfied_fraction: ok as f64 / trials as f64,
    })
}
