//! GROUSE from partially observed vectors.
//!
//! One step takes the observed entries `[v]_Ω` of a vector from the target
//! subspace, fits weights `w` on the sampled rows `[U]_Ω`, and rotates the
//! current basis in the plane spanned by the prediction `p = Uw` and the
//! residual `r` (zero off `Ω`). Steps are gated on the spectrum of
//! `[U]_Ωᵀ[U]_Ω`: a sample whose Gram eigenvalues leave
//! `[0.5|Ω|/n, 1.5|Ω|/n]` is skipped.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::linalg::{self, Vector};
use crate::metrics::{self, EpsilonTracker};
use crate::trajectory::{StepSummary, TrialResult};

/// Entries of one vector observed on the index set `Ω`.
///
/// Indices are 0-based and strictly increasing.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    n: usize,
    omega: Vec<usize>,
    values: Vector,
    latent: Option<Vector>,
}

impl Observation {
    pub fn new(n: usize, omega: Vec<usize>, values: Vec<f64>, latent: Option<Vector>) -> Result<Self> {
        if omega.len() != values.len() {
            return Err(Error::InvalidObservation(format!(
                "{} indices but {} values",
                omega.len(),
                values.len()
            )));
        }
        if omega.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidObservation(
                "indices must be strictly increasing".into(),
            ));
        }
        if omega.last().is_some_and(|&i| i >= n) {
            return Err(Error::InvalidObservation(format!(
                "index out of range for n = {n}"
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Observation {
            n,
            omega,
            values: Vector::from_vec(values),
            latent,
        })
    }

    /// Observes `v` on `omega`.
    pub fn sample(v: &Vector, omega: Vec<usize>) -> Result<Self> {
        let values = omega
            .iter()
            .map(|&i| {
                v.get(i).copied().ok_or_else(|| {
                    Error::InvalidObservation(format!("index {i} out of range"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(v.len(), omega, values, None)
    }

    /// Observes every entry of `v`.
    pub fn full(v: &Vector) -> Self {
        Observation {
            n: v.len(),
            omega: (0..v.len()).collect(),
            values: v.clone(),
            latent: None,
        }
    }

    pub fn with_latent(mut self, s: Vector) -> Self {
        self.latent = Some(s);
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn omega(&self) -> &[usize] {
        &self.omega
    }

    pub fn values(&self) -> &Vector {
        &self.values
    }

    pub fn latent(&self) -> Option<&Vector> {
        self.latent.as_ref()
    }
}

/// Outcome of the eigenvalue check on `[U]_Ωᵀ[U]_Ω`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateVerdict {
    pub passed: bool,
    pub eigen_min: f64,
    pub eigen_max: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

/// Whether steps are gated on the sampled-Gram spectrum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateMode {
    #[default]
    Enforce,
    /// Take every step regardless of the verdict (the verdict is still recorded).
    Bypass,
}

/// Checks that every eigenvalue of `[U]_Ωᵀ[U]_Ω` lies in
/// `[0.5|Ω|/n, 1.5|Ω|/n]`.
///
/// Eigenvalues are taken as squared singular values of `[U]_Ω`. With fewer
/// than `d` rows the Gram matrix is singular and the verdict fails with
/// `eigen_min = 0`.
pub fn gate_check(u: &Basis, omega: &[usize]) -> GateVerdict {
    let (n, d) = (u.n(), u.d());
    let m = omega.len();
    let ratio = m as f64 / n as f64;
    let lower_bound = 0.5 * ratio;
    let upper_bound = 1.5 * ratio;
    if m == 0 {
        return GateVerdict {
            passed: false,
            eigen_min: 0.0,
            eigen_max: 0.0,
            lower_bound,
            upper_bound,
        };
    }
    let sampled = u.rows(omega);
    let (eigen_min, eigen_max) = match linalg::singular_values(&sampled) {
        Ok(s) => {
            let max = s[0] * s[0];
            let min = if m < d { 0.0 } else { s[s.len() - 1].powi(2) };
            (min, max)
        }
        Err(_) => (0.0, 0.0),
    };
    GateVerdict {
        passed: eigen_min >= lower_bound && eigen_max <= upper_bound,
        eigen_min,
        eigen_max,
        lower_bound,
        upper_bound,
    }
}

/// Weights, prediction and residual of one observation against a basis.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialResidual {
    pub w: Vector,
    pub p: Vector,
    /// Residual on `Ω`, zero elsewhere.
    pub r: Vector,
}

pub fn partial_residual(u: &Basis, obs: &Observation) -> Result<PartialResidual> {
    if obs.n() != u.n() {
        return Err(Error::Shape(format!(
            "observation of length {} against basis with n = {}",
            obs.n(),
            u.n()
        )));
    }
    let sampled = u.rows(obs.omega());
    let w = linalg::least_squares(&sampled, obs.values()).map_err(|e| match e {
        Error::SingularNormalEquations => Error::GateBypassedOnSingularSample,
        other => other,
    })?;
    let p = u.matrix() * &w;
    let mut r = Vector::zeros(u.n());
    for (k, &i) in obs.omega().iter().enumerate() {
        r[i] = obs.values()[k] - p[i];
    }
    Ok(PartialResidual { w, p, r })
}

/// Rotation chosen by the step-size rule `sin(ση) = α‖r‖/‖p‖`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLength {
    pub eta: f64,
    /// The rotation angle `ση`.
    pub angle: f64,
    /// `α‖r‖/‖p‖` exceeded one and was clamped.
    pub clamped: bool,
}

pub fn step_size(sigma: f64, norm_r: f64, norm_p: f64, alpha: f64) -> Result<StepLength> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha must lie in (0, 2), got {alpha}"
        )));
    }
    if norm_p <= 0.0 {
        return Err(Error::DegenerateProjection);
    }
    let ratio = alpha * norm_r / norm_p;
    let clamped = ratio > 1.0;
    let angle = ratio.min(1.0).asin();
    let eta = if sigma > 0.0 { angle / sigma } else { 0.0 };
    Ok(StepLength {
        eta,
        angle: if sigma > 0.0 { angle } else { 0.0 },
        clamped,
    })
}

/// Everything computed during one partial-data step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub gate: GateVerdict,
    pub w: Vector,
    pub p: Vector,
    pub r: Vector,
    pub sigma: f64,
    pub eta: f64,
    /// Rotation angle `ση` applied by the update.
    pub angle: f64,
    pub alpha: f64,
    pub clamped: bool,
    pub taken: bool,
    pub epsilon_before: Option<f64>,
    pub epsilon_after: Option<f64>,
}

impl StepRecord {
    fn skipped(gate: GateVerdict, n: usize, d: usize, alpha: f64) -> Self {
        StepRecord {
            gate,
            w: Vector::zeros(d),
            p: Vector::zeros(n),
            r: Vector::zeros(n),
            sigma: 0.0,
            eta: 0.0,
            angle: 0.0,
            alpha,
            clamped: false,
            taken: false,
            epsilon_before: None,
            epsilon_after: None,
        }
    }

    pub fn norm_r(&self) -> f64 {
        self.r.norm()
    }

    pub fn norm_p(&self) -> f64 {
        self.p.norm()
    }

    pub fn theta(&self) -> f64 {
        self.norm_r().atan2(self.norm_p())
    }

    pub fn summary(&self) -> StepSummary {
        StepSummary {
            gate_passed: Some(self.gate.passed),
            taken: self.taken,
            norm_r: self.norm_r(),
            norm_p: self.norm_p(),
            theta: self.theta(),
        }
    }
}

/// The update as a rank-one correction `U ← U + y kᵀ`, with
/// `y = (cos a − 1) p/‖p‖ + sin a · r/‖r‖` and `k = w/‖w‖`.
#[derive(Clone, Debug)]
pub(crate) struct RankOne {
    pub y: Vector,
    pub k: Vector,
}

pub(crate) fn rotation(w: &Vector, p: &Vector, r: &Vector, angle: f64) -> Result<Option<RankOne>> {
    let norm_w = w.norm();
    if norm_w == 0.0 {
        return Err(Error::NoRevealedDirection);
    }
    let norm_r = r.norm();
    let norm_p = p.norm();
    if norm_r == 0.0 || angle == 0.0 {
        return Ok(None);
    }
    if norm_p == 0.0 {
        return Err(Error::DegenerateProjection);
    }
    // cos a − 1 written as −2 sin²(a/2) to keep precision for small angles.
    let half = (0.5 * angle).sin();
    let y = p * (-2.0 * half * half / norm_p) + r * (angle.sin() / norm_r);
    Ok(Some(RankOne { y, k: w / norm_w }))
}

pub(crate) fn apply_rank_one(u: &Basis, step: &RankOne) -> Basis {
    let mut m = u.matrix().clone();
    m.ger(1.0, &step.y, &step.k, 1.0);
    Basis::from_raw(m)
}

/// Applies the rotation recorded in `rec` to `u`.
pub fn apply_update(u: &Basis, rec: &StepRecord) -> Result<Basis> {
    if !rec.taken {
        return Ok(u.clone());
    }
    match rotation(&rec.w, &rec.p, &rec.r, rec.angle)? {
        Some(step) => Ok(apply_rank_one(u, &step)),
        None => Ok(u.clone()),
    }
}

/// Residuals this small relative to `‖[v]_Ω‖` count as an exact fit.
/// Residuals below this fraction of the observed norm count as an exact fit.
pub(crate) const EXACT_FIT_TOL: f64 = 1e-14;

fn step_core(
    u: &Basis,
    obs: &Observation,
    alpha: f64,
    gate_mode: GateMode,
) -> Result<(StepRecord, Option<RankOne>)> {
    if obs.n() != u.n() {
        return Err(Error::Shape(format!(
            "observation of length {} against basis with n = {}",
            obs.n(),
            u.n()
        )));
    }
    let gate = gate_check(u, obs.omega());
    if !gate.passed && gate_mode == GateMode::Enforce {
        return Ok((StepRecord::skipped(gate, u.n(), u.d(), alpha), None));
    }
    let PartialResidual { w, p, mut r } = partial_residual(u, obs)?;
    let exact_fit = r.norm() <= EXACT_FIT_TOL * obs.values().norm();
    if exact_fit {
        // What is left is rounding; record it as the zero it stands for.
        r.fill(0.0);
    }
    let norm_r = r.norm();
    let norm_p = p.norm();
    let sigma = norm_r * norm_p;
    let length = if exact_fit {
        StepLength {
            eta: 0.0,
            angle: 0.0,
            clamped: false,
        }
    } else {
        step_size(sigma, norm_r, norm_p, alpha)?
    };
    let rank_one = rotation(&w, &p, &r, length.angle)?;
    let rec = StepRecord {
        gate,
        w,
        p,
        r,
        sigma,
        eta: length.eta,
        angle: length.angle,
        alpha,
        clamped: length.clamped,
        taken: true,
        epsilon_before: None,
        epsilon_after: None,
    };
    Ok((rec, rank_one))
}

/// One gated GROUSE step.
pub fn grouse_step(
    u: &Basis,
    obs: &Observation,
    alpha: f64,
    ubar: Option<&Basis>,
) -> Result<(Basis, StepRecord)> {
    grouse_step_with_gate(u, obs, alpha, GateMode::Enforce, ubar)
}

pub fn grouse_step_with_gate(
    u: &Basis,
    obs: &Observation,
    alpha: f64,
    gate_mode: GateMode,
    ubar: Option<&Basis>,
) -> Result<(Basis, StepRecord)> {
    let (mut rec, rank_one) = step_core(u, obs, alpha, gate_mode)?;
    let next = match &rank_one {
        Some(step) => apply_rank_one(u, step),
        None => u.clone(),
    };
    if let Some(ubar) = ubar {
        rec.epsilon_before = Some(metrics::epsilon(u, ubar)?);
        rec.epsilon_after = Some(metrics::epsilon(&next, ubar)?);
    }
    Ok((next, rec))
}

/// Settings for a streaming run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    pub alpha: f64,
    pub gate: GateMode,
    /// Re-orthonormalize after this many steps (0 disables the cadence).
    pub reortho_every: usize,
    /// Measure `‖UᵀU − I‖_F` after this many steps and re-orthonormalize
    /// when it exceeds [`Basis::DRIFT_BUDGET`] (0 disables the check).
    pub drift_check_every: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            alpha: 1.0,
            gate: GateMode::Enforce,
            reortho_every: 100,
            drift_check_every: 10,
        }
    }
}

/// Keeps a basis orthonormal over a long run of rank-one updates.
#[derive(Debug)]
pub(crate) struct Maintenance {
    reortho_every: usize,
    drift_check_every: usize,
    pub count: usize,
}

impl Maintenance {
    pub fn new(reortho_every: usize, drift_check_every: usize) -> Self {
        Maintenance {
            reortho_every,
            drift_check_every,
            count: 0,
        }
    }

    /// Re-orthonormalizes `u` if step `t` (1-based) is due; returns whether it did.
    pub fn after_step(&mut self, t: usize, u: &mut Basis) -> Result<bool> {
        let scheduled = self.reortho_every > 0 && t.is_multiple_of(self.reortho_every);
        let drifted = !scheduled
            && self.drift_check_every > 0
            && t.is_multiple_of(self.drift_check_every)
            && u.defect() > Basis::DRIFT_BUDGET;
        if scheduled || drifted {
            *u = u.reorthonormalize()?;
            self.count += 1;
            return Ok(true);
        }
        Ok(false)
    }
}

/// Runs GROUSE over a stream of observations.
///
/// With a reference `ubar` the trajectory `ε_0, …, ε_N` is recorded; it is
/// maintained incrementally and refreshed exactly at every
/// re-orthonormalization.
pub fn run_stream<I>(
    u0: &Basis,
    stream: I,
    config: &StreamConfig,
    ubar: Option<&Basis>,
) -> Result<(Basis, TrialResult)>
where
    I: IntoIterator<Item = Observation>,
{
    let start = Instant::now();
    let mut u = u0.clone();
    let mut tracker = ubar.map(|ub| EpsilonTracker::new(&u, ub)).transpose()?;
    let mut result = TrialResult::default();
    if let Some(tr) = &tracker {
        result.epsilons.push(tr.epsilon());
    }
    let mut upkeep = Maintenance::new(config.reortho_every, config.drift_check_every);
    for (idx, obs) in stream.into_iter().enumerate() {
        let (rec, rank_one) = step_core(&u, &obs, config.alpha, config.gate)?;
        if !rec.taken {
            result.gate_skips += 1;
        }
        if let Some(step) = &rank_one {
            u = apply_rank_one(&u, step);
            if let (Some(tr), Some(ub)) = (tracker.as_mut(), ubar) {
                tr.rank_one(ub, &step.y, &step.k);
            }
        }
        if upkeep.after_step(idx + 1, &mut u)? {
            if let (Some(tr), Some(ub)) = (tracker.as_mut(), ubar) {
                tr.refresh(&u, ub);
            }
        }
        if let Some(tr) = &tracker {
            result.epsilons.push(tr.epsilon());
        }
        result.steps.push(rec.summary());
    }
    result.reorthonormalizations = upkeep.count;
    result.wall_time = start.elapsed().as_secs_f64();
    Ok((u, result))
}
