//! Seeded experiments: problem generation, single trials, rate fitting and
//! phase-transition sweeps.
//!
//! A problem is a target `Ū = orth(T)` with `T` standard Gaussian, and a
//! start `U_0 = orth(T + E)` with `E` Gaussian of standard deviation
//! `init_noise_std`. Observations are `v_t = Ū s_t` with `s_t ~ N(0, I_d)`,
//! sampled on `q` coordinates drawn without replacement.
//!
//! The per-iteration convergence factor `X` is the solution of
//! `ε_N = ε_0 (1 − X q/(nd))^N`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::full;
use crate::metrics;
use crate::partial::{self, GateMode, Observation, StreamConfig};
use crate::sampling::{self, derive_seed, draw_omega, gaussian_vector, rng_from_seed, OmegaSampling};
use crate::trajectory::TrialResult;

const PROBLEM_STREAM: u64 = 0;
const OBSERVATION_STREAM: u64 = 1;

/// Iterations used for `X` fits unless told otherwise.
pub const DEFAULT_ITERS: usize = 500;
/// Trials averaged per sweep cell unless told otherwise.
pub const DEFAULT_TRIALS_PER_CELL: usize = 10;
/// Trajectory values below this are treated as round-off in slope fits.
pub const EPSILON_FLOOR: f64 = 1e-24;

/// Number of coordinates observed per step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleSize {
    Full,
    Entries(usize),
}

impl SampleSize {
    pub fn count(self, n: usize) -> usize {
        match self {
            SampleSize::Full => n,
            SampleSize::Entries(q) => q,
        }
    }
}

impl fmt::Display for SampleSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleSize::Full => f.write_str("full"),
            SampleSize::Entries(q) => write!(f, "{q}"),
        }
    }
}

impl std::str::FromStr for SampleSize {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("full") {
            return Ok(SampleSize::Full);
        }
        s.parse::<usize>()
            .map(SampleSize::Entries)
            .map_err(|_| Error::Parse(format!("sample size must be an integer or \"full\", got {s:?}")))
    }
}

impl Serialize for SampleSize {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SampleSize::Full => serializer.serialize_str("full"),
            SampleSize::Entries(q) => serializer.serialize_u64(*q as u64),
        }
    }
}

impl<'de> Deserialize<'de> for SampleSize {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Word(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Count(q) => Ok(SampleSize::Entries(q as usize)),
            Raw::Word(w) => w.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// `⌈d · ln d · ln n⌉`, clamped to `[d, n]`.
pub fn q_log(n: usize, d: usize) -> usize {
    let raw = d as f64 * (d as f64).ln() * (n as f64).ln();
    (raw.ceil() as usize).clamp(d, n)
}

/// `⌈d · ln d · (ln n)²⌉`, clamped to `[d, n]`.
pub fn q_log_sq(n: usize, d: usize) -> usize {
    let raw = d as f64 * (d as f64).ln() * (n as f64).ln().powi(2);
    (raw.ceil() as usize).clamp(d, n)
}

fn default_noise() -> f64 {
    0.5
}

fn default_alpha() -> f64 {
    1.0
}

/// Parameters of one seeded experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub n: usize,
    pub d: usize,
    pub q: SampleSize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub iters: usize,
    pub seed: u64,
    #[serde(default = "default_noise")]
    pub init_noise_std: f64,
    /// Take every partial-data step regardless of the eigenvalue gate.
    #[serde(default)]
    pub bypass_gate: bool,
}

impl ProblemSpec {
    pub fn new(n: usize, d: usize, q: SampleSize, iters: usize, seed: u64) -> Self {
        ProblemSpec {
            n,
            d,
            q,
            alpha: default_alpha(),
            iters,
            seed,
            init_noise_std: default_noise(),
            bypass_gate: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.d == 0 || self.d >= self.n {
            return bad(format!("need 0 < d < n, got n = {}, d = {}", self.n, self.d));
        }
        let q = self.q.count(self.n);
        if q < self.d {
            return bad("q must be ≥ d".into());
        }
        if q > self.n {
            return bad("q must be ≤ n".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return bad(format!("alpha must lie in (0, 2), got {}", self.alpha));
        }
        if self.iters == 0 {
            return bad("iters must be ≥ 1".into());
        }
        if !(self.init_noise_std >= 0.0 && self.init_noise_std.is_finite()) {
            return bad("init_noise_std must be finite and ≥ 0".into());
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Target and starting bases for `spec`.
pub fn generate_problem(spec: &ProblemSpec) -> Result<(Basis, Basis)> {
    let mut rng = rng_from_seed(derive_seed(spec.seed, &[PROBLEM_STREAM]));
    let t = sampling::gaussian_matrix(&mut rng, spec.n, spec.d, 1.0);
    let e = sampling::gaussian_matrix(&mut rng, spec.n, spec.d, spec.init_noise_std);
    let ubar = Basis::orthonormalized(&t)?;
    let u0 = Basis::orthonormalized(&(t + e))?;
    Ok((ubar, u0))
}

/// A random target and a basis at subspace error `eps` from it (the target
/// itself when `eps` is zero).
pub fn generate_pair(n: usize, d: usize, eps: f64, seed: u64) -> Result<(Basis, Basis)> {
    if d == 0 || d >= n {
        return Err(Error::InvalidParameter(format!(
            "need 0 < d < n, got n = {n}, d = {d}"
        )));
    }
    let mut rng = rng_from_seed(derive_seed(seed, &[PROBLEM_STREAM]));
    let ubar = sampling::random_basis(&mut rng, n, d)?;
    if eps == 0.0 {
        return Ok((ubar.clone(), ubar));
    }
    let u = metrics::basis_at_epsilon(&ubar, eps, &mut rng)?;
    Ok((ubar, u))
}

/// Solves `ε_N = ε_0 (1 − X q/(nd))^N` for `X`.
///
/// `ε_N > ε_0` yields a negative `X`.
pub fn fit_x(epsilon0: f64, epsilon_n: f64, n: usize, d: usize, q: usize, iters: usize) -> Result<f64> {
    if !(epsilon0 > 0.0 && epsilon_n > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "X fit needs positive errors, got ε0 = {epsilon0}, εN = {epsilon_n}"
        )));
    }
    if iters == 0 || q == 0 {
        return Err(Error::InvalidParameter("X fit needs iters ≥ 1 and q ≥ 1".into()));
    }
    let per_step = (epsilon_n / epsilon0).ln() / iters as f64;
    // 1 − exp(x) via expm1 for small x.
    Ok(-per_step.exp_m1() * (n * d) as f64 / q as f64)
}

/// Least-squares slope of `ln ε_t` against `t` over the second half of the
/// trajectory, ignoring values below [`EPSILON_FLOOR`].
pub fn tail_slope(epsilons: &[f64]) -> Option<f64> {
    if epsilons.len() < 3 {
        return None;
    }
    let last = epsilons.len() - 1;
    let points: Vec<(f64, f64)> = (last / 2..=last)
        .filter(|&t| epsilons[t] >= EPSILON_FLOOR)
        .map(|t| (t as f64, epsilons[t].ln()))
        .collect();
    if points.len() < 2 {
        return None;
    }
    let m = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / m;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_t).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_t) * (p.1 - mean_y)).sum();
    Some(sxy / sxx)
}

fn x_for(result: &TrialResult, spec: &ProblemSpec) -> Option<f64> {
    let (e0, en) = (result.initial_epsilon()?, result.final_epsilon()?);
    fit_x(e0, en, spec.n, spec.d, spec.q.count(spec.n), result.iterations()).ok()
}

/// Partial-data GROUSE on a generated problem.
pub fn run_partial_trial(spec: &ProblemSpec) -> Result<TrialResult> {
    spec.validate()?;
    let (ubar, u0) = generate_problem(spec)?;
    run_partial_from(spec, &ubar, &u0)
}

/// Partial-data trial starting from given bases (the stream is still drawn
/// from `spec.seed`).
pub fn run_partial_from(spec: &ProblemSpec, ubar: &Basis, u0: &Basis) -> Result<TrialResult> {
    let q = spec.q.count(spec.n);
    let mut rng = rng_from_seed(derive_seed(spec.seed, &[OBSERVATION_STREAM]));
    let stream = (0..spec.iters).map(|_| {
        let s = gaussian_vector(&mut rng, spec.d);
        let v = ubar.matrix() * &s;
        let omega = draw_omega(&mut rng, spec.n, q, OmegaSampling::WithoutReplacement);
        Observation::sample(&v, omega)
            .expect("sampled indices are in range")
            .with_latent(s)
    });
    let config = StreamConfig {
        alpha: spec.alpha,
        gate: if spec.bypass_gate {
            GateMode::Bypass
        } else {
            GateMode::Enforce
        },
        ..StreamConfig::default()
    };
    let (_, mut result) = partial::run_stream(u0, stream, &config, Some(ubar))?;
    result.x_factor = x_for(&result, spec);
    Ok(result)
}

/// Full-data GROUSE (`η = θ/σ`) on a generated problem.
pub fn run_full_trial(spec: &ProblemSpec) -> Result<TrialResult> {
    let spec = ProblemSpec {
        q: SampleSize::Full,
        ..spec.clone()
    };
    spec.validate()?;
    let (ubar, u0) = generate_problem(&spec)?;
    let (_, mut result) = full::run_full(
        &u0,
        &ubar,
        spec.iters,
        derive_seed(spec.seed, &[OBSERVATION_STREAM]),
    )?;
    result.x_factor = x_for(&result, &spec);
    result.tail_slope = tail_slope(&result.epsilons);
    Ok(result)
}

/// Axes of a phase sweep; every combination is one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub ns: Vec<usize>,
    pub ds: Vec<usize>,
    pub qs: Vec<usize>,
}

impl SweepGrid {
    pub fn cells(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::with_capacity(self.ns.len() * self.ds.len() * self.qs.len());
        for &n in &self.ns {
            for &d in &self.ds {
                for &q in &self.qs {
                    out.push((n, d, q));
                }
            }
        }
        out
    }
}

/// Knobs shared by every trial of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    pub alpha: f64,
    pub init_noise_std: f64,
    pub bypass_gate: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            alpha: default_alpha(),
            init_noise_std: default_noise(),
            bypass_gate: false,
        }
    }
}

/// Mean `X` over the trials of one cell; `None` statistics mark an
/// infeasible cell (or one where no trial produced a defined `X`).
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub n: usize,
    pub d: usize,
    pub q: usize,
    pub trials: usize,
    pub mean_x: Option<f64>,
    pub std_x: Option<f64>,
}

fn cell_feasible(n: usize, d: usize, q: usize) -> bool {
    d > 0 && d < n && q >= d && q <= n
}

pub fn sweep_phase(
    grid: &SweepGrid,
    trials_per_cell: usize,
    iters: usize,
    seed: u64,
    options: &SweepOptions,
) -> Result<Vec<SweepCell>> {
    let cells = grid.cells();
    let jobs: Vec<(usize, usize)> = cells
        .iter()
        .enumerate()
        .filter(|(_, &(n, d, q))| cell_feasible(n, d, q))
        .flat_map(|(c, _)| (0..trials_per_cell).map(move |t| (c, t)))
        .collect();
    let outcomes: Vec<(usize, Option<f64>)> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let (n, d, q) = cells[c];
            let spec = ProblemSpec {
                alpha: options.alpha,
                init_noise_std: options.init_noise_std,
                bypass_gate: options.bypass_gate,
                ..ProblemSpec::new(
                    n,
                    d,
                    SampleSize::Entries(q),
                    iters,
                    derive_seed(seed, &[n as u64, d as u64, q as u64, t as u64]),
                )
            };
            run_partial_trial(&spec).map(|r| (c, r.x_factor))
        })
        .collect::<Result<_>>()?;

    Ok(cells
        .iter()
        .enumerate()
        .map(|(c, &(n, d, q))| {
            if !cell_feasible(n, d, q) {
                return SweepCell {
                    n,
                    d,
                    q,
                    trials: 0,
                    mean_x: None,
                    std_x: None,
                };
            }
            let xs: Vec<f64> = outcomes
                .iter()
                .filter(|(cc, _)| *cc == c)
                .filter_map(|(_, x)| *x)
                .collect();
            let (mean_x, std_x) = mean_std(&xs);
            SweepCell {
                n,
                d,
                q,
                trials: xs.len(),
                mean_x,
                std_x,
            }
        })
        .collect())
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}
