use serde::{Deserialize, Serialize};

/// Per-iteration summary kept in a [`TrialResult`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    /// Eigenvalue-gate verdict; `None` for full-data steps, which have no gate.
    pub gate_passed: Option<bool>,
    pub taken: bool,
    pub norm_r: f64,
    pub norm_p: f64,
    /// Angle between the (observed part of the) sample and the current
    /// subspace, `atan2(‖r‖, ‖p‖)`.
    pub theta: f64,
}

/// Trajectory of one run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    /// `ε_0, …, ε_N`; empty when no reference subspace was supplied.
    pub epsilons: Vec<f64>,
    pub steps: Vec<StepSummary>,
    pub gate_skips: usize,
    pub reorthonormalizations: usize,
    pub x_factor: Option<f64>,
    /// Least-squares slope of `log ε_t` over the tail of the run.
    pub tail_slope: Option<f64>,
    pub wall_time: f64,
}

impl TrialResult {
    pub fn initial_epsilon(&self) -> Option<f64> {
        self.epsilons.first().copied()
    }

    pub fn final_epsilon(&self) -> Option<f64> {
        self.epsilons.last().copied()
    }

    pub fn iterations(&self) -> usize {
        self.steps.len()
    }
}
