use serde::{Deserialize, Serialize};

/// Diagnostics for one nonlinear (Newton) step, accepted or rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub step: usize,
    /// CFL number the step was computed with.
    pub cfl: f64,
    /// Line-search step length; 0 when the linear solve failed or no
    /// candidate decreased the pseudo-unsteady residual.
    pub alpha: f64,
    /// Krylov vectors spent on this step's linear solve.
    pub krylov_count: usize,
    /// Achieved relative reduction of the linear residual.
    pub linear_reduction: f64,
    /// `||R||` at the state held after this step.
    pub residual_l2: f64,
    /// Line-search objective at the chosen `alpha`.
    pub ptc_residual_l2: f64,
    /// Line-search objective at `alpha = 0`.
    pub ptc_residual_start: f64,
    pub cumulative_krylov: usize,
    pub accepted: bool,
    pub linear_converged: bool,
    /// The smoother abandoned at least one cycle on this step.
    pub smoothing_degraded: bool,
}
