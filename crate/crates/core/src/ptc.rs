//! Pseudo-transient continuation Newton-Krylov driver with optional residual
//! smoothing.
//!
//! Each Newton step solves
//!
//! ```text
//! [M/dtau + dR/dw] dw = -R(w) + s,      s = (M/dtau) * (w_smooth - w)
//! ```
//!
//! where `s` is the smoothing source (zero for plain continuation) computed
//! once at the start of the step and frozen. The line search then minimises
//! `|| (M/dtau) a dw + R(w + a dw) - s ||` over a fixed candidate set and the
//! CFL controller grows, keeps or cuts the pseudo-time step from the result.

use serde::{Deserialize, Serialize};

use crate::block::{scale_cells, BlockSparse, BlockVector};
use crate::error::{Error, Result};
use crate::linalg::{factor_block_tridiag, gmres_right_preconditioned, GmresStats, LinearOperator};
use crate::lines::{build_coupling_graph, extract_lines, LineSet, DEFAULT_ANISOTROPY_THRESHOLD};
use crate::record::ConvergenceRecord;
use crate::smoother::{
    rk_smooth_from, smoothing_source, RkSchedule, SmoothOutcome, SmootherContext,
};
use crate::system::NonlinearSystem;

/// Step lengths tried by the line search, largest first.
pub const LINE_SEARCH_CANDIDATES: [f64; 7] = [1.0, 0.75, 0.5, 0.25, 0.1, 0.05, 0.01];

/// Multiple of the problem's residual scale below which a solve counts as
/// converged regardless of the relative target.
const ABSOLUTE_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PtcConfig {
    pub cfl_init: f64,
    /// Growth factor applied after a (nearly) full step.
    #[serde(alias = "beta_cfl1")]
    pub cfl_growth: f64,
    /// Reduction factor applied after a rejected step.
    #[serde(alias = "beta_cfl2")]
    pub cfl_cut: f64,
    pub alpha_grow_threshold: f64,
    pub alpha_reject_threshold: f64,
    pub linear_rel_tol: f64,
    pub max_krylov: usize,
    pub target_residual_reduction: f64,
    /// Optional absolute target on `||R||`; either target ends the solve.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub absolute_tolerance: Option<f64>,
    pub max_newton_steps: usize,
    pub cfl_stagnation_floor: f64,
    pub cfl_max: f64,
    /// Keep the CFL number fixed (the accept/reject logic still runs).
    pub pin_cfl: bool,
    pub anisotropy_threshold: f64,
    /// `None` runs plain continuation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<RkSchedule>,
}

impl Default for PtcConfig {
    fn default() -> Self {
        Self {
            cfl_init: 10.0,
            cfl_growth: 1.5,
            cfl_cut: 0.1,
            alpha_grow_threshold: 0.75,
            alpha_reject_threshold: 0.1,
            linear_rel_tol: 1e-2,
            max_krylov: 100,
            target_residual_reduction: 1e-8,
            absolute_tolerance: None,
            max_newton_steps: 200,
            cfl_stagnation_floor: 1e-6,
            cfl_max: 1e12,
            pin_cfl: false,
            anisotropy_threshold: DEFAULT_ANISOTROPY_THRESHOLD,
            smoothing: None,
        }
    }
}

impl PtcConfig {
    pub fn smoothed(mut self, schedule: RkSchedule) -> Self {
        self.smoothing = Some(schedule);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.cfl_init > 0.0 && self.cfl_init <= self.cfl_max) {
            return bad(format!("cfl_init {} outside (0, cfl_max]", self.cfl_init));
        }
        if !(self.cfl_growth > 1.0) {
            return bad(format!(
                "CFL growth factor {} must exceed 1",
                self.cfl_growth
            ));
        }
        if !(self.cfl_cut > 0.0 && self.cfl_cut < 1.0) {
            return bad(format!("CFL cut factor {} outside (0, 1)", self.cfl_cut));
        }
        if !(0.0 < self.alpha_reject_threshold
            && self.alpha_reject_threshold < self.alpha_grow_threshold
            && self.alpha_grow_threshold <= 1.0)
        {
            return bad(format!(
                "need 0 < alpha_reject ({}) < alpha_grow ({}) <= 1",
                self.alpha_reject_threshold, self.alpha_grow_threshold
            ));
        }
        if !(self.linear_rel_tol > 0.0 && self.linear_rel_tol < 1.0) {
            return bad(format!(
                "linear tolerance {} outside (0, 1)",
                self.linear_rel_tol
            ));
        }
        if self.max_krylov == 0 {
            return bad("max_krylov must be positive".into());
        }
        if !(self.target_residual_reduction > 0.0 && self.target_residual_reduction < 1.0) {
            return bad(format!(
                "target reduction {} outside (0, 1)",
                self.target_residual_reduction
            ));
        }
        if let Some(tol) = self.absolute_tolerance {
            if !(tol > 0.0) {
                return bad(format!("absolute tolerance {tol} must be positive"));
            }
        }
        if !(self.cfl_stagnation_floor > 0.0) {
            return bad("cfl_stagnation_floor must be positive".into());
        }
        if !(self.anisotropy_threshold > 1.0) {
            return bad(format!(
                "anisotropy threshold {} must exceed 1",
                self.anisotropy_threshold
            ));
        }
        Ok(())
    }
}

/// `dtau_i = cfl * explicit_dt_i`
pub fn local_pseudo_timesteps<S: NonlinearSystem + ?Sized>(
    system: &S,
    w: &BlockVector,
    cfl: f64,
) -> Result<Vec<f64>> {
    if !(cfl > 0.0 && cfl.is_finite()) {
        return Err(Error::InvalidConfig(format!("CFL {cfl} must be positive")));
    }
    let dt = system.explicit_dt(w)?;
    dt.into_iter()
        .enumerate()
        .map(|(cell, d)| {
            if d > 0.0 && d.is_finite() {
                Ok(cfl * d)
            } else {
                Err(Error::NonPositiveTimestep { cell, value: d })
            }
        })
        .collect()
}

/// `v -> (M/dtau) v + J(w) v`, matrix-free.
pub struct PtcOperator<'a, S: ?Sized> {
    system: &'a S,
    w: &'a BlockVector,
    shift: Vec<f64>,
}

impl<'a, S: NonlinearSystem + ?Sized> PtcOperator<'a, S> {
    pub fn shift(&self) -> &[f64] {
        &self.shift
    }
}

impl<S: NonlinearSystem + ?Sized> LinearOperator for PtcOperator<'_, S> {
    fn layout(&self) -> crate::block::BlockLayout {
        self.w.layout()
    }

    fn apply(&self, v: &BlockVector) -> Result<BlockVector> {
        let mut out = self.system.jacobian_vector(self.w, v)?;
        out.axpy(1.0, &scale_cells(v, &self.shift));
        Ok(out)
    }
}

pub fn ptc_operator<'a, S: NonlinearSystem + ?Sized>(
    system: &'a S,
    w: &'a BlockVector,
    dtau: &[f64],
) -> Result<PtcOperator<'a, S>> {
    system.layout().ensure_same(&w.layout())?;
    let shift = system.mass().over_timesteps(dtau)?;
    Ok(PtcOperator { system, w, shift })
}

/// Result of one linearised continuation step.
#[derive(Debug, Clone)]
pub struct NewtonStep {
    pub delta_w: BlockVector,
    /// Frozen smoothing source; `None` for plain continuation.
    pub source: Option<BlockVector>,
    pub stats: GmresStats,
    pub smoothing: Option<SmoothOutcome>,
}

/// Solve the continuation system at `w`. Preconditioning uses the line
/// factorization of the first-order blocks with `M/dtau` added to the
/// diagonal. A failed linear solve is reported through `stats.converged`.
pub fn newton_step<S: NonlinearSystem + ?Sized>(
    system: &S,
    w: &BlockVector,
    dtau: &[f64],
    config: &PtcConfig,
    lines: &LineSet,
    smoother: Option<&SmootherContext>,
) -> Result<NewtonStep> {
    let r = system.residual(w)?;
    let blocks = system.first_order_blocks(w)?;
    newton_step_inner(system, w, &r, &blocks, dtau, config, lines, smoother)
}

#[allow(clippy::too_many_arguments)]
fn newton_step_inner<S: NonlinearSystem + ?Sized>(
    system: &S,
    w: &BlockVector,
    residual: &BlockVector,
    blocks: &BlockSparse,
    dtau: &[f64],
    config: &PtcConfig,
    lines: &LineSet,
    smoother: Option<&SmootherContext>,
) -> Result<NewtonStep> {
    let op = ptc_operator(system, w, dtau)?;
    let mut rhs = residual.scaled(-1.0);

    let mut smoothing = None;
    let source = match smoother {
        Some(ctx) => {
            let outcome = rk_smooth_from(system, ctx, w, Some(residual))?;
            let s = smoothing_source(&outcome.delta_w, system.mass(), dtau)?;
            rhs.axpy(1.0, &s);
            smoothing = Some(outcome);
            Some(s)
        }
        None => None,
    };

    let mut shifted = blocks.clone();
    shifted.shift_diagonal(op.shift());
    let precon = match factor_block_tridiag(lines, &shifted) {
        Ok(f) => f,
        Err(e @ Error::SingularPivot { .. }) => {
            log::warn!("continuation preconditioner is singular ({e}); step fails");
            return Ok(NewtonStep {
                delta_w: BlockVector::zeros(w.layout()),
                source,
                stats: GmresStats {
                    iterations: 0,
                    achieved_reduction: 1.0,
                    converged: false,
                    residual_history: Vec::new(),
                },
                smoothing,
            });
        }
        Err(e) => return Err(e),
    };
    let (delta_w, stats) =
        gmres_right_preconditioned(&op, &precon, &rhs, config.linear_rel_tol, config.max_krylov)?;
    Ok(NewtonStep {
        delta_w,
        source,
        stats,
        smoothing,
    })
}

#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    /// Accepted step length, 0 when no candidate decreased the objective.
    pub alpha: f64,
    pub f0: f64,
    pub f_alpha: f64,
    /// `(alpha, F(alpha))` for every candidate tried.
    pub f_values: Vec<(f64, f64)>,
    /// `R(w + alpha dw)` at the accepted step.
    pub residual: Option<BlockVector>,
}

/// `F(a) = || (M/dtau) a dw + R(w + a dw) - s ||`
///
/// Candidates are scanned from `a = 1` downwards; the first with
/// `F(a) < F(0)` is returned. Inadmissible trial states score `+inf`.
pub fn line_search<S: NonlinearSystem + ?Sized>(
    system: &S,
    w: &BlockVector,
    residual_w: &BlockVector,
    delta_w: &BlockVector,
    dtau: &[f64],
    source: Option<&BlockVector>,
) -> Result<LineSearchOutcome> {
    let shift = system.mass().over_timesteps(dtau)?;
    let f0 = objective_at_zero(residual_w, source);
    let mut out = LineSearchOutcome {
        alpha: 0.0,
        f0,
        f_alpha: f0,
        f_values: Vec::with_capacity(LINE_SEARCH_CANDIDATES.len()),
        residual: None,
    };
    if delta_w.norm() == 0.0 {
        return Ok(out);
    }
    for &alpha in &LINE_SEARCH_CANDIDATES {
        let trial = w.plus_scaled(alpha, delta_w);
        let (f, r) = match evaluate_objective(system, &trial, alpha, delta_w, &shift, source)? {
            Some((f, r)) => (f, Some(r)),
            None => (f64::INFINITY, None),
        };
        out.f_values.push((alpha, f));
        if f < f0 {
            out.alpha = alpha;
            out.f_alpha = f;
            out.residual = r;
            break;
        }
    }
    Ok(out)
}

fn objective_at_zero(residual_w: &BlockVector, source: Option<&BlockVector>) -> f64 {
    match source {
        Some(s) => residual_w.sub(s).norm(),
        None => residual_w.norm(),
    }
}

fn evaluate_objective<S: NonlinearSystem + ?Sized>(
    system: &S,
    trial: &BlockVector,
    alpha: f64,
    delta_w: &BlockVector,
    shift: &[f64],
    source: Option<&BlockVector>,
) -> Result<Option<(f64, BlockVector)>> {
    if !trial.is_finite() || !system.is_admissible(trial) {
        return Ok(None);
    }
    let r = match system.residual(trial) {
        Ok(r) if r.is_finite() => r,
        Ok(_) => return Ok(None),
        Err(e) if e.is_inadmissible() => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut obj = scale_cells(delta_w, shift);
    obj.scale(alpha);
    obj.axpy(1.0, &r);
    if let Some(s) = source {
        obj.axpy(-1.0, s);
    }
    let f = obj.norm();
    Ok(f.is_finite().then_some((f, r)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflDecision {
    pub cfl: f64,
    pub accepted: bool,
}

/// Controller: reject and cut on linear failure or `alpha <= reject`,
/// grow on `alpha >= grow`, keep otherwise.
pub fn cfl_update(cfl: f64, alpha: f64, linear_converged: bool, config: &PtcConfig) -> CflDecision {
    let (next, accepted) = if !linear_converged || alpha <= config.alpha_reject_threshold {
        (cfl * config.cfl_cut, false)
    } else if alpha >= config.alpha_grow_threshold {
        ((cfl * config.cfl_growth).min(config.cfl_max), true)
    } else {
        (cfl, true)
    };
    CflDecision {
        cfl: if config.pin_cfl { cfl } else { next },
        accepted,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Converged,
    Stagnated,
    StepBudgetExhausted,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub outcome: Outcome,
    /// Newton steps taken, rejected ones included.
    pub newton_steps: usize,
    pub cumulative_krylov: usize,
    pub initial_residual_l2: f64,
    pub final_residual_l2: f64,
    pub history: Vec<ConvergenceRecord>,
    pub final_state: BlockVector,
    pub final_cfl: f64,
    pub lines: LineSet,
}

impl SolveReport {
    pub fn rejected_steps(&self) -> usize {
        self.history.iter().filter(|r| !r.accepted).count()
    }

    /// Accepted steps with a converged linear solve whose line-search
    /// objective did not decrease.
    pub fn descent_violations(&self) -> usize {
        self.history
            .iter()
            .filter(|r| {
                r.accepted && r.linear_converged && !(r.ptc_residual_l2 < r.ptc_residual_start)
            })
            .count()
    }

    /// Largest `||R||` over accepted states relative to the initial residual.
    pub fn max_accepted_residual_ratio(&self) -> f64 {
        if self.initial_residual_l2 == 0.0 {
            return 0.0;
        }
        self.history
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.residual_l2 / self.initial_residual_l2)
            .fold(1.0, f64::max)
    }
}

/// Solve from the system's initial state.
pub fn solve_steady<S: NonlinearSystem + ?Sized>(
    system: &S,
    config: &PtcConfig,
) -> Result<SolveReport> {
    let w0 = system.initial_state();
    solve_steady_from(system, &w0, config, None)
}

/// Solve from `w0`. Lines come from `lines`, else the system's hint, else
/// extraction from the coupling graph at `w0`; they stay frozen for the
/// whole solve.
pub fn solve_steady_from<S: NonlinearSystem + ?Sized>(
    system: &S,
    w0: &BlockVector,
    config: &PtcConfig,
    lines: Option<&LineSet>,
) -> Result<SolveReport> {
    config.validate()?;
    system.layout().ensure_same(&w0.layout())?;
    if !system.is_admissible(w0) {
        return Err(Error::Inadmissible {
            cell: 0,
            reason: "initial state".into(),
        });
    }
    let mut w = w0.clone();
    let mut r = system.residual(&w)?;
    let r0 = r.l2_norm()?;
    let lines = match lines.cloned().or_else(|| system.line_hint()) {
        Some(l) => l,
        None => {
            let graph = build_coupling_graph(system, &w)?;
            extract_lines(&graph, config.anisotropy_threshold)?
        }
    };
    let floor = ABSOLUTE_FLOOR * system.residual_scale();
    let converged = |rn: f64| {
        rn <= config.target_residual_reduction * r0
            || config.absolute_tolerance.is_some_and(|tol| rn <= tol)
            || rn <= floor
    };

    let mut cfl = config.cfl_init;
    let mut history: Vec<ConvergenceRecord> = Vec::new();
    let mut cumulative = 0;
    let mut rn = r0;
    let outcome = loop {
        if converged(rn) {
            break Outcome::Converged;
        }
        if history.len() >= config.max_newton_steps {
            break Outcome::StepBudgetExhausted;
        }
        let dtau = local_pseudo_timesteps(system, &w, cfl)?;
        let blocks = system.first_order_blocks(&w)?;
        let smoother = match &config.smoothing {
            Some(schedule) => match factor_block_tridiag(&lines, &blocks) {
                Ok(precon) => Some(SmootherContext::from_parts(
                    precon,
                    lines.clone(),
                    schedule.clone(),
                )),
                Err(e @ Error::SingularPivot { .. }) => {
                    log::warn!("smoother preconditioner singular ({e}); step runs unsmoothed");
                    None
                }
                Err(e) => return Err(e),
            },
            None => None,
        };
        let step = newton_step_inner(
            system,
            &w,
            &r,
            &blocks,
            &dtau,
            config,
            &lines,
            smoother.as_ref(),
        )?;
        cumulative += step.stats.iterations;
        let degraded =
            config.smoothing.is_some() && step.smoothing.as_ref().map_or(true, |s| s.degraded);

        let search = if step.stats.converged {
            Some(line_search(
                system,
                &w,
                &r,
                &step.delta_w,
                &dtau,
                step.source.as_ref(),
            )?)
        } else {
            None
        };
        let alpha = search.as_ref().map_or(0.0, |s| s.alpha);
        let decision = cfl_update(cfl, alpha, step.stats.converged, config);
        let f0 = search
            .as_ref()
            .map_or_else(|| objective_at_zero(&r, step.source.as_ref()), |s| s.f0);
        let mut f_alpha = search.as_ref().map_or(f0, |s| s.f_alpha);

        let accepted = decision.accepted;
        if accepted {
            let s = search.expect("accepted steps come from a line search");
            w.axpy(alpha, &step.delta_w);
            r = s.residual.expect("accepted candidate carries its residual");
            rn = r.norm();
        } else {
            f_alpha = f0;
        }
        history.push(ConvergenceRecord {
            step: history.len() + 1,
            cfl,
            alpha,
            krylov_count: step.stats.iterations,
            linear_reduction: step.stats.achieved_reduction,
            residual_l2: rn,
            ptc_residual_l2: f_alpha,
            ptc_residual_start: f0,
            cumulative_krylov: cumulative,
            accepted,
            linear_converged: step.stats.converged,
            smoothing_degraded: degraded,
        });
        log::debug!(
            "step {:4} cfl {:10.3e} alpha {:5.2} krylov {:3} |R| {:10.4e} {}",
            history.len(),
            cfl,
            alpha,
            step.stats.iterations,
            rn,
            if accepted { "" } else { "rejected" }
        );
        cfl = decision.cfl;
        if cfl < config.cfl_stagnation_floor {
            break Outcome::Stagnated;
        }
    };

    Ok(SolveReport {
        outcome,
        newton_steps: history.len(),
        cumulative_krylov: cumulative,
        initial_residual_l2: r0,
        final_residual_l2: rn,
        history,
        final_state: w,
        final_cfl: cfl,
        lines,
    })
}
