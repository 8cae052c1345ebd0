//! Line-preconditioned multistage Runge-Kutta smoother and the residual
//! smoothing source term it feeds to the Newton right-hand side.
//!
//! One cycle of a k-stage scheme is
//!
//! ```text
//! w^m = w^0 - a_m P^{-1} R(w^{m-1}),   m = 1..k,   a_k = 1
//! ```
//!
//! with `P` the line-restricted first-order Jacobian, factored once at the
//! state where the smoother is built and frozen for every stage and cycle.
//! The net update `w_end - w0` defines the composite nonlinear operator
//! `-D^{-1} R(w0)`.

use serde::{Deserialize, Serialize};

use crate::block::{scale_cells, BlockVector, MassMatrix};
use crate::error::{Error, Result};
use crate::linalg::{factor_block_tridiag, BlockTridiagFactorization};
use crate::lines::LineSet;
use crate::system::NonlinearSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RkSchedule {
    stage_coefficients: Vec<f64>,
    n_cycles: usize,
}

impl RkSchedule {
    pub fn new(stage_coefficients: Vec<f64>, n_cycles: usize) -> Result<Self> {
        match stage_coefficients.last() {
            None => return Err(Error::InvalidConfig("RK schedule has no stages".into())),
            Some(&last) if last != 1.0 => {
                return Err(Error::InvalidConfig(format!(
                    "final RK coefficient must be 1, got {last}"
                )))
            }
            _ => {}
        }
        if let Some(a) = stage_coefficients
            .iter()
            .find(|a| !(**a > 0.0 && **a <= 1.0))
        {
            return Err(Error::InvalidConfig(format!(
                "RK coefficient {a} outside (0, 1]"
            )));
        }
        Ok(Self {
            stage_coefficients,
            n_cycles,
        })
    }

    pub fn stage_coefficients(&self) -> &[f64] {
        &self.stage_coefficients
    }

    pub fn n_cycles(&self) -> usize {
        self.n_cycles
    }

    /// Error contraction of one cycle for a linear residual with exact `P`.
    pub fn linear_contraction(&self) -> f64 {
        // e_m / e_0 = 1 - a_m (e_{m-1} / e_0)
        self.stage_coefficients
            .iter()
            .fold(1.0, |factor, a| 1.0 - a * factor)
    }
}

impl Default for RkSchedule {
    /// Three stages, five cycles.
    fn default() -> Self {
        Self {
            stage_coefficients: vec![0.15, 0.4, 1.0],
            n_cycles: 5,
        }
    }
}

/// Frozen line preconditioner plus the stage schedule.
#[derive(Debug, Clone)]
pub struct SmootherContext {
    preconditioner: BlockTridiagFactorization,
    lines: LineSet,
    schedule: RkSchedule,
}

impl SmootherContext {
    pub(crate) fn from_parts(
        preconditioner: BlockTridiagFactorization,
        lines: LineSet,
        schedule: RkSchedule,
    ) -> Self {
        Self {
            preconditioner,
            lines,
            schedule,
        }
    }

    pub fn preconditioner(&self) -> &BlockTridiagFactorization {
        &self.preconditioner
    }

    pub fn lines(&self) -> &LineSet {
        &self.lines
    }

    pub fn schedule(&self) -> &RkSchedule {
        &self.schedule
    }
}

/// Factor the first-order Jacobian at `w`, keeping only the couplings inside `lines`.
pub fn build_smoother<S: NonlinearSystem + ?Sized>(
    system: &S,
    w: &BlockVector,
    lines: &LineSet,
    schedule: &RkSchedule,
) -> Result<SmootherContext> {
    let blocks = system.first_order_blocks(w)?;
    system.layout().ensure_same(&blocks.layout())?;
    let preconditioner = factor_block_tridiag(lines, &blocks)?;
    Ok(SmootherContext {
        preconditioner,
        lines: lines.clone(),
        schedule: schedule.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothOutcome {
    /// `w_end - w0`, i.e. `-D^{-1} R(w0)`.
    pub delta_w: BlockVector,
    pub w_end: BlockVector,
    pub cycles_completed: usize,
    /// A cycle hit an inadmissible or unevaluable state and was abandoned.
    pub degraded: bool,
}

pub fn rk_smooth<S: NonlinearSystem + ?Sized>(
    system: &S,
    ctx: &SmootherContext,
    w0: &BlockVector,
) -> Result<SmoothOutcome> {
    rk_smooth_from(system, ctx, w0, None)
}

/// As [`rk_smooth`], reusing an already evaluated `R(w0)`.
pub(crate) fn rk_smooth_from<S: NonlinearSystem + ?Sized>(
    system: &S,
    ctx: &SmootherContext,
    w0: &BlockVector,
    residual_w0: Option<&BlockVector>,
) -> Result<SmoothOutcome> {
    if !system.is_admissible(w0) {
        return Err(Error::Inadmissible {
            cell: 0,
            reason: "smoother start state".into(),
        });
    }
    let first_residual = match residual_w0 {
        Some(r) => r.clone(),
        None => system.residual(w0)?,
    };

    let mut current = w0.clone();
    let mut cycles_completed = 0;
    let mut degraded = false;
    'cycles: for cycle in 0..ctx.schedule.n_cycles {
        let mut stage = current.clone();
        for (m, &alpha) in ctx.schedule.stage_coefficients.iter().enumerate() {
            let r = if cycle == 0 && m == 0 {
                Ok(first_residual.clone())
            } else {
                system.residual(&stage)
            };
            let r = match r {
                Ok(r) if r.is_finite() => r,
                Ok(_) => {
                    degraded = true;
                    break 'cycles;
                }
                Err(e) => {
                    log::debug!("smoother cycle {cycle} abandoned: {e}");
                    degraded = true;
                    break 'cycles;
                }
            };
            let correction = ctx.preconditioner.solve(&r)?;
            stage = current.plus_scaled(-alpha, &correction);
            if !stage.is_finite() || !system.is_admissible(&stage) {
                degraded = true;
                break 'cycles;
            }
        }
        current = stage;
        cycles_completed += 1;
    }
    Ok(SmoothOutcome {
        delta_w: current.sub(w0),
        w_end: current,
        cycles_completed,
        degraded,
    })
}

/// `s_i = (measure_i / dtau_i) * delta_w_i`
pub fn smoothing_source(
    delta_w: &BlockVector,
    mass: &MassMatrix,
    dtau: &[f64],
) -> Result<BlockVector> {
    mass.layout().ensure_same(&delta_w.layout())?;
    let weights = mass.over_timesteps(dtau)?;
    Ok(scale_cells(delta_w, &weights))
}
