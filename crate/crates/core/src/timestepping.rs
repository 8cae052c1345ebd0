//! Implicit physical time stepping (BDF1 start, BDF2 after) where every time
//! step is a steady continuation solve of the unsteady residual.

use serde::{Deserialize, Serialize};

use crate::block::{scale_cells, BlockLayout, BlockSparse, BlockVector, MassMatrix};
use crate::error::{Error, Result};
use crate::lines::LineSet;
use crate::ptc::{solve_steady_from, Outcome, PtcConfig, SolveReport};
use crate::system::NonlinearSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BdfOrder {
    One,
    Two,
}

/// Unsteady residual of one implicit step:
///
/// ```text
/// BDF1: M (w - w_n) / dt + R(w)
/// BDF2: M (3 w - 4 w_n + w_{n-1}) / (2 dt) + R(w)
/// ```
pub struct BdfSystem<'a, S: ?Sized> {
    inner: &'a S,
    dt: f64,
    order: BdfOrder,
    w_prev: BlockVector,
    w_prev2: Option<BlockVector>,
    /// `measure_i / dt`
    mass_over_dt: Vec<f64>,
}

impl<'a, S: NonlinearSystem + ?Sized> BdfSystem<'a, S> {
    pub fn bdf1(inner: &'a S, dt: f64, w_prev: BlockVector) -> Result<Self> {
        Self::build(inner, dt, BdfOrder::One, w_prev, None)
    }

    pub fn bdf2(inner: &'a S, dt: f64, w_prev: BlockVector, w_prev2: BlockVector) -> Result<Self> {
        Self::build(inner, dt, BdfOrder::Two, w_prev, Some(w_prev2))
    }

    fn build(
        inner: &'a S,
        dt: f64,
        order: BdfOrder,
        w_prev: BlockVector,
        w_prev2: Option<BlockVector>,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "time step {dt} must be positive"
            )));
        }
        inner.layout().ensure_same(&w_prev.layout())?;
        if let Some(w2) = &w_prev2 {
            inner.layout().ensure_same(&w2.layout())?;
        }
        let mass_over_dt = inner
            .mass()
            .cell_measures()
            .iter()
            .map(|m| m / dt)
            .collect();
        Ok(Self {
            inner,
            dt,
            order,
            w_prev,
            w_prev2,
            mass_over_dt,
        })
    }

    pub fn order(&self) -> BdfOrder {
        self.order
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Coefficient of `M w / dt` in the time term.
    fn leading_coefficient(&self) -> f64 {
        match self.order {
            BdfOrder::One => 1.0,
            BdfOrder::Two => 1.5,
        }
    }

    fn time_term(&self, w: &BlockVector) -> BlockVector {
        let d = match (&self.order, &self.w_prev2) {
            (BdfOrder::Two, Some(w2)) => {
                let mut d = w.scaled(1.5);
                d.axpy(-2.0, &self.w_prev);
                d.axpy(0.5, w2);
                d
            }
            _ => w.sub(&self.w_prev),
        };
        scale_cells(&d, &self.mass_over_dt)
    }
}

impl<S: NonlinearSystem + ?Sized> NonlinearSystem for BdfSystem<'_, S> {
    fn layout(&self) -> BlockLayout {
        self.inner.layout()
    }

    fn residual(&self, w: &BlockVector) -> Result<BlockVector> {
        let mut r = self.inner.residual(w)?;
        r.axpy(1.0, &self.time_term(w));
        Ok(r)
    }

    fn jacobian_vector(&self, w: &BlockVector, v: &BlockVector) -> Result<BlockVector> {
        let mut jv = self.inner.jacobian_vector(w, v)?;
        let mut t = scale_cells(v, &self.mass_over_dt);
        t.scale(self.leading_coefficient());
        jv.axpy(1.0, &t);
        Ok(jv)
    }

    fn first_order_blocks(&self, w: &BlockVector) -> Result<BlockSparse> {
        let mut blocks = self.inner.first_order_blocks(w)?;
        let c = self.leading_coefficient();
        let shift: Vec<f64> = self.mass_over_dt.iter().map(|m| c * m).collect();
        blocks.shift_diagonal(&shift);
        Ok(blocks)
    }

    fn mass(&self) -> &MassMatrix {
        self.inner.mass()
    }

    fn explicit_dt(&self, w: &BlockVector) -> Result<Vec<f64>> {
        self.inner.explicit_dt(w)
    }

    fn initial_state(&self) -> BlockVector {
        self.w_prev.clone()
    }

    fn is_admissible(&self, w: &BlockVector) -> bool {
        self.inner.is_admissible(w)
    }

    fn functional(&self, w: &BlockVector) -> Option<f64> {
        self.inner.functional(w)
    }

    fn residual_scale(&self) -> f64 {
        self.inner.residual_scale()
    }

    fn line_hint(&self) -> Option<LineSet> {
        self.inner.line_hint()
    }
}

/// `M (3 w - 4 w_prev + w_prev2) / (2 dt) + R(w)`, or the BDF1 form when
/// `w_prev2` is absent.
pub fn bdf_residual<S: NonlinearSystem + ?Sized>(
    system: &S,
    w: &BlockVector,
    w_prev: &BlockVector,
    w_prev2: Option<&BlockVector>,
    dt: f64,
) -> Result<BlockVector> {
    let bdf = match w_prev2 {
        Some(w2) => BdfSystem::bdf2(system, dt, w_prev.clone(), w2.clone())?,
        None => BdfSystem::bdf1(system, dt, w_prev.clone())?,
    };
    bdf.layout().ensure_same(&w.layout())?;
    bdf.residual(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnsteadyConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub inner: PtcConfig,
}

impl UnsteadyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "time step {} must be positive",
                self.dt
            )));
        }
        self.inner.validate()
    }
}

#[derive(Debug, Clone)]
pub struct TimeHistory {
    pub dt: f64,
    /// States at `t = 0, dt, 2 dt, ...`; the first entry is the initial state.
    pub states: Vec<BlockVector>,
    /// Functional of every stored state, when the system defines one.
    pub functionals: Vec<Option<f64>>,
    /// One continuation solve per completed physical step.
    pub reports: Vec<SolveReport>,
    /// Physical step (1-based) whose solve did not converge, if any.
    pub aborted_at: Option<usize>,
}

impl TimeHistory {
    pub fn completed_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn total_krylov(&self) -> usize {
        self.reports.iter().map(|r| r.cumulative_krylov).sum()
    }

    pub fn total_newton_steps(&self) -> usize {
        self.reports.iter().map(|r| r.newton_steps).sum()
    }
}

/// March from the system's initial state.
pub fn advance_unsteady<S: NonlinearSystem + ?Sized>(
    system: &S,
    config: &UnsteadyConfig,
) -> Result<TimeHistory> {
    advance_unsteady_from(system, &system.initial_state(), config)
}

/// March `config.n_steps` physical steps from `w0`. The first step is BDF1,
/// later ones BDF2. Each step is solved from the previous state with the CFL
/// reset to `cfl_init`. Marching stops at the first step that fails to
/// converge; that step's report is kept and its state is not.
pub fn advance_unsteady_from<S: NonlinearSystem + ?Sized>(
    system: &S,
    w0: &BlockVector,
    config: &UnsteadyConfig,
) -> Result<TimeHistory> {
    config.validate()?;
    let (dt, n_steps) = (config.dt, config.n_steps);
    let mut history = TimeHistory {
        dt,
        states: vec![w0.clone()],
        functionals: vec![system.functional(w0)],
        reports: Vec::with_capacity(n_steps),
        aborted_at: None,
    };
    for step in 1..=n_steps {
        let n = history.states.len();
        let w_prev = history.states[n - 1].clone();
        let bdf = if n >= 2 {
            BdfSystem::bdf2(system, dt, w_prev.clone(), history.states[n - 2].clone())?
        } else {
            BdfSystem::bdf1(system, dt, w_prev.clone())?
        };
        let report = solve_steady_from(&bdf, &w_prev, &config.inner, None)?;
        let outcome = report.outcome;
        log::info!(
            "time step {step}: {:?} after {} Newton steps, {} Krylov",
            outcome,
            report.newton_steps,
            report.cumulative_krylov
        );
        if outcome == Outcome::Converged {
            history
                .functionals
                .push(system.functional(&report.final_state));
            history.states.push(report.final_state.clone());
            history.reports.push(report);
        } else {
            history.reports.push(report);
            history.aborted_at = Some(step);
            break;
        }
    }
    Ok(history)
}
