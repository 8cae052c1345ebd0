//! The nonlinear-system contract every solver in this crate works against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::block::{BlockLayout, BlockSparse, BlockVector, MassMatrix};
use crate::error::Result;
use crate::lines::LineSet;

/// A discrete nonlinear problem `R(w) = 0` with cell-blocked unknowns.
///
/// `jacobian_vector` must be the exact linearization of `residual`; the
/// line-search descent property of the continuation solver depends on it.
/// `first_order_blocks` may be an approximation (typically the Jacobian of a
/// first-order discretization) and is used only for preconditioning,
/// smoothing and line extraction.
pub trait NonlinearSystem {
    fn layout(&self) -> BlockLayout;

    /// `R(w)`. Returns [`crate::Error::Inadmissible`] when `w` is outside the
    /// set where the residual is defined.
    fn residual(&self, w: &BlockVector) -> Result<BlockVector>;

    /// `[dR/dw](w) * v`
    fn jacobian_vector(&self, w: &BlockVector, v: &BlockVector) -> Result<BlockVector>;

    fn first_order_blocks(&self, w: &BlockVector) -> Result<BlockSparse>;

    fn mass(&self) -> &MassMatrix;

    /// Per-cell explicit pseudo-time step estimate.
    fn explicit_dt(&self, w: &BlockVector) -> Result<Vec<f64>>;

    /// Impulsive or uniform starting state.
    fn initial_state(&self) -> BlockVector;

    fn is_admissible(&self, _w: &BlockVector) -> bool {
        true
    }

    /// Integrated quantity of interest, reported per physical time step.
    fn functional(&self, _w: &BlockVector) -> Option<f64> {
        None
    }

    /// Implicit lines known from the grid structure. When `None` the solver
    /// extracts lines from the coupling graph.
    fn line_hint(&self) -> Option<LineSet> {
        None
    }

    /// Characteristic residual magnitude, used for the absolute convergence floor.
    fn residual_scale(&self) -> f64 {
        self.residual(&self.initial_state())
            .map(|r| r.norm())
            .ok()
            .filter(|s| s.is_finite() && *s > 0.0)
            .unwrap_or(1.0)
    }
}

impl<S: NonlinearSystem + ?Sized> NonlinearSystem for &S {
    fn layout(&self) -> BlockLayout {
        (**self).layout()
    }
    fn residual(&self, w: &BlockVector) -> Result<BlockVector> {
        (**self).residual(w)
    }
    fn jacobian_vector(&self, w: &BlockVector, v: &BlockVector) -> Result<BlockVector> {
        (**self).jacobian_vector(w, v)
    }
    fn first_order_blocks(&self, w: &BlockVector) -> Result<BlockSparse> {
        (**self).first_order_blocks(w)
    }
    fn mass(&self) -> &MassMatrix {
        (**self).mass()
    }
    fn explicit_dt(&self, w: &BlockVector) -> Result<Vec<f64>> {
        (**self).explicit_dt(w)
    }
    fn initial_state(&self) -> BlockVector {
        (**self).initial_state()
    }
    fn is_admissible(&self, w: &BlockVector) -> bool {
        (**self).is_admissible(w)
    }
    fn functional(&self, w: &BlockVector) -> Option<f64> {
        (**self).functional(w)
    }
    fn line_hint(&self) -> Option<LineSet> {
        (**self).line_hint()
    }
    fn residual_scale(&self) -> f64 {
        (**self).residual_scale()
    }
}

/// Outcome of a finite-difference check of `jacobian_vector`.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianCheck {
    /// Largest `|Jv - fd| / max(|Jv|, |fd|)` over the evaluated probes.
    pub max_relative_error: f64,
    pub probes_evaluated: usize,
    /// Probes whose perturbed states could not be evaluated.
    pub probes_skipped: usize,
}

/// Compares `jacobian_vector(w, v)` with a central difference of the residual
/// along `n_probes` random unit directions drawn from `seed`. Each probe
/// tries a round-off-balanced step for first and for second order
/// differences and keeps the closer match.
pub fn validate_jacobian<S: NonlinearSystem + ?Sized>(
    system: &S,
    w: &BlockVector,
    n_probes: usize,
    seed: u64,
) -> Result<JacobianCheck> {
    let layout = system.layout();
    layout.ensure_same(&w.layout())?;
    let scale = 1.0 + w.norm();
    let steps = [f64::EPSILON.sqrt() * scale, f64::EPSILON.cbrt() * scale];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = JacobianCheck {
        max_relative_error: 0.0,
        probes_evaluated: 0,
        probes_skipped: 0,
    };
    'probe: for _ in 0..n_probes {
        let mut v = BlockVector::from_fn(layout, |_, _| rng.gen_range(-1.0..1.0));
        let n = v.norm();
        v.scale(1.0 / n);

        let jv = system.jacobian_vector(w, &v)?;
        let mut best = f64::INFINITY;
        for eps in steps {
            let plus = system.residual(&w.plus_scaled(eps, &v));
            let minus = system.residual(&w.plus_scaled(-eps, &v));
            let (plus, minus) = match (plus, minus) {
                (Ok(p), Ok(m)) => (p, m),
                (Err(e), _) | (_, Err(e)) => {
                    log::debug!("jacobian probe skipped: {e}");
                    check.probes_skipped += 1;
                    continue 'probe;
                }
            };
            let mut fd = plus.sub(&minus);
            fd.scale(0.5 / eps);
            let denom = jv.norm().max(fd.norm()).max(f64::MIN_POSITIVE);
            best = best.min(jv.sub(&fd).norm() / denom);
        }
        check.max_relative_error = check.max_relative_error.max(best);
        check.probes_evaluated += 1;
    }
    Ok(check)
}
