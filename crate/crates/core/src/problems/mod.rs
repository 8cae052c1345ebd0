//! Built-in test problems.

mod bratu;
mod convdiff;
mod euler;
mod linear;

use serde::{Deserialize, Serialize};

pub use bratu::{make_bratu, BratuProblem, BRATU_FOLD_LAMBDA};
pub use convdiff::{
    geometric_nodes, make_aniso_convdiff, ConvDiffForcing, ConvDiffParams, ConvDiffProblem,
};
pub use euler::{make_quasi1d_euler, EulerParams, NozzleArea, NozzleBoundary, Quasi1dEulerProblem};
pub use linear::LinearSystem;

use crate::block::{BlockLayout, BlockSparse, BlockVector, MassMatrix};
use crate::error::Result;
use crate::lines::LineSet;
use crate::system::NonlinearSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BratuParams {
    pub n_cells: usize,
    pub lambda: f64,
}

impl Default for BratuParams {
    fn default() -> Self {
        Self {
            n_cells: 64,
            lambda: 1.0,
        }
    }
}

/// A built-in problem addressed by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ProblemSpec {
    Bratu(BratuParams),
    Convdiff(ConvDiffParams),
    Euler(EulerParams),
}

impl ProblemSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemSpec::Bratu(_) => "bratu",
            ProblemSpec::Convdiff(_) => "convdiff",
            ProblemSpec::Euler(_) => "euler",
        }
    }

    pub fn build(&self) -> Result<Problem> {
        Ok(match self {
            ProblemSpec::Bratu(p) => Problem::Bratu(make_bratu(p.n_cells, p.lambda)?),
            ProblemSpec::Convdiff(p) => Problem::ConvDiff(ConvDiffProblem::new(p.clone())?),
            ProblemSpec::Euler(p) => Problem::Euler(Quasi1dEulerProblem::new(p.clone())?),
        })
    }
}

/// Any built-in problem behind one concrete type.
#[derive(Debug, Clone)]
pub enum Problem {
    Bratu(BratuProblem),
    ConvDiff(ConvDiffProblem),
    Euler(Quasi1dEulerProblem),
}

macro_rules! dispatch {
    ($self:expr, $p:ident => $e:expr) => {
        match $self {
            Problem::Bratu($p) => $e,
            Problem::ConvDiff($p) => $e,
            Problem::Euler($p) => $e,
        }
    };
}

impl NonlinearSystem for Problem {
    fn layout(&self) -> BlockLayout {
        dispatch!(self, p => p.layout())
    }
    fn residual(&self, w: &BlockVector) -> Result<BlockVector> {
        dispatch!(self, p => p.residual(w))
    }
    fn jacobian_vector(&self, w: &BlockVector, v: &BlockVector) -> Result<BlockVector> {
        dispatch!(self, p => p.jacobian_vector(w, v))
    }
    fn first_order_blocks(&self, w: &BlockVector) -> Result<BlockSparse> {
        dispatch!(self, p => p.first_order_blocks(w))
    }
    fn mass(&self) -> &MassMatrix {
        dispatch!(self, p => p.mass())
    }
    fn explicit_dt(&self, w: &BlockVector) -> Result<Vec<f64>> {
        dispatch!(self, p => p.explicit_dt(w))
    }
    fn initial_state(&self) -> BlockVector {
        dispatch!(self, p => p.initial_state())
    }
    fn is_admissible(&self, w: &BlockVector) -> bool {
        dispatch!(self, p => p.is_admissible(w))
    }
    fn functional(&self, w: &BlockVector) -> Option<f64> {
        dispatch!(self, p => p.functional(w))
    }
    fn residual_scale(&self) -> f64 {
        dispatch!(self, p => p.residual_scale())
    }
    fn line_hint(&self) -> Option<LineSet> {
        dispatch!(self, p => p.line_hint())
    }
}
