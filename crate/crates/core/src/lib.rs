//! Pseudo-transient continuation Newton-Krylov solvers with line-implicit
//! Runge-Kutta residual smoothing.
//!
//! A problem implements [`NonlinearSystem`]; [`solve_steady`] drives it to a
//! steady state and [`advance_unsteady`] marches it in physical time with
//! BDF2. Smoothing is switched on by [`PtcConfig::smoothing`].

pub mod block;
pub mod error;
pub mod linalg;
pub mod lines;
pub mod problems;
pub mod ptc;
pub mod record;
pub mod smoother;
pub mod system;
pub mod timestepping;

pub use block::{BlockLayout, BlockSparse, BlockVector, DenseBlock, MassMatrix};
pub use error::{Error, Result};
pub use lines::{build_coupling_graph, extract_lines, CouplingGraph, LineSet};
pub use ptc::{solve_steady, solve_steady_from, Outcome, PtcConfig, SolveReport};
pub use record::ConvergenceRecord;
pub use smoother::{build_smoother, rk_smooth, RkSchedule, SmootherContext};
pub use system::{validate_jacobian, JacobianCheck, NonlinearSystem};
pub use timestepping::{advance_unsteady, advance_unsteady_from, TimeHistory, UnsteadyConfig};
