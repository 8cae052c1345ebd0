//! Matrix-free Krylov solver and the block-structured direct kernels used as
//! preconditioners and smoothers.

mod gmres;
mod tridiag;

pub use gmres::{gmres_right_preconditioned, GmresStats};
pub use tridiag::{factor_block_tridiag, solve_block_tridiag, BlockTridiagFactorization};

use crate::block::{BlockLayout, BlockVector};
use crate::error::Result;

/// A linear map on block vectors.
pub trait LinearOperator {
    fn layout(&self) -> BlockLayout;
    fn apply(&self, v: &BlockVector) -> Result<BlockVector>;
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn layout(&self) -> BlockLayout {
        (**self).layout()
    }
    fn apply(&self, v: &BlockVector) -> Result<BlockVector> {
        (**self).apply(v)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IdentityOperator(pub BlockLayout);

impl LinearOperator for IdentityOperator {
    fn layout(&self) -> BlockLayout {
        self.0
    }
    fn apply(&self, v: &BlockVector) -> Result<BlockVector> {
        self.0.ensure_same(&v.layout())?;
        Ok(v.clone())
    }
}

/// Wraps a closure as an operator.
pub struct FnOperator<F> {
    layout: BlockLayout,
    f: F,
}

impl<F> FnOperator<F>
where
    F: Fn(&BlockVector) -> Result<BlockVector>,
{
    pub fn new(layout: BlockLayout, f: F) -> Self {
        Self { layout, f }
    }
}

impl<F> LinearOperator for FnOperator<F>
where
    F: Fn(&BlockVector) -> Result<BlockVector>,
{
    fn layout(&self) -> BlockLayout {
        self.layout
    }
    fn apply(&self, v: &BlockVector) -> Result<BlockVector> {
        self.layout.ensure_same(&v.layout())?;
        (self.f)(v)
    }
}

impl LinearOperator for crate::block::BlockSparse {
    fn layout(&self) -> BlockLayout {
        crate::block::BlockSparse::layout(self)
    }
    fn apply(&self, v: &BlockVector) -> Result<BlockVector> {
        crate::block::BlockSparse::apply(self, v)
    }
}
