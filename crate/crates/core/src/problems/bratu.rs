//! One-dimensional Bratu problem `-u'' = lambda exp(u)` on (0, 1) with
//! homogeneous Dirichlet data, second-order differences on a uniform grid.

use crate::block::{BlockLayout, BlockSparse, BlockVector, DenseBlock, MassMatrix};
use crate::error::{Error, Result};
use crate::system::NonlinearSystem;

/// Approximate fold point of the continuous problem.
pub const BRATU_FOLD_LAMBDA: f64 = 3.513_830_719;

#[derive(Debug, Clone)]
pub struct BratuProblem {
    n_cells: usize,
    lambda: f64,
    h: f64,
    mass: MassMatrix,
}

/// `n_cells` interior nodes at `x_i = (i + 1) h`, `h = 1 / (n_cells + 1)`.
pub fn make_bratu(n_cells: usize, lambda: f64) -> Result<BratuProblem> {
    BratuProblem::new(n_cells, lambda)
}

impl BratuProblem {
    pub fn new(n_cells: usize, lambda: f64) -> Result<Self> {
        if n_cells < 3 {
            return Err(Error::InvalidConfig(format!(
                "Bratu needs at least 3 cells, got {n_cells}"
            )));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "Bratu lambda {lambda} must be >= 0"
            )));
        }
        let h = 1.0 / (n_cells + 1) as f64;
        let layout = BlockLayout::new(n_cells, 1)?;
        let mass = MassMatrix::new(layout, vec![h; n_cells])?;
        Ok(Self {
            n_cells,
            lambda,
            h,
            mass,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn node(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.h
    }

    fn second_difference(&self, u: &[f64], i: usize) -> f64 {
        let left = if i > 0 { u[i - 1] } else { 0.0 };
        let right = if i + 1 < self.n_cells { u[i + 1] } else { 0.0 };
        (left - 2.0 * u[i] + right) / (self.h * self.h)
    }
}

impl NonlinearSystem for BratuProblem {
    fn layout(&self) -> BlockLayout {
        self.mass.layout()
    }

    fn residual(&self, w: &BlockVector) -> Result<BlockVector> {
        self.layout().ensure_same(&w.layout())?;
        let u = w.values();
        let r = (0..self.n_cells)
            .map(|i| -self.second_difference(u, i) - self.lambda * u[i].exp())
            .collect();
        BlockVector::from_values(self.layout(), r)
    }

    fn jacobian_vector(&self, w: &BlockVector, v: &BlockVector) -> Result<BlockVector> {
        self.layout().ensure_same(&w.layout())?;
        self.layout().ensure_same(&v.layout())?;
        let (u, dv) = (w.values(), v.values());
        let out = (0..self.n_cells)
            .map(|i| -self.second_difference(dv, i) - self.lambda * u[i].exp() * dv[i])
            .collect();
        BlockVector::from_values(self.layout(), out)
    }

    fn first_order_blocks(&self, w: &BlockVector) -> Result<BlockSparse> {
        self.layout().ensure_same(&w.layout())?;
        let h2 = self.h * self.h;
        let mut blocks = BlockSparse::new(self.layout());
        for (i, u) in w.values().iter().enumerate() {
            *blocks.diag_mut(i) = DenseBlock::scalar(2.0 / h2 - self.lambda * u.exp());
            if i + 1 < self.n_cells {
                *blocks.off_mut(i, i + 1) = DenseBlock::scalar(-1.0 / h2);
                *blocks.off_mut(i + 1, i) = DenseBlock::scalar(-1.0 / h2);
            }
        }
        Ok(blocks)
    }

    fn mass(&self) -> &MassMatrix {
        &self.mass
    }

    fn explicit_dt(&self, _w: &BlockVector) -> Result<Vec<f64>> {
        Ok(vec![self.h * self.h / 4.0; self.n_cells])
    }

    fn initial_state(&self) -> BlockVector {
        BlockVector::zeros(self.layout())
    }

    fn functional(&self, w: &BlockVector) -> Option<f64> {
        Some(self.h * w.values().iter().sum::<f64>())
    }
}
