use super::LinearOperator;
use crate::block::{BlockLayout, BlockLu, BlockSparse, BlockVector, DenseBlock};
use crate::error::{Error, Result};
use crate::lines::LineSet;

/// Block LU (Thomas) factors of the line-restricted operator.
///
/// Only the off-diagonal blocks joining consecutive cells of a line are
/// retained; everything else in the source matrix is dropped. Singleton lines
/// reduce to a factored diagonal block.
#[derive(Debug, Clone)]
pub struct BlockTridiagFactorization {
    layout: BlockLayout,
    lines: Vec<LineFactor>,
}

#[derive(Debug, Clone)]
struct LineFactor {
    cells: Vec<usize>,
    /// LU of the Schur pivots `U_k`.
    pivots: Vec<BlockLu>,
    /// `A_k = O(c_k, c_{k-1})` for k >= 1.
    lower: Vec<DenseBlock>,
    /// `X_k = U_k^{-1} O(c_k, c_{k+1})` for k < last.
    upper: Vec<DenseBlock>,
}

/// Factor `blocks` restricted to the tridiagonal structure of each line.
pub fn factor_block_tridiag(
    lines: &LineSet,
    blocks: &BlockSparse,
) -> Result<BlockTridiagFactorization> {
    let layout = blocks.layout();
    if lines.n_cells() != layout.n_cells() {
        return Err(Error::InvalidConfig(format!(
            "line set covers {} cells, blocks have {}",
            lines.n_cells(),
            layout.n_cells()
        )));
    }
    let b = layout.block_size();
    let zero = DenseBlock::zeros(b);
    let factors = lines
        .lines()
        .iter()
        .enumerate()
        .map(|(line_idx, cells)| {
            let singular = |position| Error::SingularPivot {
                line: line_idx,
                position,
            };
            let mut pivots = Vec::with_capacity(cells.len());
            let mut lower = Vec::with_capacity(cells.len().saturating_sub(1));
            let mut upper = Vec::with_capacity(cells.len().saturating_sub(1));
            let mut pivot = blocks.diag(cells[0]).clone();
            for k in 0..cells.len() {
                if k > 0 {
                    let a = blocks.off(cells[k], cells[k - 1]).unwrap_or(&zero).clone();
                    pivot = blocks.diag(cells[k]).clone();
                    pivot.sub_assign(&a.matmul(&upper[k - 1]));
                    lower.push(a);
                }
                let lu = pivot.lu().ok_or_else(|| singular(k))?;
                if k + 1 < cells.len() {
                    let c = blocks.off(cells[k], cells[k + 1]).unwrap_or(&zero);
                    upper.push(lu.solve_block(c));
                }
                pivots.push(lu);
            }
            Ok(LineFactor {
                cells: cells.clone(),
                pivots,
                lower,
                upper,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlockTridiagFactorization {
        layout,
        lines: factors,
    })
}

/// Solve `T x = r` line by line.
pub fn solve_block_tridiag(f: &BlockTridiagFactorization, r: &BlockVector) -> Result<BlockVector> {
    f.layout.ensure_same(&r.layout())?;
    let b = f.layout.block_size();
    let mut x = BlockVector::zeros(f.layout);
    let mut y: Vec<Vec<f64>> = Vec::new();
    for line in &f.lines {
        let m = line.cells.len();
        y.clear();
        for k in 0..m {
            let mut yk = r.cell(line.cells[k]).to_vec();
            if k > 0 {
                line.lower[k - 1].mul_vec_sub(&y[k - 1], &mut yk);
            }
            line.pivots[k].solve(&mut yk);
            y.push(yk);
        }
        for k in (0..m.saturating_sub(1)).rev() {
            let next = y[k + 1].clone();
            line.upper[k].mul_vec_sub(&next, &mut y[k]);
        }
        for (k, &cell) in line.cells.iter().enumerate() {
            x.cell_mut(cell)[..b].copy_from_slice(&y[k]);
        }
    }
    Ok(x)
}

impl BlockTridiagFactorization {
    pub fn layout(&self) -> BlockLayout {
        self.layout
    }

    pub fn solve(&self, r: &BlockVector) -> Result<BlockVector> {
        solve_block_tridiag(self, r)
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }
}

impl LinearOperator for BlockTridiagFactorization {
    fn layout(&self) -> BlockLayout {
        self.layout
    }

    fn apply(&self, v: &BlockVector) -> Result<BlockVector> {
        self.solve(v)
    }
}
