//! Affine test system `R(w) = A w - b` with a block-sparse `A`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::block::{BlockLayout, BlockSparse, BlockVector, DenseBlock, MassMatrix};
use crate::error::Result;
use crate::system::NonlinearSystem;

#[derive(Debug, Clone)]
pub struct LinearSystem {
    matrix: BlockSparse,
    rhs: BlockVector,
    mass: MassMatrix,
    initial: BlockVector,
}

impl LinearSystem {
    /// Unit cell measures, zero initial state.
    pub fn new(matrix: BlockSparse, rhs: BlockVector) -> Result<Self> {
        let layout = matrix.layout();
        layout.ensure_same(&rhs.layout())?;
        let mass = MassMatrix::new(layout, vec![1.0; layout.n_cells()])?;
        Ok(Self {
            matrix,
            rhs,
            mass,
            initial: BlockVector::zeros(layout),
        })
    }

    pub fn with_initial_state(mut self, w0: BlockVector) -> Result<Self> {
        self.matrix.layout().ensure_same(&w0.layout())?;
        self.initial = w0;
        Ok(self)
    }

    pub fn matrix(&self) -> &BlockSparse {
        &self.matrix
    }

    pub fn rhs(&self) -> &BlockVector {
        &self.rhs
    }

    /// Scalar `-u'' = 1` chain with `n` unknowns and unit spacing.
    pub fn diffusion_chain(n: usize) -> Result<Self> {
        let layout = BlockLayout::new(n, 1)?;
        let mut a = BlockSparse::new(layout);
        for i in 0..n {
            *a.diag_mut(i) = DenseBlock::scalar(2.0);
            if i + 1 < n {
                *a.off_mut(i, i + 1) = DenseBlock::scalar(-1.0);
                *a.off_mut(i + 1, i) = DenseBlock::scalar(-1.0);
            }
        }
        Self::new(a, BlockVector::from_fn(layout, |_, _| 1.0))
    }

    /// Random block-tridiagonal chain with diagonally dominant blocks.
    pub fn random_chain(n: usize, block_size: usize, seed: u64) -> Result<Self> {
        let layout = BlockLayout::new(n, block_size)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = block_size;
        let random_block = |rng: &mut ChaCha8Rng, scale: f64| {
            let data = (0..b * b)
                .map(|_| scale * rng.gen_range(-1.0..1.0))
                .collect();
            DenseBlock::from_rows(b, data)
        };
        let mut a = BlockSparse::new(layout);
        for i in 0..n {
            let mut d = random_block(&mut rng, 1.0);
            d.add_to_diagonal(2.0 * b as f64 + 2.0);
            *a.diag_mut(i) = d;
            if i + 1 < n {
                *a.off_mut(i, i + 1) = random_block(&mut rng, 1.0);
                *a.off_mut(i + 1, i) = random_block(&mut rng, 1.0);
            }
        }
        let rhs = BlockVector::from_fn(layout, |_, _| rng.gen_range(-1.0..1.0));
        Self::new(a, rhs)
    }
}

impl NonlinearSystem for LinearSystem {
    fn layout(&self) -> BlockLayout {
        self.matrix.layout()
    }

    fn residual(&self, w: &BlockVector) -> Result<BlockVector> {
        let mut r = self.matrix.apply(w)?;
        r.axpy(-1.0, &self.rhs);
        Ok(r)
    }

    fn jacobian_vector(&self, _w: &BlockVector, v: &BlockVector) -> Result<BlockVector> {
        self.matrix.apply(v)
    }

    fn first_order_blocks(&self, _w: &BlockVector) -> Result<BlockSparse> {
        Ok(self.matrix.clone())
    }

    fn mass(&self) -> &MassMatrix {
        &self.mass
    }

    fn explicit_dt(&self, _w: &BlockVector) -> Result<Vec<f64>> {
        Ok((0..self.layout().n_cells())
            .map(|i| 1.0 / self.matrix.diag(i).frobenius_norm().max(f64::MIN_POSITIVE))
            .collect())
    }

    fn initial_state(&self) -> BlockVector {
        self.initial.clone()
    }
}
