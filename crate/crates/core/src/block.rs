//! Cell-blocked storage: layouts, state vectors, the diagonal mass matrix and
//! the small dense blocks that make up first-order Jacobians.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of cells and equations per cell. Storage is cell-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockLayout {
    n_cells: usize,
    block_size: usize,
}

impl BlockLayout {
    pub fn new(n_cells: usize, block_size: usize) -> Result<Self> {
        if n_cells == 0 || block_size == 0 {
            return Err(Error::InvalidConfig(format!(
                "layout needs positive sizes, got {n_cells} cells x {block_size}"
            )));
        }
        Ok(Self {
            n_cells,
            block_size,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn len(&self) -> usize {
        self.n_cells * self.block_size
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ensure_same(&self, other: &BlockLayout) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::LayoutMismatch {
                expected: *self,
                found: *other,
            })
        }
    }
}

impl fmt::Display for BlockLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} cells x {}", self.n_cells, self.block_size)
    }
}

/// State, update or residual vector with `block_size` entries per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockVector {
    layout: BlockLayout,
    values: Vec<f64>,
}

impl BlockVector {
    pub fn zeros(layout: BlockLayout) -> Self {
        Self {
            layout,
            values: vec![0.0; layout.len()],
        }
    }

    pub fn from_values(layout: BlockLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::InvalidConfig(format!(
                "vector of length {} does not match layout {layout}",
                values.len()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn from_fn(layout: BlockLayout, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let b = layout.block_size();
        let values = (0..layout.len()).map(|k| f(k / b, k % b)).collect();
        Self { layout, values }
    }

    pub fn layout(&self) -> BlockLayout {
        self.layout
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn cell(&self, i: usize) -> &[f64] {
        let b = self.layout.block_size();
        &self.values[i * b..(i + 1) * b]
    }

    pub fn cell_mut(&mut self, i: usize) -> &mut [f64] {
        let b = self.layout.block_size();
        &mut self.values[i * b..(i + 1) * b]
    }

    /// Index of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|v| !v.is_finite())
    }

    pub fn is_finite(&self) -> bool {
        self.first_non_finite().is_none()
    }

    pub fn validate(&self) -> Result<()> {
        match self.first_non_finite() {
            Some(index) => Err(Error::NonFinite { index }),
            None => Ok(()),
        }
    }

    /// Euclidean norm; rejects NaN/Inf entries.
    pub fn l2_norm(&self) -> Result<f64> {
        self.validate()?;
        Ok(self.norm())
    }

    /// Euclidean norm without the finiteness check (NaN propagates).
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &BlockVector) -> f64 {
        debug_assert_eq!(self.layout, other.layout);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// `self += a * x`
    pub fn axpy(&mut self, a: f64, x: &BlockVector) {
        debug_assert_eq!(self.layout, x.layout);
        for (s, xv) in self.values.iter_mut().zip(&x.values) {
            *s += a * xv;
        }
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> BlockVector {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    pub fn add(&self, other: &BlockVector) -> BlockVector {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &BlockVector) -> BlockVector {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// `self + a * x` as a new vector.
    pub fn plus_scaled(&self, a: f64, x: &BlockVector) -> BlockVector {
        let mut out = self.clone();
        out.axpy(a, x);
        out
    }
}

/// Diagonal mass matrix: each cell's block is `measure * I`.
#[derive(Debug, Clone, PartialEq)]
pub struct MassMatrix {
    layout: BlockLayout,
    cell_measures: Vec<f64>,
}

impl MassMatrix {
    pub fn new(layout: BlockLayout, cell_measures: Vec<f64>) -> Result<Self> {
        if cell_measures.len() != layout.n_cells() {
            return Err(Error::InvalidConfig(format!(
                "{} cell measures for layout {layout}",
                cell_measures.len()
            )));
        }
        if let Some(cell) = cell_measures
            .iter()
            .position(|m| !(*m > 0.0 && m.is_finite()))
        {
            return Err(Error::InvalidConfig(format!(
                "cell measure {} in cell {cell} is not positive",
                cell_measures[cell]
            )));
        }
        Ok(Self {
            layout,
            cell_measures,
        })
    }

    pub fn layout(&self) -> BlockLayout {
        self.layout
    }

    pub fn cell_measures(&self) -> &[f64] {
        &self.cell_measures
    }

    pub fn apply(&self, v: &BlockVector) -> Result<BlockVector> {
        self.layout.ensure_same(&v.layout())?;
        let mut out = v.clone();
        for (i, m) in self.cell_measures.iter().enumerate() {
            out.cell_mut(i).iter_mut().for_each(|x| *x *= m);
        }
        Ok(out)
    }

    /// Per-cell `measure / dtau`.
    pub fn over_timesteps(&self, dtau: &[f64]) -> Result<Vec<f64>> {
        if dtau.len() != self.cell_measures.len() {
            return Err(Error::InvalidConfig(format!(
                "{} time steps for {} cells",
                dtau.len(),
                self.cell_measures.len()
            )));
        }
        self.cell_measures
            .iter()
            .zip(dtau)
            .enumerate()
            .map(|(cell, (m, dt))| {
                if *dt > 0.0 {
                    Ok(m / dt)
                } else {
                    Err(Error::NonPositiveTimestep { cell, value: *dt })
                }
            })
            .collect()
    }
}

/// Scale every entry of cell `i` by `weights[i]`.
pub(crate) fn scale_cells(v: &BlockVector, weights: &[f64]) -> BlockVector {
    let mut out = v.clone();
    for (i, w) in weights.iter().enumerate() {
        out.cell_mut(i).iter_mut().for_each(|x| *x *= w);
    }
    out
}

/// Small dense square block, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlock {
    n: usize,
    data: Vec<f64>,
}

impl DenseBlock {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut b = Self::zeros(n);
        for i in 0..n {
            b.data[i * n + i] = 1.0;
        }
        b
    }

    pub fn from_rows(n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n, "block data length");
        Self { n, data }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            n: 1,
            data: vec![v],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn add_to_diagonal(&mut self, v: f64) {
        for i in 0..self.n {
            self.data[i * self.n + i] += v;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.data.iter_mut().for_each(|x| *x *= a);
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// `y += self * x`
    pub fn mul_vec_add(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            y[i] += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// `y -= self * x`
    pub fn mul_vec_sub(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            y[i] -= row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn matmul(&self, other: &DenseBlock) -> DenseBlock {
        let n = self.n;
        let mut out = DenseBlock::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn sub_assign(&mut self, other: &DenseBlock) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
    }

    pub fn add_assign(&mut self, other: &DenseBlock) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// LU with partial pivoting inside the block. `None` when singular.
    pub fn lu(&self) -> Option<BlockLu> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = self.frobenius_norm().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|r| (r, a[r * n + k].abs()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if !(pmax > 1e-14 * scale) {
                return None;
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let piv = a[k * n + k];
            for r in k + 1..n {
                let l = a[r * n + k] / piv;
                a[r * n + k] = l;
                for j in k + 1..n {
                    a[r * n + j] -= l * a[k * n + j];
                }
            }
        }
        Some(BlockLu { n, lu: a, perm })
    }
}

/// Factored dense block.
#[derive(Debug, Clone)]
pub struct BlockLu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl BlockLu {
    /// Solve in place.
    pub fn solve(&self, x: &mut [f64]) {
        let n = self.n;
        let b: Vec<f64> = self.perm.iter().map(|&p| x[p]).collect();
        x[..n].copy_from_slice(&b);
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
    }

    /// `self^{-1} * m`
    pub fn solve_block(&self, m: &DenseBlock) -> DenseBlock {
        let n = self.n;
        let mut out = DenseBlock::zeros(n);
        let mut col = vec![0.0; n];
        for j in 0..n {
            for i in 0..n {
                col[i] = m.get(i, j);
            }
            self.solve(&mut col);
            for i in 0..n {
                out.set(i, j, col[i]);
            }
        }
        out
    }
}

/// First-order Jacobian in block form: one diagonal block per cell plus
/// off-diagonal blocks `O_ij` (row cell `i`, column cell `j`) on the
/// nearest-neighbour coupling graph.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSparse {
    layout: BlockLayout,
    diag: Vec<DenseBlock>,
    off: BTreeMap<(usize, usize), DenseBlock>,
}

impl BlockSparse {
    pub fn new(layout: BlockLayout) -> Self {
        let b = layout.block_size();
        Self {
            layout,
            diag: vec![DenseBlock::zeros(b); layout.n_cells()],
            off: BTreeMap::new(),
        }
    }

    pub fn layout(&self) -> BlockLayout {
        self.layout
    }

    pub fn diag(&self, i: usize) -> &DenseBlock {
        &self.diag[i]
    }

    pub fn diag_mut(&mut self, i: usize) -> &mut DenseBlock {
        &mut self.diag[i]
    }

    pub fn off(&self, i: usize, j: usize) -> Option<&DenseBlock> {
        self.off.get(&(i, j))
    }

    /// Mutable access to `O_ij`, creating a zero block if absent.
    pub fn off_mut(&mut self, i: usize, j: usize) -> &mut DenseBlock {
        assert_ne!(i, j, "off-diagonal block on the diagonal");
        let b = self.layout.block_size();
        self.off
            .entry((i, j))
            .or_insert_with(|| DenseBlock::zeros(b))
    }

    pub fn off_blocks(&self) -> impl Iterator<Item = (usize, usize, &DenseBlock)> {
        self.off.iter().map(|(&(i, j), b)| (i, j, b))
    }

    /// Add `shift[i] * I` to each diagonal block.
    pub fn shift_diagonal(&mut self, shift: &[f64]) {
        for (d, s) in self.diag.iter_mut().zip(shift) {
            d.add_to_diagonal(*s);
        }
    }

    pub fn apply(&self, v: &BlockVector) -> Result<BlockVector> {
        self.layout.ensure_same(&v.layout())?;
        let mut out = BlockVector::zeros(self.layout);
        for (i, d) in self.diag.iter().enumerate() {
            d.mul_vec_add(v.cell(i), out.cell_mut(i));
        }
        for (&(i, j), o) in &self.off {
            o.mul_vec_add(v.cell(j), out.cell_mut(i));
        }
        Ok(out)
    }
}
