//! Steady convection-diffusion-reaction on a tensor grid stretched towards
//! the wall `y = 0`:
//!
//! ```text
//! -eps lap(u) + v . grad(u) + sigma u |u| = f      on (0, Lx) x (0, Ly)
//! ```
//!
//! Vertex-centred finite volumes on the dual mesh: unknowns live on interior
//! nodes, boundary nodes carry Dirichlet data. The residual uses central
//! convection; the first-order blocks use upwind convection.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::block::{BlockLayout, BlockSparse, BlockVector, DenseBlock, MassMatrix};
use crate::error::{Error, Result};
use crate::system::NonlinearSystem;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvDiffForcing {
    /// Forcing and boundary data from
    /// `u = a (1 + sin(pi x / Lx) (1 - exp(-y / delta)))`.
    Manufactured {
        amplitude: f64,
        layer_thickness: f64,
    },
    /// `f = 0` with constant boundary data.
    Zero { boundary_value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvDiffParams {
    /// Intervals in x.
    pub nx: usize,
    /// Intervals in y.
    pub ny: usize,
    /// Aspect ratio `hx / hy` of the cells on the wall.
    pub stretching_ratio: f64,
    pub eps: f64,
    pub velocity: [f64; 2],
    /// Coefficient of `u |u|`.
    pub reaction: f64,
    pub length: [f64; 2],
    pub forcing: ConvDiffForcing,
    /// Uniform value of the impulsive start.
    pub initial_value: f64,
}

impl Default for ConvDiffParams {
    fn default() -> Self {
        Self {
            nx: 24,
            ny: 24,
            stretching_ratio: 1e3,
            eps: 0.01,
            velocity: [1.0, 0.2],
            reaction: 1.0,
            length: [1.0, 1.0],
            forcing: ConvDiffForcing::Manufactured {
                amplitude: 1.0,
                layer_thickness: 0.05,
            },
            initial_value: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Neighbor {
    Cell(usize),
    Boundary(f64),
}

#[derive(Debug, Clone)]
struct Stencil {
    /// West, east, south, north.
    neighbors: [Neighbor; 4],
    /// Diffusive face coefficients `eps * face / distance`.
    diffusion: [f64; 4],
    /// Outward convective face fluxes `v . n * face`.
    flux: [f64; 4],
    volume: f64,
    /// `volume * f` at the node.
    source: f64,
}

#[derive(Debug, Clone)]
pub struct ConvDiffProblem {
    params: ConvDiffParams,
    x: Vec<f64>,
    y: Vec<f64>,
    stencils: Vec<Stencil>,
    mass: MassMatrix,
}

/// Defaults for everything but the named parameters.
pub fn make_aniso_convdiff(
    nx: usize,
    ny: usize,
    stretching_ratio: f64,
    eps: f64,
    reaction: f64,
) -> Result<ConvDiffProblem> {
    ConvDiffProblem::new(ConvDiffParams {
        nx,
        ny,
        stretching_ratio,
        eps,
        reaction,
        ..ConvDiffParams::default()
    })
}

/// Wall-clustered node coordinates on `[0, length]`: `n` geometric intervals
/// whose first one is `first`.
pub fn geometric_nodes(n: usize, length: f64, first: f64) -> Result<Vec<f64>> {
    if n == 0 || !(first > 0.0 && first <= length) {
        return Err(Error::InvalidConfig(format!(
            "cannot fit {n} geometric intervals of first size {first} in {length}"
        )));
    }
    let total = |r: f64| {
        if (r - 1.0).abs() < 1e-12 {
            first * n as f64
        } else {
            first * (r.powi(n as i32) - 1.0) / (r - 1.0)
        }
    };
    let ratio = if (first * n as f64 - length).abs() <= 1e-12 * length {
        1.0
    } else {
        let (mut lo, mut hi) = if first * (n as f64) < length {
            (1.0, 2.0)
        } else {
            (1e-6, 1.0)
        };
        while total(hi) < length {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid) < length {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let mut nodes = Vec::with_capacity(n + 1);
    let mut y = 0.0;
    let mut h = first;
    nodes.push(0.0);
    for _ in 0..n {
        y += h;
        h *= ratio;
        nodes.push(y);
    }
    let scale = length / y;
    for v in &mut nodes {
        *v *= scale;
    }
    nodes[n] = length;
    Ok(nodes)
}

impl ConvDiffProblem {
    pub fn new(params: ConvDiffParams) -> Result<Self> {
        if params.nx < 4 || params.ny < 4 {
            return Err(Error::InvalidConfig(format!(
                "convection-diffusion grid needs nx, ny >= 4, got {} x {}",
                params.nx, params.ny
            )));
        }
        if !(params.stretching_ratio >= 1.0 && params.stretching_ratio.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "stretching ratio {} must be >= 1",
                params.stretching_ratio
            )));
        }
        let [lx, ly] = params.length;
        if !(lx > 0.0 && ly > 0.0) {
            return Err(Error::InvalidConfig(
                "domain lengths must be positive".into(),
            ));
        }
        let hx = lx / params.nx as f64;
        let x: Vec<f64> = (0..=params.nx).map(|i| i as f64 * hx).collect();
        let y = geometric_nodes(params.ny, ly, hx / params.stretching_ratio)?;
        Self::from_nodes(x, y, params)
    }

    /// Build on explicit node coordinates; `params.nx`, `params.ny` and
    /// `params.stretching_ratio` are overwritten to describe the grid.
    pub fn from_nodes(x: Vec<f64>, y: Vec<f64>, mut params: ConvDiffParams) -> Result<Self> {
        let increasing = |v: &[f64]| v.windows(2).all(|p| p[1] > p[0]);
        if x.len() < 5 || y.len() < 5 || !increasing(&x) || !increasing(&y) {
            return Err(Error::InvalidConfig(
                "node coordinates must be increasing with at least 4 intervals".into(),
            ));
        }
        if !(params.eps > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "diffusivity {} must be positive",
                params.eps
            )));
        }
        if !(params.reaction >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "reaction coefficient {} must be >= 0",
                params.reaction
            )));
        }
        if let ConvDiffForcing::Manufactured {
            layer_thickness, ..
        } = params.forcing
        {
            if !(layer_thickness > 0.0) {
                return Err(Error::InvalidConfig(
                    "layer thickness must be positive".into(),
                ));
            }
        }
        params.nx = x.len() - 1;
        params.ny = y.len() - 1;
        params.length = [x[params.nx] - x[0], y[params.ny] - y[0]];
        params.stretching_ratio = (x[1] - x[0]) / (y[1] - y[0]);

        let (mx, my) = (params.nx - 1, params.ny - 1);
        let n = mx * my;
        let mut stencils = Vec::with_capacity(n);
        let [vx, vy] = params.velocity;
        let exact = Manufactured::from(&params);
        for j in 1..=my {
            for i in 1..=mx {
                let (hw, he) = (x[i] - x[i - 1], x[i + 1] - x[i]);
                let (hs, hn) = (y[j] - y[j - 1], y[j + 1] - y[j]);
                let dx = 0.5 * (hw + he);
                let dy = 0.5 * (hs + hn);
                let nb = |ii: usize, jj: usize| {
                    if ii == 0 || jj == 0 || ii == params.nx || jj == params.ny {
                        Neighbor::Boundary(exact.boundary(&params, x[ii], y[jj]))
                    } else {
                        Neighbor::Cell((jj - 1) * mx + (ii - 1))
                    }
                };
                let volume = dx * dy;
                let (xp, yp) = (x[i], y[j]);
                stencils.push(Stencil {
                    neighbors: [nb(i - 1, j), nb(i + 1, j), nb(i, j - 1), nb(i, j + 1)],
                    diffusion: [
                        params.eps * dy / hw,
                        params.eps * dy / he,
                        params.eps * dx / hs,
                        params.eps * dx / hn,
                    ],
                    flux: [-vx * dy, vx * dy, -vy * dx, vy * dx],
                    volume,
                    source: volume * exact.forcing(&params, xp, yp),
                });
            }
        }
        let layout = BlockLayout::new(n, 1)?;
        let mass = MassMatrix::new(layout, stencils.iter().map(|s| s.volume).collect())?;
        Ok(Self {
            params,
            x,
            y,
            stencils,
            mass,
        })
    }

    pub fn params(&self) -> &ConvDiffParams {
        &self.params
    }

    pub fn x_nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn y_nodes(&self) -> &[f64] {
        &self.y
    }

    /// Interior nodes per grid row.
    pub fn row_length(&self) -> usize {
        self.params.nx - 1
    }

    /// `(i, j)` grid indices of a cell, both starting at 1.
    pub fn node_of(&self, cell: usize) -> (usize, usize) {
        let mx = self.row_length();
        (cell % mx + 1, cell / mx + 1)
    }

    pub fn coordinates(&self, cell: usize) -> (f64, f64) {
        let (i, j) = self.node_of(cell);
        (self.x[i], self.y[j])
    }

    /// The manufactured solution sampled on the interior nodes, if any.
    pub fn exact_solution(&self) -> Option<BlockVector> {
        let exact = Manufactured::from(&self.params);
        if !matches!(self.params.forcing, ConvDiffForcing::Manufactured { .. }) {
            return None;
        }
        Some(BlockVector::from_fn(self.layout(), |cell, _| {
            let (x, y) = self.coordinates(cell);
            exact.value(&self.params, x, y)
        }))
    }

    /// `sqrt(sum R_i^2 / V_i)`: the discrete L2 norm of the pointwise
    /// truncation error when `R` is evaluated at the exact solution.
    pub fn volume_scaled_norm(&self, r: &BlockVector) -> f64 {
        r.values()
            .iter()
            .zip(&self.stencils)
            .map(|(ri, s)| ri * ri / s.volume)
            .sum::<f64>()
            .sqrt()
    }

    fn value(u: &[f64], nb: Neighbor) -> f64 {
        match nb {
            Neighbor::Cell(k) => u[k],
            Neighbor::Boundary(b) => b,
        }
    }
}

/// Closed-form manufactured solution and its forcing.
struct Manufactured {
    amplitude: f64,
    delta: f64,
    zero_value: Option<f64>,
}

impl Manufactured {
    fn from(p: &ConvDiffParams) -> Self {
        match p.forcing {
            ConvDiffForcing::Manufactured {
                amplitude,
                layer_thickness,
            } => Self {
                amplitude,
                delta: layer_thickness,
                zero_value: None,
            },
            ConvDiffForcing::Zero { boundary_value } => Self {
                amplitude: 0.0,
                delta: 1.0,
                zero_value: Some(boundary_value),
            },
        }
    }

    fn value(&self, p: &ConvDiffParams, x: f64, y: f64) -> f64 {
        let a = self.amplitude;
        let k = PI / p.length[0];
        a * (1.0 + (k * x).sin() * (1.0 - (-y / self.delta).exp()))
    }

    fn boundary(&self, p: &ConvDiffParams, x: f64, y: f64) -> f64 {
        self.zero_value.unwrap_or_else(|| self.value(p, x, y))
    }

    fn forcing(&self, p: &ConvDiffParams, x: f64, y: f64) -> f64 {
        if self.zero_value.is_some() {
            return 0.0;
        }
        let (a, d) = (self.amplitude, self.delta);
        let k = PI / p.length[0];
        let (s, c) = (k * x).sin_cos();
        let e = (-y / d).exp();
        let g = 1.0 - e;
        let u = a * (1.0 + s * g);
        let ux = a * k * c * g;
        let uxx = -a * k * k * s * g;
        let uy = a * s * e / d;
        let uyy = -a * s * e / (d * d);
        let [vx, vy] = p.velocity;
        -p.eps * (uxx + uyy) + vx * ux + vy * uy + p.reaction * u * u.abs()
    }
}

impl NonlinearSystem for ConvDiffProblem {
    fn layout(&self) -> BlockLayout {
        self.mass.layout()
    }

    fn residual(&self, w: &BlockVector) -> Result<BlockVector> {
        self.layout().ensure_same(&w.layout())?;
        let u = w.values();
        let sigma = self.params.reaction;
        let r = self
            .stencils
            .iter()
            .enumerate()
            .map(|(p, s)| {
                let up = u[p];
                let mut acc = s.volume * sigma * up * up.abs() - s.source;
                for k in 0..4 {
                    let uk = Self::value(u, s.neighbors[k]);
                    acc += s.diffusion[k] * (up - uk) + 0.5 * s.flux[k] * (up + uk);
                }
                acc
            })
            .collect();
        BlockVector::from_values(self.layout(), r)
    }

    fn jacobian_vector(&self, w: &BlockVector, v: &BlockVector) -> Result<BlockVector> {
        self.layout().ensure_same(&w.layout())?;
        self.layout().ensure_same(&v.layout())?;
        let (u, dv) = (w.values(), v.values());
        let sigma = self.params.reaction;
        let out = self
            .stencils
            .iter()
            .enumerate()
            .map(|(p, s)| {
                let mut acc = 2.0 * s.volume * sigma * u[p].abs() * dv[p];
                for k in 0..4 {
                    let vk = match s.neighbors[k] {
                        Neighbor::Cell(c) => dv[c],
                        Neighbor::Boundary(_) => 0.0,
                    };
                    acc += s.diffusion[k] * (dv[p] - vk) + 0.5 * s.flux[k] * (dv[p] + vk);
                }
                acc
            })
            .collect();
        BlockVector::from_values(self.layout(), out)
    }

    fn first_order_blocks(&self, w: &BlockVector) -> Result<BlockSparse> {
        self.layout().ensure_same(&w.layout())?;
        let u = w.values();
        let sigma = self.params.reaction;
        let mut blocks = BlockSparse::new(self.layout());
        for (p, s) in self.stencils.iter().enumerate() {
            let mut diag = 2.0 * s.volume * sigma * u[p].abs();
            for k in 0..4 {
                let q = s.flux[k];
                diag += s.diffusion[k] + q.max(0.0);
                if let Neighbor::Cell(c) = s.neighbors[k] {
                    *blocks.off_mut(p, c) = DenseBlock::scalar(-s.diffusion[k] + q.min(0.0));
                }
            }
            *blocks.diag_mut(p) = DenseBlock::scalar(diag);
        }
        Ok(blocks)
    }

    fn mass(&self) -> &MassMatrix {
        &self.mass
    }

    fn explicit_dt(&self, _w: &BlockVector) -> Result<Vec<f64>> {
        Ok(self
            .stencils
            .iter()
            .map(|s| {
                let spectral: f64 = s.diffusion.iter().sum::<f64>()
                    + s.flux.iter().map(|q| q.max(0.0)).sum::<f64>();
                s.volume / spectral
            })
            .collect())
    }

    fn initial_state(&self) -> BlockVector {
        BlockVector::from_fn(self.layout(), |_, _| self.params.initial_value)
    }

    fn functional(&self, w: &BlockVector) -> Option<f64> {
        Some(
            w.values()
                .iter()
                .zip(&self.stencils)
                .map(|(u, s)| u * s.volume)
                .sum(),
        )
    }
}
