//! Quasi-one-dimensional Euler equations in a converging-diverging nozzle.
//!
//! Conservative unknowns `(rho, rho u, E)` per cell. The residual is
//!
//! ```text
//! R_i = A_{i+1/2} F_{i+1/2} - A_{i-1/2} F_{i-1/2} - (0, p_i (A_{i+1/2} - A_{i-1/2}), 0)
//! ```
//!
//! with Rusanov face fluxes. The second-order residual reconstructs
//! primitive variables with a smooth van Albada limiter (zero slope in the
//! two boundary cells); the first-order blocks linearise the unreconstructed
//! scheme. Subsonic inflow fixes total pressure and temperature, outflow
//! fixes static pressure unless the exit is supersonic.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::block::{BlockLayout, BlockSparse, BlockVector, MassMatrix};
use crate::error::{Error, Result};
use crate::lines::LineSet;
use crate::system::NonlinearSystem;

/// Cosine-blended nozzle with zero slope at inlet, throat and exit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NozzleArea {
    pub inlet: f64,
    pub throat: f64,
    pub exit: f64,
    /// Throat location as a fraction of the nozzle length.
    pub throat_position: f64,
}

impl Default for NozzleArea {
    fn default() -> Self {
        Self {
            inlet: 2.0,
            throat: 1.0,
            exit: 2.0,
            throat_position: 0.5,
        }
    }
}

impl NozzleArea {
    pub fn constant(area: f64) -> Self {
        Self {
            inlet: area,
            throat: area,
            exit: area,
            throat_position: 0.5,
        }
    }

    /// Area at `s = x / length` in [0, 1].
    pub fn at(&self, s: f64) -> f64 {
        let st = self.throat_position;
        if s <= st {
            self.throat + (self.inlet - self.throat) * 0.5 * (1.0 + (PI * s / st).cos())
        } else {
            self.throat
                + (self.exit - self.throat) * 0.5 * (1.0 - (PI * (s - st) / (1.0 - st)).cos())
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.inlet > 0.0 && self.throat > 0.0 && self.exit > 0.0) {
            return Err(Error::InvalidConfig("nozzle areas must be positive".into()));
        }
        if !(self.throat_position > 0.0 && self.throat_position < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "throat position {} outside (0, 1)",
                self.throat_position
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NozzleBoundary {
    pub total_pressure: f64,
    pub total_temperature: f64,
    pub back_pressure: f64,
}

impl Default for NozzleBoundary {
    fn default() -> Self {
        Self {
            total_pressure: 1.0,
            total_temperature: 1.0,
            back_pressure: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EulerParams {
    pub n_cells: usize,
    pub length: f64,
    pub area: NozzleArea,
    pub boundary: NozzleBoundary,
    pub gamma: f64,
    pub gas_constant: f64,
    /// Mach number of the uniform impulsive start.
    pub initial_mach: f64,
    /// Smoothing constant (squared) of the van Albada limiter.
    pub limiter_epsilon: f64,
}

impl Default for EulerParams {
    fn default() -> Self {
        Self {
            n_cells: 64,
            length: 1.0,
            area: NozzleArea::default(),
            boundary: NozzleBoundary::default(),
            gamma: 1.4,
            gas_constant: 1.0,
            initial_mach: 0.5,
            limiter_epsilon: 1e-6,
        }
    }
}

impl EulerParams {
    /// Back pressure low enough to put a normal shock in the diverging part.
    pub fn transonic() -> Self {
        Self {
            n_cells: 96,
            boundary: NozzleBoundary {
                back_pressure: 0.8,
                ..NozzleBoundary::default()
            },
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct Quasi1dEulerProblem {
    params: EulerParams,
    dx: f64,
    /// Areas at the `n_cells + 1` faces.
    face_area: Vec<f64>,
    mass: MassMatrix,
}

pub fn make_quasi1d_euler(
    n_cells: usize,
    area: NozzleArea,
    boundary: NozzleBoundary,
) -> Result<Quasi1dEulerProblem> {
    Quasi1dEulerProblem::new(EulerParams {
        n_cells,
        area,
        boundary,
        ..EulerParams::default()
    })
}

/// Value and tangent of a primitive state `(rho, u, p)`.
#[derive(Debug, Clone, Copy, Default)]
struct Prim {
    v: [f64; 3],
    d: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Order {
    First,
    Second,
}

impl Quasi1dEulerProblem {
    pub fn new(params: EulerParams) -> Result<Self> {
        if params.n_cells < 16 {
            return Err(Error::InvalidConfig(format!(
                "nozzle needs at least 16 cells, got {}",
                params.n_cells
            )));
        }
        params.area.validate()?;
        let b = &params.boundary;
        if !(b.total_pressure > 0.0 && b.total_temperature > 0.0 && b.back_pressure > 0.0) {
            return Err(Error::InvalidConfig(
                "boundary pressures and temperature must be positive".into(),
            ));
        }
        if b.back_pressure > b.total_pressure {
            return Err(Error::InvalidConfig(format!(
                "back pressure {} exceeds total pressure {}",
                b.back_pressure, b.total_pressure
            )));
        }
        if !(params.gamma > 1.0 && params.gas_constant > 0.0 && params.length > 0.0) {
            return Err(Error::InvalidConfig(
                "need gamma > 1 and positive gas constant and length".into(),
            ));
        }
        if !(params.initial_mach >= 0.0 && params.limiter_epsilon > 0.0) {
            return Err(Error::InvalidConfig(
                "initial Mach must be >= 0 and limiter epsilon > 0".into(),
            ));
        }
        let n = params.n_cells;
        let dx = params.length / n as f64;
        let face_area: Vec<f64> = (0..=n)
            .map(|f| params.area.at(f as f64 / n as f64))
            .collect();
        let volumes = (0..n)
            .map(|i| dx * 0.5 * (face_area[i] + face_area[i + 1]))
            .collect();
        let mass = MassMatrix::new(BlockLayout::new(n, 3)?, volumes)?;
        Ok(Self {
            params,
            dx,
            face_area,
            mass,
        })
    }

    pub fn params(&self) -> &EulerParams {
        &self.params
    }

    pub fn spacing(&self) -> f64 {
        self.dx
    }

    pub fn cell_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    pub fn face_areas(&self) -> &[f64] {
        &self.face_area
    }

    /// Conservative state from `(rho, u, p)`.
    pub fn conservative(&self, rho: f64, u: f64, p: f64) -> [f64; 3] {
        [
            rho,
            rho * u,
            p / (self.params.gamma - 1.0) + 0.5 * rho * u * u,
        ]
    }

    /// `(rho, u, p)` from a conservative cell state.
    pub fn primitive(&self, cell: &[f64]) -> [f64; 3] {
        let rho = cell[0];
        let u = cell[1] / rho;
        [
            rho,
            u,
            (self.params.gamma - 1.0) * (cell[2] - 0.5 * cell[1] * u),
        ]
    }

    pub fn mach(&self, cell: &[f64]) -> f64 {
        let [rho, u, p] = self.primitive(cell);
        u / (self.params.gamma * p / rho).sqrt()
    }

    pub fn uniform_state(&self, rho: f64, u: f64, p: f64) -> BlockVector {
        let c = self.conservative(rho, u, p);
        BlockVector::from_fn(self.layout(), |_, k| c[k])
    }

    /// Rusanov face fluxes (not area-weighted), `n_cells + 1` of them.
    pub fn face_fluxes(&self, w: &BlockVector) -> Result<Vec<[f64; 3]>> {
        let (_, fluxes) = self.evaluate(w, None, Order::Second)?;
        Ok(fluxes)
    }

    fn cell_primitive(&self, w: &BlockVector, dw: Option<&BlockVector>, i: usize) -> Result<Prim> {
        let g1 = self.params.gamma - 1.0;
        let c = w.cell(i);
        let rho = c[0];
        if !(rho > 0.0) {
            return Err(Error::Inadmissible {
                cell: i,
                reason: format!("density {rho}"),
            });
        }
        let u = c[1] / rho;
        let p = g1 * (c[2] - 0.5 * c[1] * u);
        if !(p > 0.0) {
            return Err(Error::Inadmissible {
                cell: i,
                reason: format!("pressure {p}"),
            });
        }
        let d = match dw {
            Some(dw) => {
                let t = dw.cell(i);
                [
                    t[0],
                    (t[1] - u * t[0]) / rho,
                    g1 * (t[2] - u * t[1] + 0.5 * u * u * t[0]),
                ]
            }
            None => [0.0; 3],
        };
        Ok(Prim { v: [rho, u, p], d })
    }

    fn sound_speed(&self, q: &Prim) -> (f64, f64) {
        let [rho, _, p] = q.v;
        let c = (self.params.gamma * p / rho).sqrt();
        (c, 0.5 * c * (q.d[2] / p - q.d[0] / rho))
    }

    fn inflow_ghost(&self, q0: &Prim) -> Result<Prim> {
        let (g, r) = (self.params.gamma, self.params.gas_constant);
        let b = &self.params.boundary;
        let cp = g * r / (g - 1.0);
        let k = g / (g - 1.0);
        let (u, du) = (q0.v[1], q0.d[1]);
        let t = b.total_temperature - u * u / (2.0 * cp);
        if !(t > 0.0) {
            return Err(Error::Inadmissible {
                cell: 0,
                reason: format!("inflow static temperature {t}"),
            });
        }
        let dt = -u * du / cp;
        let p = b.total_pressure * (t / b.total_temperature).powf(k);
        let dp = p * k * dt / t;
        let rho = p / (r * t);
        let drho = dp / (r * t) - rho * dt / t;
        Ok(Prim {
            v: [rho, u, p],
            d: [drho, du, dp],
        })
    }

    fn outflow_ghost(&self, q: &Prim) -> Prim {
        let (c, _) = self.sound_speed(q);
        if q.v[1] >= c {
            *q
        } else {
            Prim {
                v: [q.v[0], q.v[1], self.params.boundary.back_pressure],
                d: [q.d[0], q.d[1], 0.0],
            }
        }
    }

    /// Conservative state and physical flux with tangents.
    fn state_and_flux(&self, q: &Prim) -> ([f64; 3], [f64; 3], [f64; 3], [f64; 3]) {
        let g1 = self.params.gamma - 1.0;
        let [rho, u, p] = q.v;
        let [drho, du, dp] = q.d;
        let e = p / g1 + 0.5 * rho * u * u;
        let de = dp / g1 + 0.5 * drho * u * u + rho * u * du;
        let state = [rho, rho * u, e];
        let dstate = [drho, drho * u + rho * du, de];
        let flux = [rho * u, rho * u * u + p, u * (e + p)];
        let dflux = [
            drho * u + rho * du,
            drho * u * u + 2.0 * rho * u * du + dp,
            du * (e + p) + u * (de + dp),
        ];
        (state, dstate, flux, dflux)
    }

    fn rusanov(&self, l: &Prim, r: &Prim) -> ([f64; 3], [f64; 3]) {
        let (ul, dul, fl, dfl) = self.state_and_flux(l);
        let (ur, dur, fr, dfr) = self.state_and_flux(r);
        let (cl, dcl) = self.sound_speed(l);
        let (cr, dcr) = self.sound_speed(r);
        let sl = l.v[1].abs() + cl;
        let sr = r.v[1].abs() + cr;
        let (lam, dlam) = if sl >= sr {
            (sl, l.v[1].signum() * l.d[1] + dcl)
        } else {
            (sr, r.v[1].signum() * r.d[1] + dcr)
        };
        let mut f = [0.0; 3];
        let mut df = [0.0; 3];
        for k in 0..3 {
            f[k] = 0.5 * (fl[k] + fr[k]) - 0.5 * lam * (ur[k] - ul[k]);
            df[k] = 0.5 * (dfl[k] + dfr[k])
                - 0.5 * dlam * (ur[k] - ul[k])
                - 0.5 * lam * (dur[k] - dul[k]);
        }
        (f, df)
    }

    /// Smooth van Albada slope and its tangent.
    fn limited_slope(&self, a: f64, b: f64, da: f64, db: f64) -> (f64, f64) {
        let e = self.params.limiter_epsilon;
        let num = a * (b * b + e) + b * (a * a + e);
        let den = a * a + b * b + 2.0 * e;
        let dnum = da * (b * b + e) + 2.0 * a * b * db + db * (a * a + e) + 2.0 * a * b * da;
        let dden = 2.0 * (a * da + b * db);
        let phi = num / den;
        (phi, (dnum - phi * dden) / den)
    }

    fn check_face(&self, q: &Prim, face: usize) -> Result<()> {
        if q.v[0] > 0.0 && q.v[2] > 0.0 {
            Ok(())
        } else {
            Err(Error::Inadmissible {
                cell: face.min(self.params.n_cells - 1),
                reason: format!("reconstructed face state {:?}", q.v),
            })
        }
    }

    /// Residual (or its tangent along `dw`) plus the unscaled face fluxes.
    fn evaluate(
        &self,
        w: &BlockVector,
        dw: Option<&BlockVector>,
        order: Order,
    ) -> Result<(BlockVector, Vec<[f64; 3]>)> {
        self.layout().ensure_same(&w.layout())?;
        if let Some(dw) = dw {
            self.layout().ensure_same(&dw.layout())?;
        }
        let n = self.params.n_cells;
        let q: Vec<Prim> = (0..n)
            .map(|i| self.cell_primitive(w, dw, i))
            .collect::<Result<_>>()?;

        let mut slope = vec![Prim::default(); n];
        if order == Order::Second {
            for i in 1..n - 1 {
                for k in 0..3 {
                    let (s, ds) = self.limited_slope(
                        q[i].v[k] - q[i - 1].v[k],
                        q[i + 1].v[k] - q[i].v[k],
                        q[i].d[k] - q[i - 1].d[k],
                        q[i + 1].d[k] - q[i].d[k],
                    );
                    slope[i].v[k] = s;
                    slope[i].d[k] = ds;
                }
            }
        }
        let shifted = |i: usize, sign: f64| {
            let mut out = q[i];
            for k in 0..3 {
                out.v[k] += sign * 0.5 * slope[i].v[k];
                out.d[k] += sign * 0.5 * slope[i].d[k];
            }
            out
        };

        let mut flux = Vec::with_capacity(n + 1);
        let mut dflux = Vec::with_capacity(n + 1);
        for face in 0..=n {
            let left = if face == 0 {
                self.inflow_ghost(&q[0])?
            } else {
                shifted(face - 1, 1.0)
            };
            let right = if face == n {
                self.outflow_ghost(&q[n - 1])
            } else {
                shifted(face, -1.0)
            };
            self.check_face(&left, face)?;
            self.check_face(&right, face)?;
            let (f, df) = self.rusanov(&left, &right);
            flux.push(f);
            dflux.push(df);
        }

        let a = &self.face_area;
        let tangent = dw.is_some();
        let out = BlockVector::from_fn(self.layout(), |i, k| {
            let (fr, fl, p) = if tangent {
                (dflux[i + 1][k], dflux[i][k], q[i].d[2])
            } else {
                (flux[i + 1][k], flux[i][k], q[i].v[2])
            };
            let mut r = a[i + 1] * fr - a[i] * fl;
            if k == 1 {
                r -= p * (a[i + 1] - a[i]);
            }
            r
        });
        Ok((out, flux))
    }
}

impl NonlinearSystem for Quasi1dEulerProblem {
    fn layout(&self) -> BlockLayout {
        self.mass.layout()
    }

    fn residual(&self, w: &BlockVector) -> Result<BlockVector> {
        Ok(self.evaluate(w, None, Order::Second)?.0)
    }

    fn jacobian_vector(&self, w: &BlockVector, v: &BlockVector) -> Result<BlockVector> {
        Ok(self.evaluate(w, Some(v), Order::Second)?.0)
    }

    fn first_order_blocks(&self, w: &BlockVector) -> Result<BlockSparse> {
        let n = self.params.n_cells;
        let layout = self.layout();
        let mut blocks = BlockSparse::new(layout);
        for color in 0..3 {
            for comp in 0..3 {
                let probe = BlockVector::from_fn(layout, |i, k| {
                    if i % 3 == color && k == comp {
                        1.0
                    } else {
                        0.0
                    }
                });
                let (jv, _) = self.evaluate(w, Some(&probe), Order::First)?;
                for j in (color..n).step_by(3) {
                    for i in j.saturating_sub(1)..=(j + 1).min(n - 1) {
                        let col = jv.cell(i);
                        let block = if i == j {
                            blocks.diag_mut(i)
                        } else {
                            blocks.off_mut(i, j)
                        };
                        for (row, v) in col.iter().enumerate() {
                            block.set(row, comp, *v);
                        }
                    }
                }
            }
        }
        Ok(blocks)
    }

    fn mass(&self) -> &MassMatrix {
        &self.mass
    }

    fn explicit_dt(&self, w: &BlockVector) -> Result<Vec<f64>> {
        (0..self.params.n_cells)
            .map(|i| {
                let q = self.cell_primitive(w, None, i)?;
                let (c, _) = self.sound_speed(&q);
                Ok(self.dx / (q.v[1].abs() + c))
            })
            .collect()
    }

    /// Uniform flow at `initial_mach` with the inflow total conditions.
    fn initial_state(&self) -> BlockVector {
        let (g, r) = (self.params.gamma, self.params.gas_constant);
        let b = &self.params.boundary;
        let m = self.params.initial_mach;
        let t = b.total_temperature / (1.0 + 0.5 * (g - 1.0) * m * m);
        let p = b.total_pressure * (t / b.total_temperature).powf(g / (g - 1.0));
        let rho = p / (r * t);
        self.uniform_state(rho, m * (g * r * t).sqrt(), p)
    }

    fn is_admissible(&self, w: &BlockVector) -> bool {
        w.layout() == self.layout()
            && (0..self.params.n_cells).all(|i| self.cell_primitive(w, None, i).is_ok())
    }

    /// The whole nozzle is one line.
    fn line_hint(&self) -> Option<LineSet> {
        LineSet::new(
            self.params.n_cells,
            vec![(0..self.params.n_cells).collect()],
        )
        .ok()
    }

    /// Mass flow through the exit.
    fn functional(&self, w: &BlockVector) -> Option<f64> {
        let n = self.params.n_cells;
        self.face_fluxes(w)
            .ok()
            .map(|f| f[n][0] * self.face_area[n])
    }
}
