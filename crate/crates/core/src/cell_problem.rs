//! Periodic Stokes cell problems on the fluid part of the unit cell and the
//! permeability tensor.
//!
//! With `L` the no-slip vector Laplacian and `D` the divergence, each cell
//! problem is the saddle system `L v - D^T q = e_i`, `D v = 0`, with the
//! pressure fixed to zero fluid mean.

use crate::geometry::{Rect, UnitCell};
use crate::grid::{Grid, MacLayout, Topology};
use crate::linsolve::{cg, max_abs, Cholesky, Csr, SparseLu};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellMethod {
    /// CG on the pressure Schur complement, sparse Cholesky inner solves.
    #[default]
    Uzawa,
    /// Sparse LU of the full saddle-point matrix.
    Direct,
}

#[derive(Clone, Debug)]
pub struct CellStokesSolution {
    pub index: usize,
    pub mac: Arc<MacLayout>,
    /// Velocity on active faces.
    pub v: Vec<f64>,
    /// Pressure on fluid cells, zero mean.
    pub q: Vec<f64>,
    pub div_residual: f64,
    pub momentum_residual: f64,
    pub iterations: usize,
    pub method: CellMethod,
}

/// Assembled operators shared by both cell problems.
pub struct CellOperators {
    pub mac: Arc<MacLayout>,
    lap: Csr,
    lap_t: Vec<(usize, usize, f64)>,
    chol: Cholesky,
}

impl CellOperators {
    pub fn new(cell: &UnitCell) -> Result<Self> {
        if !cell.solid.iter().any(|&s| s) {
            return Err(Error::Geometry("ill-posed: no solid obstacle".into()));
        }
        let fluid: Vec<bool> = cell.solid.iter().map(|&s| !s).collect();
        let mac = Arc::new(MacLayout::new(Grid::unit(cell.m), fluid, Topology::Periodic)?);
        let lap_t = mac.laplacian_triplets();
        let n = mac.n_faces();
        let lap = Csr::from_triplets(n, n, &lap_t);
        let chol = Cholesky::new(n, &lap_t)?;
        Ok(CellOperators { mac, lap, lap_t, chol })
    }

    fn forcing(&self, i: usize) -> Vec<f64> {
        self.mac.faces.iter().map(|f| if f.axis == i { 1.0 } else { 0.0 }).collect()
    }

    fn residuals(&self, v: &[f64], q: &[f64], b: &[f64]) -> (f64, f64) {
        let lv = self.lap.matvec(v);
        let gq = self.mac.grad(q);
        let mom: Vec<f64> = (0..v.len()).map(|k| lv[k] + gq[k] - b[k]).collect();
        (max_abs(&self.mac.div(v)), max_abs(&mom))
    }

    pub fn solve(&self, i: usize, method: CellMethod, tol: f64) -> Result<CellStokesSolution> {
        if i > 1 {
            return Err(Error::config(format!("cell problem index {i} out of range for a planar cell")));
        }
        let b = self.forcing(i);
        let (v, q, iterations) = match method {
            CellMethod::Uzawa => self.uzawa(&b, tol)?,
            CellMethod::Direct => self.direct(&b)?,
        };
        let (div_residual, momentum_residual) = self.residuals(&v, &q, &b);
        Ok(CellStokesSolution {
            index: i,
            mac: self.mac.clone(),
            v,
            q,
            div_residual,
            momentum_residual,
            iterations,
            method,
        })
    }

    fn uzawa(&self, b: &[f64], tol: f64) -> Result<(Vec<f64>, Vec<f64>, usize)> {
        let mac = &self.mac;
        let v0 = self.chol.solve(b);
        let rhs: Vec<f64> = mac.div(&v0).iter().map(|x| -x).collect();
        let schur = |q: &[f64]| {
            let w = self.chol.solve(&mac.grad(q));
            mac.div(&w).iter().map(|x| -x).collect::<Vec<f64>>()
        };
        let out = cg(schur, &rhs, tol, 20 * mac.n_cells().max(50), zero_mean)?;
        let mut q = out.x;
        zero_mean(&mut q);
        let gq = mac.grad(&q);
        let f: Vec<f64> = b.iter().zip(&gq).map(|(b, g)| b - g).collect();
        Ok((self.chol.solve(&f), q, out.iterations))
    }

    fn direct(&self, b: &[f64]) -> Result<(Vec<f64>, Vec<f64>, usize)> {
        let mac = &self.mac;
        let nf = mac.n_faces();
        let nc = mac.n_cells();
        let mut t = self.lap_t.clone();
        for (c, f, v) in mac.divergence_triplets() {
            t.push((f, nf + c, -v));
            if c != 0 {
                t.push((nf + c, f, -v));
            }
        }
        // the continuity rows sum to zero; the first one is replaced by a pressure pin
        t.push((nf, nf, 1.0));
        let lu = SparseLu::new(nf + nc, &t)?;
        let mut rhs = b.to_vec();
        rhs.resize(nf + nc, 0.0);
        let x = lu.solve(&rhs);
        let v = x[..nf].to_vec();
        let mut q = x[nf..].to_vec();
        zero_mean(&mut q);
        Ok((v, q, 1))
    }
}

fn zero_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len().max(1) as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Relative tolerance of the Schur-complement CG.
pub const UZAWA_TOL: f64 = 1e-12;

pub fn solve_cell_problem(cell: &UnitCell, i: usize) -> Result<CellStokesSolution> {
    CellOperators::new(cell)?.solve(i, CellMethod::Uzawa, UZAWA_TOL)
}

impl CellStokesSolution {
    /// `int_Y (v~_i)_j` by midpoint quadrature of the zero extension.
    pub fn mean(&self, j: usize) -> f64 {
        let h2 = self.mac.grid.cell_area();
        self.mac.faces.iter().zip(&self.v).filter(|(f, _)| f.axis == j).map(|(_, v)| v).sum::<f64>() * h2
    }

    /// `h^2 v^T L v`, the discrete Dirichlet energy.
    pub fn dirichlet_energy(&self) -> f64 {
        let lap = Csr::from_triplets(self.mac.n_faces(), self.mac.n_faces(), &self.mac.laplacian_triplets());
        let lv = lap.matvec(&self.v);
        lv.iter().zip(&self.v).map(|(a, b)| a * b).sum::<f64>() * self.mac.grid.cell_area()
    }
}

#[derive(Clone, Debug)]
pub struct PermeabilityMatrix {
    /// `a[j][i] = int_Y (v~_i)_j`.
    pub a: [[f64; 2]; 2],
    pub m: usize,
    pub theta: f64,
    pub tol: f64,
    pub method: CellMethod,
    pub solutions: Vec<CellStokesSolution>,
}

impl PermeabilityMatrix {
    /// Frobenius norm of `A - A^T`.
    pub fn asymmetry(&self) -> f64 {
        std::f64::consts::SQRT_2 * (self.a[0][1] - self.a[1][0]).abs()
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        let (a, d) = (self.a[0][0], self.a[1][1]);
        let b = 0.5 * (self.a[0][1] + self.a[1][0]);
        let tr = 0.5 * (a + d);
        let disc = (0.25 * (a - d).powi(2) + b * b).sqrt();
        [tr - disc, tr + disc]
    }

    pub fn norm(&self) -> f64 {
        self.eigenvalues()[1].abs().max(self.eigenvalues()[0].abs()).max(self.a.iter().flatten().fold(0.0, |m: f64, x| m.max(x.abs())))
    }

    /// Isotropic tensor for reduction tests and configs that bypass the cell problem.
    pub fn isotropic(k: f64) -> Self {
        PermeabilityMatrix { a: [[k, 0.0], [0.0, k]], m: 0, theta: f64::NAN, tol: 0.0, method: CellMethod::Direct, solutions: Vec::new() }
    }
}

pub fn permeability(cell: &UnitCell) -> Result<PermeabilityMatrix> {
    permeability_with(cell, CellMethod::Uzawa, UZAWA_TOL)
}

pub fn permeability_with(cell: &UnitCell, method: CellMethod, tol: f64) -> Result<PermeabilityMatrix> {
    let ops = CellOperators::new(cell)?;
    let (s0, s1) = rayon::join(|| ops.solve(0, method, tol), || ops.solve(1, method, tol));
    let solutions = vec![s0?, s1?];
    let mut a = [[0.0; 2]; 2];
    for (i, s) in solutions.iter().enumerate() {
        for (j, row) in a.iter_mut().enumerate() {
            row[i] = s.mean(j);
        }
    }
    if a.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::solver("non-finite permeability", f64::NAN));
    }
    Ok(PermeabilityMatrix { a, m: cell.m, theta: cell.theta, tol, method, solutions })
}

/// A cell solution continued periodically over a rectangle with spacing `eps/m`.
#[derive(Clone, Debug)]
pub struct RescaledCellField {
    pub grid: Grid,
    pub eps: f64,
    /// x-velocity on the (nx+1) x ny faces.
    pub vx: Vec<f64>,
    /// y-velocity on the nx x (ny+1) faces.
    pub vy: Vec<f64>,
    /// Pressure at cell centres (zero on solid cells).
    pub q: Vec<f64>,
    pub fluid: Vec<bool>,
}

impl RescaledCellField {
    pub fn v_sup(&self) -> f64 {
        max_abs(&self.vx).max(max_abs(&self.vy))
    }

    /// `eps * max |difference quotient|` over neighbouring faces of each component.
    pub fn scaled_grad_sup(&self) -> f64 {
        let g = &self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let mut m: f64 = 0.0;
        let w = nx + 1;
        for j in 0..ny {
            for i in 0..=nx {
                let v = self.vx[j * w + i];
                if i < nx {
                    m = m.max((self.vx[j * w + i + 1] - v).abs());
                }
                if j + 1 < ny {
                    m = m.max((self.vx[(j + 1) * w + i] - v).abs());
                }
            }
        }
        for j in 0..=ny {
            for i in 0..nx {
                let v = self.vy[j * nx + i];
                if i + 1 < nx {
                    m = m.max((self.vy[j * nx + i + 1] - v).abs());
                }
                if j < ny {
                    m = m.max((self.vy[(j + 1) * nx + i] - v).abs());
                }
            }
        }
        self.eps * m / g.h
    }

    pub fn q_sup(&self) -> f64 {
        max_abs(&self.q)
    }

    pub fn scaled_q_grad_sup(&self) -> f64 {
        let g = &self.grid;
        let mut m: f64 = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let c = g.idx(i, j);
                if !self.fluid[c] {
                    continue;
                }
                if i + 1 < g.nx && self.fluid[c + 1] {
                    m = m.max((self.q[c + 1] - self.q[c]).abs());
                }
                if j + 1 < g.ny && self.fluid[c + g.nx] {
                    m = m.max((self.q[c + g.nx] - self.q[c]).abs());
                }
            }
        }
        self.eps * m / g.h
    }
}

/// `v^eps(x) = v(x/eps)`, `q^eps(x) = q(x/eps)` on a grid of spacing `eps/m`.
pub fn rescale_periodic(sol: &CellStokesSolution, eps: f64, omega: Rect) -> Result<RescaledCellField> {
    let m = sol.mac.grid.nx;
    let h = eps / m as f64;
    let grid = omega.grid(h)?;
    let off = |x0: f64| -> Result<usize> {
        let r = (x0 / h).round();
        if (x0 / h - r).abs() > 1e-9 {
            return Err(Error::config("domain origin is not aligned with the eps-lattice grid"));
        }
        Ok((r as i64).rem_euclid(m as i64) as usize)
    };
    let (ox, oy) = (off(omega.x0)?, off(omega.y0)?);
    let (ux, uy) = sol.mac.to_full(&sol.v);
    let (nx, ny) = (grid.nx, grid.ny);
    let mut vx = vec![0.0; (nx + 1) * ny];
    let mut vy = vec![0.0; nx * (ny + 1)];
    for j in 0..ny {
        for i in 0..=nx {
            vx[j * (nx + 1) + i] = ux[((j + oy) % m) * m + (i + ox) % m];
        }
    }
    for j in 0..=ny {
        for i in 0..nx {
            vy[j * nx + i] = uy[((j + oy) % m) * m + (i + ox) % m];
        }
    }
    let qfull = sol.mac.cells_to_grid(&sol.q, 0.0);
    let mut q = vec![0.0; grid.len()];
    let mut fluid = vec![true; grid.len()];
    for j in 0..ny {
        for i in 0..nx {
            let u = ((j + oy) % m) * m + (i + ox) % m;
            q[grid.idx(i, j)] = qfull[u];
            fluid[grid.idx(i, j)] = sol.mac.fluid[u];
        }
    }
    Ok(RescaledCellField { grid, eps, vx, vy, q, fluid })
}
