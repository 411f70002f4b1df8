//! Unit cell, perforated domain and the index sets built on them.

use crate::grid::Grid;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Parametric grain inside the unit cell `(0,1)^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Grain {
    Disc { cx: f64, cy: f64, r: f64 },
    /// Axis-aligned square of half side `half`.
    Square { cx: f64, cy: f64, half: f64 },
    /// Axis-aligned ellipse with semi-axes `a` (x) and `b` (y).
    Ellipse { cx: f64, cy: f64, a: f64, b: f64 },
}

impl Grain {
    pub fn centered_disc(r: f64) -> Self {
        Grain::Disc { cx: 0.5, cy: 0.5, r }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Grain::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) < r * r,
            Grain::Square { cx, cy, half } => (x - cx).abs() < half && (y - cy).abs() < half,
            Grain::Ellipse { cx, cy, a, b } => ((x - cx) / a).powi(2) + ((y - cy) / b).powi(2) < 1.0,
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Grain::Disc { r, .. } => std::f64::consts::PI * r * r,
            Grain::Square { half, .. } => 4.0 * half * half,
            Grain::Ellipse { a, b, .. } => std::f64::consts::PI * a * b,
        }
    }

    fn extents(&self) -> (f64, f64, f64, f64) {
        match *self {
            Grain::Disc { cx, cy, r } => (cx - r, cx + r, cy - r, cy + r),
            Grain::Square { cx, cy, half } => (cx - half, cx + half, cy - half, cy + half),
            Grain::Ellipse { cx, cy, a, b } => (cx - a, cx + a, cy - b, cy + b),
        }
    }

    /// Distance from the grain to the boundary of the unit cell (negative if it leaves Y).
    pub fn margin(&self) -> f64 {
        let (x0, x1, y0, y1) = self.extents();
        x0.min(1.0 - x1).min(y0).min(1.0 - y1)
    }

    fn is_empty(&self) -> bool {
        match *self {
            Grain::Disc { r, .. } => r <= 0.0,
            Grain::Square { half, .. } => half <= 0.0,
            Grain::Ellipse { a, b, .. } => a <= 0.0 || b <= 0.0,
        }
    }

    /// The same shape grown outward by `w`.
    pub fn dilate(&self, w: f64) -> Grain {
        match *self {
            Grain::Disc { cx, cy, r } => Grain::Disc { cx, cy, r: r + w },
            Grain::Square { cx, cy, half } => Grain::Square { cx, cy, half: half + w },
            Grain::Ellipse { cx, cy, a, b } => Grain::Ellipse { cx, cy, a: a + w, b: b + w },
        }
    }

    /// Default annulus region: width `min(0.15, margin - 0.05)`, or half the
    /// margin when the grain is too close to the cell boundary for that.
    pub fn default_annulus(&self) -> Grain {
        let d = self.margin();
        let w = if d - 0.05 > 0.0 { (d - 0.05).min(0.15) } else { 0.5 * d };
        self.dilate(w)
    }
}

#[derive(Clone, Debug)]
pub struct UnitCell {
    pub m: usize,
    pub grain: Grain,
    pub annulus: Grain,
    /// Solid flags on the m x m cell grid of Y.
    pub solid: Vec<bool>,
    /// Cells of Y_r that are not solid.
    pub ring: Vec<bool>,
    pub solid_area: f64,
    pub theta: f64,
}

pub fn build_unit_cell(grain: Grain, m: usize) -> Result<UnitCell> {
    build_unit_cell_with_annulus(grain, grain.default_annulus(), m)
}

pub fn build_unit_cell_with_annulus(grain: Grain, annulus: Grain, m: usize) -> Result<UnitCell> {
    if m < 4 {
        return Err(Error::Geometry(format!("unit-cell resolution m={m} is too coarse")));
    }
    if grain.is_empty() {
        return Err(Error::Geometry("empty solid grain".into()));
    }
    let h = 1.0 / m as f64;
    if grain.margin() < 2.0 * h - 1e-12 {
        return Err(Error::Geometry(format!(
            "grain is within {:.4} of the cell boundary; at least two grid cells ({:.4}) are required",
            grain.margin(),
            2.0 * h
        )));
    }
    if annulus.margin() <= 0.0 {
        return Err(Error::Geometry("annulus region leaves the unit cell".into()));
    }
    let g = Grid::unit(m);
    let mut solid = vec![false; m * m];
    let mut ring = vec![false; m * m];
    for c in 0..g.len() {
        let (x, y) = g.center(c);
        if grain.contains(x, y) {
            solid[c] = true;
        } else if annulus.contains(x, y) {
            ring[c] = true;
        }
    }
    if solid.iter().any(|&s| s) && (0..g.len()).any(|c| solid[c] && !annulus.contains(g.center(c).0, g.center(c).1)) {
        return Err(Error::Geometry("annulus region does not contain the grain".into()));
    }
    let n_solid = solid.iter().filter(|&&s| s).count();
    if n_solid == 0 {
        return Err(Error::Geometry("empty solid grain at this resolution".into()));
    }
    let solid_area = n_solid as f64 * h * h;
    Ok(UnitCell { m, grain, annulus, solid, ring, solid_area, theta: 1.0 - solid_area })
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };

    pub fn diam(&self) -> f64 {
        ((self.x1 - self.x0).powi(2) + (self.y1 - self.y0).powi(2)).sqrt()
    }

    /// Grid with spacing `h` covering the rectangle.
    pub fn grid(&self, h: f64) -> Result<Grid> {
        let nx = whole((self.x1 - self.x0) / h).ok_or_else(|| {
            Error::config(format!("domain width {} is not a multiple of h={h}", self.x1 - self.x0))
        })?;
        let ny = whole((self.y1 - self.y0) / h).ok_or_else(|| {
            Error::config(format!("domain height {} is not a multiple of h={h}", self.y1 - self.y0))
        })?;
        Ok(Grid::new(nx, ny, h, self.x0, self.y0))
    }
}

fn whole(x: f64) -> Option<usize> {
    let r = x.round();
    ((x - r).abs() < 1e-9 * x.abs().max(1.0) && r >= 0.0).then_some(r as usize)
}

fn whole_signed(x: f64) -> Option<i64> {
    let r = x.round();
    ((x - r).abs() < 1e-9 * x.abs().max(1.0)).then_some(r as i64)
}

/// Perforated domain on a grid of spacing `h`; each eps-cell spans `n = eps/h`
/// grid cells and carries the unit-cell mask block-upsampled by `n/m`.
#[derive(Clone, Debug)]
pub struct DomainMask {
    pub grid: Grid,
    pub omega: Rect,
    pub eps: f64,
    /// Grid cells per eps-cell side.
    pub n: usize,
    pub fluid: Vec<bool>,
    /// Lattice indices k with eps(Y + k) strictly inside the domain.
    pub cells_k: Vec<(i64, i64)>,
    /// Grid cells covered by the union of eps-cells in `cells_k`.
    pub omega_k: Vec<bool>,
    /// For each grid cell in Omega_K: which entry of `cells_k` it belongs to.
    pub owner: Vec<Option<usize>>,
    /// Annulus (ring) cells, i.e. eps(Y_r \ Y_s + k) for k in K.
    pub ring: Vec<bool>,
    pub theta: f64,
}

pub fn build_perforated_domain(cell: &UnitCell, omega: Rect, eps: f64, h: f64) -> Result<DomainMask> {
    if !(eps > 0.0 && h > 0.0) {
        return Err(Error::config("eps and h must be positive"));
    }
    let grid = omega.grid(h)?;
    let n = whole(eps / h)
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::config(format!("eps/h = {} is not an integer", eps / h)))?;
    if n % cell.m != 0 {
        return Err(Error::config(format!(
            "eps/h = {n} is not a multiple of the unit-cell resolution m = {}",
            cell.m
        )));
    }
    let up = n / cell.m;
    let mut fluid = vec![true; grid.len()];
    let mut omega_k = vec![false; grid.len()];
    let mut owner = vec![None; grid.len()];
    let mut ring = vec![false; grid.len()];
    let mut cells_k = Vec::new();
    // closed eps-cells must lie in the open domain: touching the boundary excludes
    let kx0 = (omega.x0 / eps).floor() as i64;
    let kx1 = (omega.x1 / eps).ceil() as i64;
    let ky0 = (omega.y0 / eps).floor() as i64;
    let ky1 = (omega.y1 / eps).ceil() as i64;
    let tol = 1e-12 * omega.diam();
    for ky in ky0..=ky1 {
        for kx in kx0..=kx1 {
            let (a0, a1) = (eps * kx as f64, eps * (kx + 1) as f64);
            let (b0, b1) = (eps * ky as f64, eps * (ky + 1) as f64);
            let inside = a0 > omega.x0 + tol && a1 < omega.x1 - tol && b0 > omega.y0 + tol && b1 < omega.y1 - tol;
            if !inside {
                continue;
            }
            let oi = whole_signed((a0 - omega.x0) / h);
            let oj = whole_signed((b0 - omega.y0) / h);
            let (Some(oi), Some(oj)) = (oi, oj) else {
                return Err(Error::config("eps-lattice is not aligned with the grid"));
            };
            let id = cells_k.len();
            cells_k.push((kx, ky));
            for lj in 0..n {
                for li in 0..n {
                    let c = grid.idx(oi as usize + li, oj as usize + lj);
                    let u = (lj / up) * cell.m + li / up;
                    omega_k[c] = true;
                    owner[c] = Some(id);
                    fluid[c] = !cell.solid[u];
                    ring[c] = cell.ring[u];
                }
            }
        }
    }
    Ok(DomainMask { grid, omega, eps, n, fluid, cells_k, omega_k, owner, ring, theta: cell.theta })
}

impl DomainMask {
    pub fn fluid_area(&self) -> f64 {
        self.fluid.iter().filter(|&&f| f).count() as f64 * self.grid.cell_area()
    }

    pub fn omega_k_area(&self) -> f64 {
        self.omega_k.iter().filter(|&&f| f).count() as f64 * self.grid.cell_area()
    }

    /// |Omega_{K,eps}|, the fluid part of Omega_K.
    pub fn omega_k_eps_area(&self) -> f64 {
        (0..self.grid.len()).filter(|&c| self.omega_k[c] && self.fluid[c]).count() as f64 * self.grid.cell_area()
    }

    /// Mask with every cell fluid (the unperforated domain).
    pub fn unperforated(omega: Rect, h: f64) -> Result<DomainMask> {
        let grid = omega.grid(h)?;
        let len = grid.len();
        Ok(DomainMask {
            grid,
            omega,
            eps: f64::INFINITY,
            n: 0,
            fluid: vec![true; len],
            cells_k: Vec::new(),
            omega_k: vec![false; len],
            owner: vec![None; len],
            ring: vec![false; len],
            theta: 1.0,
        })
    }
}
