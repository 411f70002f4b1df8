//! Uniform cell grid and the staggered (MAC) face layout over a fluid mask.

use crate::{Error, Result};

const NONE: usize = usize::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub h: f64,
    pub x0: f64,
    pub y0: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, h: f64, x0: f64, y0: f64) -> Self {
        Grid { nx, ny, h, x0, y0 }
    }

    /// Square grid covering the unit square with `n` cells per side.
    pub fn unit(n: usize) -> Self {
        Grid::new(n, n, 1.0 / n as f64, 0.0, 0.0)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn ij(&self, c: usize) -> (usize, usize) {
        (c % self.nx, c / self.nx)
    }

    pub fn center(&self, c: usize) -> (f64, f64) {
        let (i, j) = self.ij(c);
        (self.x0 + (i as f64 + 0.5) * self.h, self.y0 + (j as f64 + 0.5) * self.h)
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    pub fn centers(&self) -> Vec<(f64, f64)> {
        (0..self.len()).map(|c| self.center(c)).collect()
    }

    /// Evaluate `f` at every cell centre.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|c| {
                let (x, y) = self.center(c);
                f(x, y)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Topology {
    /// Outer boundary is a no-slip wall.
    Walled,
    /// Opposite sides are identified.
    Periodic,
}

/// An active velocity face. `axis` is the normal direction (0 = x, 1 = y);
/// `lo`/`hi` are the grid cells on the negative/positive side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Face {
    pub axis: usize,
    pub i: usize,
    pub j: usize,
    pub lo: usize,
    pub hi: usize,
}

/// Face bookkeeping for a staggered grid restricted to fluid cells. A face is
/// active iff both adjacent cells are fluid; inactive faces carry zero velocity.
#[derive(Clone, Debug)]
pub struct MacLayout {
    pub grid: Grid,
    pub topology: Topology,
    pub fluid: Vec<bool>,
    pub faces: Vec<Face>,
    /// Fluid cells in grid order.
    pub cells: Vec<usize>,
    xmap: Vec<usize>,
    ymap: Vec<usize>,
    cell_of: Vec<usize>,
}

impl MacLayout {
    pub fn new(grid: Grid, fluid: Vec<bool>, topology: Topology) -> Result<Self> {
        if fluid.len() != grid.len() {
            return Err(Error::config(format!(
                "mask has {} entries, grid has {}",
                fluid.len(),
                grid.len()
            )));
        }
        let (nx, ny) = (grid.nx, grid.ny);
        let (xw, yh) = match topology {
            Topology::Walled => (nx + 1, ny + 1),
            Topology::Periodic => (nx, ny),
        };
        let mut xmap = vec![NONE; xw * ny];
        let mut ymap = vec![NONE; nx * yh];
        let mut faces = Vec::new();
        for j in 0..ny {
            for i in 0..xw {
                let lo = match (topology, i) {
                    (Topology::Walled, 0) => continue,
                    (Topology::Walled, _) if i == nx => continue,
                    (Topology::Periodic, 0) => grid.idx(nx - 1, j),
                    _ => grid.idx(i - 1, j),
                };
                let hi = grid.idx(i, j);
                if fluid[lo] && fluid[hi] {
                    xmap[j * xw + i] = faces.len();
                    faces.push(Face { axis: 0, i, j, lo, hi });
                }
            }
        }
        for j in 0..yh {
            for i in 0..nx {
                let lo = match (topology, j) {
                    (Topology::Walled, 0) => continue,
                    (Topology::Walled, _) if j == ny => continue,
                    (Topology::Periodic, 0) => grid.idx(i, ny - 1),
                    _ => grid.idx(i, j - 1),
                };
                let hi = grid.idx(i, j);
                if fluid[lo] && fluid[hi] {
                    ymap[j * nx + i] = faces.len();
                    faces.push(Face { axis: 1, i, j, lo, hi });
                }
            }
        }
        let mut cells = Vec::new();
        let mut cell_of = vec![NONE; grid.len()];
        for (c, &f) in fluid.iter().enumerate() {
            if f {
                cell_of[c] = cells.len();
                cells.push(c);
            }
        }
        Ok(MacLayout { grid, topology, fluid, faces, cells, xmap, ymap, cell_of })
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Fluid index of a grid cell.
    pub fn cell_index(&self, c: usize) -> Option<usize> {
        let k = self.cell_of[c];
        (k != NONE).then_some(k)
    }

    /// Dimensions of the full (active plus inactive) face arrays per axis.
    pub fn face_dims(&self, axis: usize) -> (usize, usize) {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        match (self.topology, axis) {
            (Topology::Walled, 0) => (nx + 1, ny),
            (Topology::Walled, _) => (nx, ny + 1),
            (Topology::Periodic, _) => (nx, ny),
        }
    }

    /// Active face id at signed face coordinates, wrapping when periodic.
    pub fn face_at(&self, axis: usize, i: isize, j: isize) -> Option<usize> {
        let (w, hgt) = self.face_dims(axis);
        let (i, j) = match self.topology {
            Topology::Periodic => (i.rem_euclid(w as isize), j.rem_euclid(hgt as isize)),
            Topology::Walled => {
                if i < 0 || j < 0 || i >= w as isize || j >= hgt as isize {
                    return None;
                }
                (i, j)
            }
        };
        let map = if axis == 0 { &self.xmap } else { &self.ymap };
        let id = map[j as usize * w + i as usize];
        (id != NONE).then_some(id)
    }

    /// Coordinates of a face centre.
    pub fn face_center(&self, f: &Face) -> (f64, f64) {
        let g = &self.grid;
        if f.axis == 0 {
            (g.x0 + f.i as f64 * g.h, g.y0 + (f.j as f64 + 0.5) * g.h)
        } else {
            (g.x0 + (f.i as f64 + 0.5) * g.h, g.y0 + f.j as f64 * g.h)
        }
    }

    /// Negative vector Laplacian with no-slip walls, as (row, col, value).
    ///
    /// A missing neighbour along the face normal is a wall face (distance h);
    /// a missing tangential neighbour sits behind a wall at distance h/2 and is
    /// handled by ghost reflection.
    pub fn laplacian_triplets(&self) -> Vec<(usize, usize, f64)> {
        let ih2 = 1.0 / (self.grid.h * self.grid.h);
        let mut t = Vec::with_capacity(5 * self.n_faces());
        for (id, f) in self.faces.iter().enumerate() {
            let (i, j) = (f.i as isize, f.j as isize);
            let (normal, tangent) = if f.axis == 0 {
                ([(i - 1, j), (i + 1, j)], [(i, j - 1), (i, j + 1)])
            } else {
                ([(i, j - 1), (i, j + 1)], [(i - 1, j), (i + 1, j)])
            };
            let mut diag = 0.0;
            for (nb, wall) in normal.iter().map(|n| (n, 1.0)).chain(tangent.iter().map(|n| (n, 2.0))) {
                match self.face_at(f.axis, nb.0, nb.1) {
                    Some(k) => {
                        diag += ih2;
                        t.push((id, k, -ih2));
                    }
                    None => diag += wall * ih2,
                }
            }
            t.push((id, id, diag));
        }
        t
    }

    /// Discrete divergence, fluid cells x faces.
    pub fn divergence_triplets(&self) -> Vec<(usize, usize, f64)> {
        let ih = 1.0 / self.grid.h;
        let mut t = Vec::with_capacity(2 * self.n_faces());
        for (id, f) in self.faces.iter().enumerate() {
            t.push((self.cell_of[f.hi], id, -ih));
            t.push((self.cell_of[f.lo], id, ih));
        }
        t
    }

    /// Divergence of a face field onto fluid cells.
    pub fn div(&self, u: &[f64]) -> Vec<f64> {
        let ih = 1.0 / self.grid.h;
        let mut d = vec![0.0; self.n_cells()];
        for (f, &v) in self.faces.iter().zip(u) {
            d[self.cell_of[f.lo]] += v * ih;
            d[self.cell_of[f.hi]] -= v * ih;
        }
        d
    }

    /// Face gradient of a fluid-cell field; the negative adjoint of `div`.
    pub fn grad(&self, q: &[f64]) -> Vec<f64> {
        let ih = 1.0 / self.grid.h;
        self.faces
            .iter()
            .map(|f| (q[self.cell_of[f.hi]] - q[self.cell_of[f.lo]]) * ih)
            .collect()
    }

    /// Face difference quotient of a full grid field.
    pub fn grad_full(&self, g: &[f64]) -> Vec<f64> {
        let ih = 1.0 / self.grid.h;
        self.faces.iter().map(|f| (g[f.hi] - g[f.lo]) * ih).collect()
    }

    /// Expand an active-face vector into full per-axis arrays (zeros on inactive faces).
    pub fn to_full(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (xw, xh) = self.face_dims(0);
        let (yw, yh) = self.face_dims(1);
        let mut ux = vec![0.0; xw * xh];
        let mut uy = vec![0.0; yw * yh];
        for (f, &v) in self.faces.iter().zip(u) {
            if f.axis == 0 {
                ux[f.j * xw + f.i] = v;
            } else {
                uy[f.j * yw + f.i] = v;
            }
        }
        (ux, uy)
    }

    /// Lift a fluid-cell vector to the full grid, filling solid cells with `fill`.
    pub fn cells_to_grid(&self, q: &[f64], fill: f64) -> Vec<f64> {
        let mut out = vec![fill; self.grid.len()];
        for (k, &c) in self.cells.iter().enumerate() {
            out[c] = q[k];
        }
        out
    }

    pub fn grid_to_cells(&self, g: &[f64]) -> Vec<f64> {
        self.cells.iter().map(|&c| g[c]).collect()
    }

    /// Cell-centred vector field (average of the two faces per axis).
    pub fn cell_velocity(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (ux, uy) = self.to_full(u);
        let g = &self.grid;
        let (xw, _) = self.face_dims(0);
        let (yw, yh) = self.face_dims(1);
        let mut cx = vec![0.0; g.len()];
        let mut cy = vec![0.0; g.len()];
        for j in 0..g.ny {
            for i in 0..g.nx {
                let c = g.idx(i, j);
                let ip = if i + 1 < xw { i + 1 } else { 0 };
                let jp = if j + 1 < yh { j + 1 } else { 0 };
                cx[c] = 0.5 * (ux[j * xw + i] + ux[j * xw + ip]);
                cy[c] = 0.5 * (uy[j * yw + i] + uy[jp * yw + i]);
            }
        }
        (cx, cy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(n: usize, m: usize, t: &[(usize, usize, f64)]) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; m]; n];
        for &(r, c, v) in t {
            a[r][c] += v;
        }
        a
    }

    #[test]
    fn walled_open_box_face_counts() {
        let g = Grid::unit(4);
        let mac = MacLayout::new(g, vec![true; 16], Topology::Walled).unwrap();
        assert_eq!(mac.n_faces(), 2 * 3 * 4);
        let mac = MacLayout::new(Grid::unit(4), vec![true; 16], Topology::Periodic).unwrap();
        assert_eq!(mac.n_faces(), 2 * 16);
    }

    #[test]
    fn grad_is_negative_adjoint_of_div() {
        let mut fluid = vec![true; 36];
        fluid[14] = false;
        fluid[15] = false;
        for topo in [Topology::Walled, Topology::Periodic] {
            let mac = MacLayout::new(Grid::unit(6), fluid.clone(), topo).unwrap();
            let u: Vec<f64> = (0..mac.n_faces()).map(|k| ((k * 7 % 11) as f64).sin()).collect();
            let q: Vec<f64> = (0..mac.n_cells()).map(|k| ((k * 3 % 5) as f64).cos()).collect();
            let lhs: f64 = mac.div(&u).iter().zip(&q).map(|(a, b)| a * b).sum();
            let rhs: f64 = -mac.grad(&q).iter().zip(&u).map(|(a, b)| a * b).sum::<f64>();
            assert!((lhs - rhs).abs() < 1e-10, "{topo:?}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn laplacian_is_symmetric_and_kills_nothing_in_walled_box() {
        let mut fluid = vec![true; 25];
        fluid[12] = false;
        let mac = MacLayout::new(Grid::unit(5), fluid, Topology::Walled).unwrap();
        let n = mac.n_faces();
        let a = dense(n, n, &mac.laplacian_triplets());
        for r in 0..n {
            for c in 0..n {
                assert_eq!(a[r][c], a[c][r]);
            }
            // strictly diagonally dominant rows exist, weakly dominant everywhere
            let off: f64 = (0..n).filter(|&c| c != r).map(|c| a[r][c].abs()).sum();
            assert!(a[r][r] >= off);
        }
    }

    #[test]
    fn div_matches_triplets() {
        let mac = MacLayout::new(Grid::unit(3), vec![true; 9], Topology::Periodic).unwrap();
        let d = dense(mac.n_cells(), mac.n_faces(), &mac.divergence_triplets());
        let u: Vec<f64> = (0..mac.n_faces()).map(|k| k as f64 * 0.3 - 1.0).collect();
        let fast = mac.div(&u);
        for r in 0..mac.n_cells() {
            let slow: f64 = (0..mac.n_faces()).map(|c| d[r][c] * u[c]).sum();
            assert!((slow - fast[r]).abs() < 1e-12);
        }
    }

    #[test]
    fn periodic_constant_pressure_has_zero_gradient() {
        let mut fluid = vec![true; 16];
        fluid[5] = false;
        let mac = MacLayout::new(Grid::unit(4), fluid, Topology::Periodic).unwrap();
        assert!(mac.grad(&vec![3.0; mac.n_cells()]).iter().all(|&g| g == 0.0));
    }
}
