//! Interaction kernels and wall-aware convolutions.
//!
//! The wall convolution treats the complement of the fluid region X (solid
//! cells and everything outside the grid) as carrying the constant density
//! `rho_s`. Because the discrete kernel has unit mass,
//! `phi *_X rho = rho_s + phi * [(rho - rho_s) 1_X]` holds exactly, with the
//! bracket zero-extended beyond the grid.

use crate::geometry::{build_perforated_domain, Rect, UnitCell};
use crate::grid::Grid;
use crate::{Error, Result};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug)]
pub struct Kernel {
    pub delta: f64,
    pub h: f64,
    /// Stencil half-width, `ceil(delta / h)`.
    pub s: usize,
    /// `phi_h` on the (2s+1)^2 patch, row-major in (dy, dx).
    pub phi: Vec<f64>,
    /// Sampled analytic gradient, same layout, same normalization.
    pub dphi: [Vec<f64>; 2],
    pub scale: f64,
}

fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

pub fn make_kernel(delta: f64, h: f64) -> Result<Kernel> {
    if !(h > 0.0) || !(delta >= 2.0 * h) {
        return Err(Error::config(format!(
            "kernel support delta={delta} is under-resolved on h={h} (need delta >= 2h)"
        )));
    }
    let s = (delta / h - 1e-9).ceil() as usize;
    let w = 2 * s + 1;
    let mut phi = vec![0.0; w * w];
    let mut gx = vec![0.0; w * w];
    let mut gy = vec![0.0; w * w];
    for a in 0..w {
        for b in 0..w {
            let dy = a as f64 - s as f64;
            let dx = b as f64 - s as f64;
            let (x, y) = (dx * h / delta, dy * h / delta);
            let r2 = x * x + y * y;
            let v = bump(r2);
            phi[a * w + b] = v;
            if r2 < 1.0 {
                let f = -2.0 * v / ((1.0 - r2) * (1.0 - r2) * delta);
                gx[a * w + b] = f * x;
                gy[a * w + b] = f * y;
            }
        }
    }
    let mass: f64 = phi.iter().sum::<f64>() * h * h;
    let scale = 1.0 / mass;
    for v in phi.iter_mut().chain(gx.iter_mut()).chain(gy.iter_mut()) {
        *v *= scale;
    }
    Ok(Kernel { delta, h, s, phi, dphi: [gx, gy], scale })
}

impl Kernel {
    pub fn width(&self) -> usize {
        2 * self.s + 1
    }

    /// `phi_h` at integer offset (dx, dy).
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let s = self.s as isize;
        if dx.abs() > s || dy.abs() > s {
            return 0.0;
        }
        self.phi[((dy + s) * (2 * s + 1) + dx + s) as usize]
    }

    pub fn grad_at(&self, dx: isize, dy: isize) -> [f64; 2] {
        let s = self.s as isize;
        if dx.abs() > s || dy.abs() > s {
            return [0.0, 0.0];
        }
        let k = ((dy + s) * (2 * s + 1) + dx + s) as usize;
        [self.dphi[0][k], self.dphi[1][k]]
    }

    /// sup |grad phi| over the stencil.
    pub fn grad_sup(&self) -> f64 {
        (0..self.phi.len()).map(|k| self.dphi[0][k].hypot(self.dphi[1][k])).fold(0.0, f64::max)
    }

    /// Discrete L1 norm of |grad phi|.
    pub fn grad_l1(&self) -> f64 {
        (0..self.phi.len()).map(|k| self.dphi[0][k].hypot(self.dphi[1][k])).sum::<f64>() * self.h * self.h
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvMethod {
    Direct,
    Fft,
    #[default]
    Auto,
}

/// `out[c] = h^2 sum_d w(d) g(c - d)` with `g` zero beyond the grid.
pub fn convolve(g: &[f64], grid: &Grid, w: &[f64], s: usize, method: ConvMethod) -> Vec<f64> {
    let width = 2 * s + 1;
    assert_eq!(w.len(), width * width, "stencil size mismatch");
    assert_eq!(g.len(), grid.len(), "field size mismatch");
    let use_fft = match method {
        ConvMethod::Direct => false,
        ConvMethod::Fft => true,
        ConvMethod::Auto => width * width > 121 && grid.len() > 256,
    };
    if use_fft {
        convolve_fft(g, grid, w, s)
    } else {
        convolve_direct(g, grid, w, s)
    }
}

fn convolve_direct(g: &[f64], grid: &Grid, w: &[f64], s: usize) -> Vec<f64> {
    let (nx, ny) = (grid.nx as isize, grid.ny as isize);
    let si = s as isize;
    let width = 2 * s + 1;
    let h2 = grid.h * grid.h;
    let mut out = vec![0.0; grid.len()];
    for j in 0..ny {
        for i in 0..nx {
            let mut acc = 0.0;
            for dy in -si..=si {
                let y = j - dy;
                if y < 0 || y >= ny {
                    continue;
                }
                let row = ((dy + si) as usize) * width;
                for dx in -si..=si {
                    let x = i - dx;
                    if x < 0 || x >= nx {
                        continue;
                    }
                    acc += w[row + (dx + si) as usize] * g[(y * nx + x) as usize];
                }
            }
            out[(j * nx + i) as usize] = acc * h2;
        }
    }
    out
}

fn fft_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

fn fft2(buf: &mut [Complex<f64>], px: usize, py: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (fx, fy) = if inverse {
        (planner.plan_fft_inverse(px), planner.plan_fft_inverse(py))
    } else {
        (planner.plan_fft_forward(px), planner.plan_fft_forward(py))
    };
    fx.process(buf);
    let mut col = vec![Complex::new(0.0, 0.0); py];
    for i in 0..px {
        for j in 0..py {
            col[j] = buf[j * px + i];
        }
        fy.process(&mut col);
        for j in 0..py {
            buf[j * px + i] = col[j];
        }
    }
}

fn convolve_fft(g: &[f64], grid: &Grid, w: &[f64], s: usize) -> Vec<f64> {
    let (nx, ny) = (grid.nx, grid.ny);
    let width = 2 * s + 1;
    let px = fft_size(nx + 2 * s);
    let py = fft_size(ny + 2 * s);
    let zero = Complex::new(0.0, 0.0);
    let mut a = vec![zero; px * py];
    for j in 0..ny {
        for i in 0..nx {
            a[j * px + i] = Complex::new(g[j * nx + i], 0.0);
        }
    }
    // stencil offset d stored at index d mod p (circular)
    let mut b = vec![zero; px * py];
    for r in 0..width {
        for q in 0..width {
            let dy = r as isize - s as isize;
            let dx = q as isize - s as isize;
            let y = dy.rem_euclid(py as isize) as usize;
            let x = dx.rem_euclid(px as isize) as usize;
            b[y * px + x] = Complex::new(w[r * width + q], 0.0);
        }
    }
    fft2(&mut a, px, py, false);
    fft2(&mut b, px, py, false);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= *y;
    }
    fft2(&mut a, px, py, true);
    let norm = grid.h * grid.h / (px * py) as f64;
    let mut out = vec![0.0; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            out[j * nx + i] = a[j * px + i].re * norm;
        }
    }
    out
}

fn check_kernel(grid: &Grid, k: &Kernel) {
    assert!(
        (grid.h - k.h).abs() <= 1e-12 * k.h,
        "kernel built for h={} applied on a grid with h={}",
        k.h,
        grid.h
    );
}

fn shifted(rho: &[f64], fluid: &[bool], rho_s: f64) -> Vec<f64> {
    rho.iter().zip(fluid).map(|(&r, &f)| if f { r - rho_s } else { 0.0 }).collect()
}

/// `phi *_X rho` on every grid cell.
pub fn convolve_wall(rho: &[f64], fluid: &[bool], grid: &Grid, k: &Kernel, rho_s: f64, method: ConvMethod) -> Vec<f64> {
    check_kernel(grid, k);
    let mut out = convolve(&shifted(rho, fluid, rho_s), grid, &k.phi, k.s, method);
    out.iter_mut().for_each(|v| *v += rho_s);
    out
}

/// `D_X[rho] = phi *_X rho - rho`; zero on solid cells.
pub fn capillarity(rho: &[f64], fluid: &[bool], grid: &Grid, k: &Kernel, rho_s: f64, method: ConvMethod) -> Vec<f64> {
    let c = convolve_wall(rho, fluid, grid, k, rho_s, method);
    c.iter()
        .zip(rho)
        .zip(fluid)
        .map(|((&c, &r), &f)| if f { c - r } else { 0.0 })
        .collect()
}

/// `grad(phi *_X rho)` via the sampled kernel gradient (whose mass vanishes).
pub fn grad_convolution(
    rho: &[f64],
    fluid: &[bool],
    grid: &Grid,
    k: &Kernel,
    rho_s: f64,
    method: ConvMethod,
) -> [Vec<f64>; 2] {
    check_kernel(grid, k);
    let g = shifted(rho, fluid, rho_s);
    [convolve(&g, grid, &k.dphi[0], k.s, method), convolve(&g, grid, &k.dphi[1], k.s, method)]
}

/// `phi * 1_X`, the kernel mass seen inside the fluid region.
pub fn fluid_weight(fluid: &[bool], grid: &Grid, k: &Kernel, method: ConvMethod) -> Vec<f64> {
    check_kernel(grid, k);
    let ind: Vec<f64> = fluid.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
    convolve(&ind, grid, &k.phi, k.s, method)
}

/// Upper bound `sup|grad phi| ||rho||_{L1(X)} + ||grad phi||_{L1} rho_s`.
pub fn grad_bound(rho: &[f64], fluid: &[bool], grid: &Grid, k: &Kernel, rho_s: f64) -> f64 {
    let l1: f64 = rho.iter().zip(fluid).filter(|(_, &f)| f).map(|(r, _)| r.abs()).sum::<f64>() * grid.cell_area();
    k.grad_sup() * l1 + k.grad_l1() * rho_s
}

#[derive(Clone, Debug, PartialEq)]
pub struct HomogenizedRow {
    pub eps: f64,
    pub error: f64,
}

/// `|| grad(phi *_eps f) - theta grad(phi *_0 f) ||_{L2(Omega)}` for each eps.
pub fn homogenized_convergence_check(
    f: &[f64],
    cell: &UnitCell,
    omega: Rect,
    eps_list: &[f64],
    k: &Kernel,
    rho_s: f64,
) -> Result<Vec<HomogenizedRow>> {
    if eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config("eps list must be strictly decreasing"));
    }
    let grid = omega.grid(k.h)?;
    if f.len() != grid.len() {
        return Err(Error::config("field does not match the domain grid"));
    }
    let all = vec![true; grid.len()];
    let g0 = grad_convolution(f, &all, &grid, k, rho_s, ConvMethod::Auto);
    let theta = cell.theta;
    eps_list
        .iter()
        .map(|&eps| {
            let d = build_perforated_domain(cell, omega, eps, k.h)?;
            let ge = grad_convolution(f, &d.fluid, &grid, k, rho_s, ConvMethod::Auto);
            let mut acc = 0.0;
            for c in 0..grid.len() {
                for a in 0..2 {
                    acc += (ge[a][c] - theta * g0[a][c]).powi(2);
                }
            }
            Ok(HomogenizedRow { eps, error: (acc * grid.cell_area()).sqrt() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_unit_cell, Grain};

    /// Literal two-term wall convolution, O(n^2).
    fn brute_wall(rho: &[f64], fluid: &[bool], grid: &Grid, k: &Kernel, rho_s: f64) -> Vec<f64> {
        let h2 = grid.h * grid.h;
        let mut out = vec![0.0; grid.len()];
        for c in 0..grid.len() {
            let (ci, cj) = grid.ij(c);
            let (mut inside, mut in_grid_mass) = (0.0, 0.0);
            let mut solid_mass = 0.0;
            for y in 0..grid.len() {
                let (yi, yj) = grid.ij(y);
                let w = k.at(ci as isize - yi as isize, cj as isize - yj as isize) * h2;
                in_grid_mass += w;
                if fluid[y] {
                    inside += w * rho[y];
                } else {
                    solid_mass += w;
                }
            }
            out[c] = inside + rho_s * (solid_mass + (1.0 - in_grid_mass));
        }
        out
    }

    fn pseudo(n: usize, seed: u64) -> Vec<f64> {
        let mut x = seed;
        (0..n)
            .map(|_| {
                x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                0.2 + (x >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect()
    }

    #[test]
    fn kernel_normalized_symmetric_antisymmetric() {
        let k = make_kernel(0.1, 0.01).unwrap();
        let mass: f64 = k.phi.iter().sum::<f64>() * k.h * k.h;
        assert!((mass - 1.0).abs() < 1e-14);
        let s = k.s as isize;
        for dy in -s..=s {
            for dx in -s..=s {
                let v = k.at(dx, dy);
                assert!(v >= 0.0);
                assert_eq!(v, k.at(-dx, -dy));
                assert_eq!(v, k.at(-dy, dx));
                let g = k.grad_at(dx, dy);
                let gm = k.grad_at(-dx, -dy);
                assert_eq!(g[0], -gm[0]);
                assert_eq!(g[1], -gm[1]);
            }
        }
        assert!(k.at(0, 0) > 0.0);
        for a in 0..2 {
            let m: f64 = k.dphi[a].iter().sum::<f64>() * k.h * k.h;
            assert!(m.abs() < 1e-12);
        }
    }

    #[test]
    fn under_resolved_kernel_rejected() {
        assert!(make_kernel(0.015, 0.01).is_err());
        assert!(make_kernel(0.02, 0.01).is_ok());
    }

    #[test]
    fn wall_convolution_matches_literal_definition() {
        for (n, delta_cells) in [(8usize, 2.5f64), (16, 3.0), (32, 4.0)] {
            let grid = Grid::unit(n);
            let k = make_kernel(delta_cells * grid.h, grid.h).unwrap();
            let rho = pseudo(grid.len(), n as u64);
            let mut fluid = vec![true; grid.len()];
            for c in 0..grid.len() {
                let (x, y) = grid.center(c);
                if (x - 0.5).powi(2) + (y - 0.5).powi(2) < 0.04 {
                    fluid[c] = false;
                }
            }
            let slow = brute_wall(&rho, &fluid, &grid, &k, 0.7);
            for method in [ConvMethod::Direct, ConvMethod::Fft] {
                let fast = convolve_wall(&rho, &fluid, &grid, &k, 0.7, method);
                for c in 0..grid.len() {
                    assert!((fast[c] - slow[c]).abs() <= 1e-12 * slow[c].abs(), "{n} {method:?} {c}");
                }
            }
        }
    }

    #[test]
    fn capillarity_of_wall_density_vanishes() {
        let grid = Grid::unit(24);
        let k = make_kernel(0.15, grid.h).unwrap();
        let mut fluid = vec![true; grid.len()];
        fluid[100..140].iter_mut().for_each(|f| *f = false);
        let d = capillarity(&vec![0.3; grid.len()], &fluid, &grid, &k, 0.3, ConvMethod::Auto);
        assert!(d.iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn capillarity_of_constant_near_grain() {
        let grid = Grid::unit(20);
        let k = make_kernel(0.2, grid.h).unwrap();
        let mut fluid = vec![true; grid.len()];
        let solid = [grid.idx(10, 10), grid.idx(11, 10)];
        for &c in &solid {
            fluid[c] = false;
        }
        let (c0, rho_s) = (1.3, 0.4);
        let d = capillarity(&vec![c0; grid.len()], &fluid, &grid, &k, rho_s, ConvMethod::Direct);
        for c in 0..grid.len() {
            if !fluid[c] {
                continue;
            }
            let (ci, cj) = grid.ij(c);
            let mut solid_mass = 0.0;
            let mut in_grid = 0.0;
            for y in 0..grid.len() {
                let (yi, yj) = grid.ij(y);
                let w = k.at(ci as isize - yi as isize, cj as isize - yj as isize) * grid.cell_area();
                in_grid += w;
                if !fluid[y] {
                    solid_mass += w;
                }
            }
            let expect = (rho_s - c0) * (solid_mass + 1.0 - in_grid);
            assert!((d[c] - expect).abs() < 1e-12);
            // far from walls and grain the constant is reproduced
            let far = ci >= 4 && cj >= 4 && ci < 16 && cj < 16 && (ci as isize - 10).abs().max((cj as isize - 10).abs()) > 5;
            if far {
                assert!(d[c].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn linear_in_density() {
        let grid = Grid::unit(16);
        let k = make_kernel(0.2, grid.h).unwrap();
        let mut fluid = vec![true; grid.len()];
        fluid[40] = false;
        let r1 = pseudo(grid.len(), 1);
        let r2 = pseudo(grid.len(), 2);
        let a = 0.3;
        let mix: Vec<f64> = r1.iter().zip(&r2).map(|(x, y)| a * x + (1.0 - a) * y).collect();
        let c1 = convolve_wall(&r1, &fluid, &grid, &k, 0.5, ConvMethod::Direct);
        let c2 = convolve_wall(&r2, &fluid, &grid, &k, 0.5, ConvMethod::Direct);
        let cm = convolve_wall(&mix, &fluid, &grid, &k, 0.5, ConvMethod::Direct);
        for c in 0..grid.len() {
            assert!((cm[c] - (a * c1[c] + (1.0 - a) * c2[c])).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_matches_finite_difference_of_convolution() {
        // second-order check: refine h at fixed delta
        let mut errs = Vec::new();
        for n in [64usize, 128] {
            let grid = Grid::unit(n);
            let k = make_kernel(0.2, grid.h).unwrap();
            let fluid = vec![true; grid.len()];
            let rho = grid.sample(|x, y| 1.0 + 0.5 * (-(x - 0.5).powi(2) * 20.0 - (y - 0.45).powi(2) * 15.0).exp());
            let c = convolve_wall(&rho, &fluid, &grid, &k, 1.0, ConvMethod::Fft);
            let g = grad_convolution(&rho, &fluid, &grid, &k, 1.0, ConvMethod::Fft);
            let mut e: f64 = 0.0;
            for j in n / 4..3 * n / 4 {
                for i in n / 4..3 * n / 4 {
                    let fd = (c[grid.idx(i + 1, j)] - c[grid.idx(i - 1, j)]) / (2.0 * grid.h);
                    e = e.max((fd - g[0][grid.idx(i, j)]).abs());
                }
            }
            errs.push(e);
        }
        assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
    }

    #[test]
    fn gradient_bound_holds() {
        let grid = Grid::unit(32);
        let k = make_kernel(0.1, grid.h).unwrap();
        let mut fluid = vec![true; grid.len()];
        for c in 0..grid.len() {
            let (x, y) = grid.center(c);
            fluid[c] = (x - 0.3).hypot(y - 0.6) > 0.12;
        }
        let rho = pseudo(grid.len(), 9);
        let g = grad_convolution(&rho, &fluid, &grid, &k, 0.8, ConvMethod::Auto);
        let bound = grad_bound(&rho, &fluid, &grid, &k, 0.8);
        for c in 0..grid.len() {
            assert!(g[0][c].hypot(g[1][c]) <= bound);
        }
    }

    #[test]
    fn homogenized_check_trivial_cases() {
        let cell = build_unit_cell(Grain::centered_disc(0.25), 8).unwrap();
        let k = make_kernel(0.1, 1.0 / 64.0).unwrap();
        let grid = Rect::UNIT.grid(k.h).unwrap();
        let rows = homogenized_convergence_check(&vec![0.6; grid.len()], &cell, Rect::UNIT, &[0.25, 0.125], &k, 0.6).unwrap();
        assert!(rows.iter().all(|r| r.error < 1e-12));
        assert!(homogenized_convergence_check(&vec![0.6; grid.len()], &cell, Rect::UNIT, &[0.125, 0.25], &k, 0.6).is_err());
    }
}
