//! Limit nonlocal Cahn–Hilliard problem on the unperforated domain:
//! `theta d_t rho + div J = 0` with the Darcy-type flux
//! `J = rho Abar (gamma theta rho grad(phi *_0 rho - rho) - grad Pi) / mu`,
//! `Pi = p + gamma (1 - theta) rho^2 / 2`, and `J.n = 0` on the boundary.

use crate::constitutive::PressureLaw;
use crate::grid::{Grid, MacLayout, Topology};
use crate::linsolve::max_abs;
use crate::nonlocal::{convolve_wall, ConvMethod, Kernel};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectiveConfig {
    pub theta: f64,
    pub abar: [[f64; 2]; 2],
    pub mu: f64,
    pub t_end: f64,
    /// Safety factor on the diffusive stability bound.
    pub sigma: f64,
    /// Safety factor on the per-cell outflow (positivity) bound, in (0, 1).
    pub cfl: f64,
    pub fixed_dt: Option<f64>,
    pub conv: ConvMethod,
    /// Accept `theta = 1` (no solid). Only meaningful for reduction checks.
    pub allow_unit_theta: bool,
    pub max_steps: usize,
}

impl Default for EffectiveConfig {
    fn default() -> Self {
        EffectiveConfig {
            theta: 0.8,
            abar: [[0.01, 0.0], [0.0, 0.01]],
            mu: 1.0,
            t_end: 0.1,
            sigma: 0.25,
            cfl: 0.5,
            fixed_dt: None,
            conv: ConvMethod::Auto,
            allow_unit_theta: false,
            max_steps: 1_000_000,
        }
    }
}

impl EffectiveConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = self.allow_unit_theta && self.theta == 1.0;
        if !(self.theta > 0.0 && self.theta < 1.0) && !unit {
            return Err(Error::config(format!("porosity {} outside (0, 1)", self.theta)));
        }
        if !(self.mu > 0.0) {
            return Err(Error::config("mu must be positive"));
        }
        let a = self.abar;
        if !(a[0][0] > 0.0 && a[1][1] > 0.0) || a.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::config("permeability needs a positive diagonal"));
        }
        if !(self.sigma > 0.0) || !(self.cfl > 0.0 && self.cfl < 1.0) || !(self.t_end >= 0.0) {
            return Err(Error::config("bad stability factors or end time"));
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt > 0.0) {
                return Err(Error::config("fixed_dt must be positive"));
            }
        }
        Ok(())
    }

    /// Loud notes to surface in run output.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.theta == 1.0 {
            w.push("WARNING: theta = 1 override active (no solid phase); reduction mode only".to_string());
        }
        w
    }

    /// `(gamma theta, gamma (1 - theta) / 2)`: the capillary prefactor and the
    /// quadratic coefficient of `Pi`.
    pub fn coefficients(&self, gamma: f64) -> (f64, f64) {
        (gamma * self.theta, 0.5 * gamma * (1.0 - self.theta))
    }

    /// Frobenius norm of `Abar`, an upper bound on its operator norm.
    fn abar_norm(&self) -> f64 {
        self.abar.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct EffectiveState {
    pub t: f64,
    pub rho: Vec<f64>,
    /// Face flux on the interior faces of the walled layout.
    pub flux: Vec<f64>,
    pub mass: f64,
    pub max_flux: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EffectiveRecord {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    /// `theta sum rho h^2`.
    pub mass: f64,
    pub max_flux: f64,
}

#[derive(Clone, Debug)]
pub struct EffectiveSnapshot {
    pub t: f64,
    pub rho: Vec<f64>,
    /// Flux on the (nx+1) x ny and nx x (ny+1) face arrays.
    pub jx: Vec<f64>,
    pub jy: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct EffectiveRun {
    pub records: Vec<EffectiveRecord>,
    pub snapshots: Vec<EffectiveSnapshot>,
    pub rho: Vec<f64>,
}

pub struct EffectiveSolver<'a> {
    pub law: &'a PressureLaw,
    pub kernel: &'a Kernel,
    pub cfg: EffectiveConfig,
    pub mac: MacLayout,
    /// For each face, the indices of the up to four neighbouring faces of the other axis.
    cross: Vec<Vec<usize>>,
}

impl<'a> EffectiveSolver<'a> {
    pub fn new(grid: Grid, law: &'a PressureLaw, kernel: &'a Kernel, cfg: EffectiveConfig) -> Result<Self> {
        cfg.validate()?;
        let n = grid.len();
        let mac = MacLayout::new(grid, vec![true; n], Topology::Walled)?;
        let cross = mac
            .faces
            .iter()
            .map(|f| {
                let (i, j) = (f.i as isize, f.j as isize);
                let cand = if f.axis == 0 {
                    [(1, i - 1, j), (1, i - 1, j + 1), (1, i, j), (1, i, j + 1)]
                } else {
                    [(0, i, j - 1), (0, i + 1, j - 1), (0, i, j), (0, i + 1, j)]
                };
                cand.iter().filter_map(|&(a, x, y)| mac.face_at(a, x, y)).collect()
            })
            .collect();
        Ok(EffectiveSolver { law, kernel, cfg, mac, cross })
    }

    pub fn grid(&self) -> &Grid {
        &self.mac.grid
    }

    fn check(&self, rho: &[f64]) -> Result<()> {
        if rho.len() != self.mac.grid.len() {
            return Err(Error::config("density does not match the grid"));
        }
        self.law.check_field(rho)
    }

    /// Face-normal driving force `gamma theta rho (grad(phi *_0 rho - rho)) - grad Pi`.
    pub fn driving_force(&self, rho: &[f64]) -> Result<Vec<f64>> {
        self.check(rho)?;
        let g = &self.mac.grid;
        let conv = convolve_wall(rho, &self.mac.fluid, g, self.kernel, self.law.rho_s, self.cfg.conv);
        let (cap, quad) = self.cfg.coefficients(self.law.gamma);
        let pi: Vec<f64> = rho.iter().map(|&r| self.law.p(r) + quad * r * r).collect();
        let ih = 1.0 / g.h;
        Ok(self
            .mac
            .faces
            .iter()
            .map(|f| {
                let (a, b) = (f.lo, f.hi);
                let rbar = 0.5 * (rho[a] + rho[b]);
                cap * rbar * ((conv[b] - rho[b]) - (conv[a] - rho[a])) * ih - (pi[b] - pi[a]) * ih
            })
            .collect())
    }

    /// Darcy velocity `Abar F / mu` on faces (normal components).
    pub fn face_velocity(&self, force: &[f64]) -> Vec<f64> {
        let a = self.cfg.abar;
        self.mac
            .faces
            .iter()
            .zip(&self.cross)
            .zip(force)
            .map(|((f, nb), &fnorm)| {
                let ft = if nb.is_empty() { 0.0 } else { nb.iter().map(|&k| force[k]).sum::<f64>() / nb.len() as f64 };
                let (n, t) = (f.axis, 1 - f.axis);
                (a[n][n] * fnorm + a[n][t] * ft) / self.cfg.mu
            })
            .collect()
    }

    /// Flux with the mobility `rho` upwinded by the sign of the face velocity.
    pub fn flux(&self, rho: &[f64]) -> Result<Vec<f64>> {
        let force = self.driving_force(rho)?;
        Ok(self.flux_from_velocity(rho, &self.face_velocity(&force)))
    }

    fn flux_from_velocity(&self, rho: &[f64], vel: &[f64]) -> Vec<f64> {
        self.mac
            .faces
            .iter()
            .zip(vel)
            .map(|(f, &v)| v * if v >= 0.0 { rho[f.lo] } else { rho[f.hi] })
            .collect()
    }

    /// Cell-centred Darcy velocity `J / rho` where `rho > rho_floor`, zero elsewhere.
    pub fn darcy_velocity(&self, rho: &[f64], rho_floor: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let j = self.flux(rho)?;
        let (jx, jy) = self.mac.cell_velocity(&j);
        let ux = jx.iter().zip(rho).map(|(&v, &r)| if r > rho_floor { v / r } else { 0.0 }).collect();
        let uy = jy.iter().zip(rho).map(|(&v, &r)| if r > rho_floor { v / r } else { 0.0 }).collect();
        Ok((ux, uy))
    }

    /// `sigma theta mu h^2 / max(rho ||Abar|| max(P', |p'| + gamma rho))`, combined
    /// with the per-cell outflow bound for the given flux.
    pub fn stability_bound(&self, rho: &[f64], flux: &[f64]) -> f64 {
        let g = &self.mac.grid;
        let law = self.law;
        let stiff = rho
            .iter()
            .map(|&r| r * law.big_dp(r).abs().max(law.dp(r).abs() + law.gamma * r))
            .fold(0.0, f64::max)
            * self.cfg.abar_norm();
        let diffusive = if stiff > 0.0 { self.cfg.sigma * self.cfg.theta * self.cfg.mu * g.h * g.h / stiff } else { f64::INFINITY };
        let mut out = vec![0.0; rho.len()];
        for (f, &j) in self.mac.faces.iter().zip(flux) {
            if j > 0.0 {
                out[f.lo] += j;
            } else {
                out[f.hi] -= j;
            }
        }
        let mut bound = diffusive;
        for (c, &o) in out.iter().enumerate() {
            if o > 0.0 {
                bound = bound.min(self.cfg.cfl * self.cfg.theta * g.h * rho[c] / o);
            }
        }
        bound
    }

    pub fn mass(&self, rho: &[f64]) -> f64 {
        self.cfg.theta * rho.iter().sum::<f64>() * self.mac.grid.cell_area()
    }

    pub fn state(&self, t: f64, rho: Vec<f64>) -> Result<EffectiveState> {
        let flux = self.flux(&rho)?;
        let mass = self.mass(&rho);
        let max_flux = max_abs(&flux);
        Ok(EffectiveState { t, rho, flux, mass, max_flux })
    }

    /// `rho - (dt / theta) div J`, rejecting `dt` above the bound of the current state.
    pub fn step(&self, s: &EffectiveState, dt: f64) -> Result<EffectiveState> {
        let bound = self.stability_bound(&s.rho, &s.flux);
        if dt > bound {
            return Err(Error::StepTooLarge { dt, bound });
        }
        let rho = self.update(&s.rho, &s.flux, dt)?;
        self.state(s.t + dt, rho)
    }

    fn update(&self, rho: &[f64], flux: &[f64], dt: f64) -> Result<Vec<f64>> {
        let div = self.mac.div(flux);
        let k = dt / self.cfg.theta;
        let mut out = rho.to_vec();
        for (n, &c) in self.mac.cells.iter().enumerate() {
            let v = rho[c] - k * div[n];
            if v < -1e-14 {
                return Err(Error::Internal(format!("negative density {v} at cell {c}")));
            }
            out[c] = v.max(0.0);
        }
        Ok(out)
    }

    /// Integrate to `t_end` with adaptive steps, landing on every time in `snap_times`.
    pub fn run(&self, rho0: &[f64], snap_times: &[f64]) -> Result<EffectiveRun> {
        let mut s = self.state(0.0, rho0.to_vec())?;
        let t_end = self.cfg.t_end;
        let tol_t = 1e-12 * t_end.max(1e-300);
        let mut records = Vec::new();
        let mut snapshots = Vec::new();
        let mut next = 0;
        for step in 0..=self.cfg.max_steps {
            let mut rec = EffectiveRecord { step, t: s.t, dt: 0.0, mass: s.mass, max_flux: s.max_flux };
            while next < snap_times.len() && (snap_times[next] - s.t).abs() <= tol_t.max(1e-14) {
                let (jx, jy) = self.mac.to_full(&s.flux);
                snapshots.push(EffectiveSnapshot { t: snap_times[next], rho: s.rho.clone(), jx, jy });
                next += 1;
            }
            if s.t >= t_end - tol_t {
                records.push(rec);
                return Ok(EffectiveRun { records, snapshots, rho: s.rho });
            }
            let bound = self.stability_bound(&s.rho, &s.flux);
            let mut dt = match self.cfg.fixed_dt {
                Some(dt) if dt > bound => return Err(Error::StepTooLarge { dt, bound }),
                Some(dt) => dt,
                None => bound,
            };
            if next < snap_times.len() {
                dt = dt.min(snap_times[next] - s.t);
            }
            dt = dt.min(t_end - s.t);
            if dt < 1e-12 * t_end {
                return Err(Error::solver(format!("time step {dt:.3e} collapsed at t = {:.6e}", s.t), dt));
            }
            rec.dt = dt;
            records.push(rec);
            let rho = self.update(&s.rho, &s.flux, dt)?;
            let mut t = s.t + dt;
            if (t_end - t).abs() <= tol_t {
                t = t_end;
            }
            if next < snap_times.len() && (snap_times[next] - t).abs() <= tol_t {
                t = snap_times[next];
            }
            s = self.state(t, rho)?;
        }
        Err(Error::solver(format!("step budget of {} exhausted before t_end", self.cfg.max_steps), s.t))
    }
}

/// Sarle's bimodality coefficient `(skew^2 + 1) / kurtosis` of the sample.
/// About 1/3 for a Gaussian, 5/9 for a uniform law, 1 for two spikes.
pub fn bimodality(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m = |k: i32| values.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
    let (m2, m3, m4) = (m(2), m(3), m(4));
    if m2 <= 0.0 {
        return 0.0;
    }
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    (skew * skew + 1.0) / kurt
}
