//! Quasi-static nonlocal NSK system on a perforated domain with time scale
//! `omega = eps^2`: an elliptic momentum solve for `u` at frozen density,
//! then explicit conservative transport `eps^2 d_t rho + div(rho u) = 0`.

use crate::constitutive::{free_energy_parts, EnergyFunction, FreeEnergy};
use crate::geometry::DomainMask;
use crate::grid::{MacLayout, Topology};
use crate::linsolve::{dot, max_abs, Cholesky, Csr};
use crate::nonlocal::{convolve_wall, fluid_weight, grad_convolution, ConvMethod, Kernel};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Discrete form of the momentum right-hand side.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingForm {
    /// `-rho_f grad g` with `g = W'(rho) + gamma rho - gamma phi *_X rho`; the
    /// face density `rho_f` (upwinded by the force) is shared with the transport
    /// flux, which makes the semi-discrete energy balance exact.
    #[default]
    ChemicalPotential,
    /// `gamma rho grad(phi *_X rho) - grad P(rho)`, velocity-upwind transport.
    GeneralizedPressure,
    /// `-grad p + gamma rho grad D_X[rho]`, velocity-upwind transport.
    Korteweg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoreConfig {
    pub mu: f64,
    pub xi: f64,
    pub t_end: f64,
    /// CFL/positivity safety factor in (0, 1).
    pub cfl: f64,
    /// Safety factor on the density-relaxation step bound.
    pub relax: f64,
    /// Use this step instead of the adaptive one (still checked against the bounds).
    pub fixed_dt: Option<f64>,
    pub forcing: ForcingForm,
    pub conv: ConvMethod,
    /// Relative momentum residual above which a solve is rejected.
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for PoreConfig {
    fn default() -> Self {
        PoreConfig {
            mu: 1.0,
            xi: 0.0,
            t_end: 0.1,
            cfl: 0.5,
            relax: 1.0,
            fixed_dt: None,
            forcing: ForcingForm::default(),
            conv: ConvMethod::Auto,
            tol: 1e-9,
            max_steps: 1_000_000,
        }
    }
}

impl PoreConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0) || !(self.xi >= 0.0) {
            return Err(Error::config("viscosities need mu > 0 and xi >= 0"));
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(Error::config("cfl must lie in (0, 1)"));
        }
        if !(self.relax > 0.0) || !(self.t_end >= 0.0) {
            return Err(Error::config("relax must be positive and t_end non-negative"));
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt > 0.0) {
                return Err(Error::config("fixed_dt must be positive"));
            }
        }
        Ok(())
    }
}

/// `mu L + xi D^T D` on the active faces of a walled layout, factorized once.
pub struct MomentumOperator {
    pub mac: MacLayout,
    pub mu: f64,
    pub xi: f64,
    op: Csr,
    lap: Csr,
    chol: Cholesky,
}

impl MomentumOperator {
    pub fn new(mac: MacLayout, mu: f64, xi: f64) -> Result<Self> {
        let n = mac.n_faces();
        let lap_t = mac.laplacian_triplets();
        let lap = Csr::from_triplets(n, n, &lap_t);
        let mut t: Vec<(usize, usize, f64)> = lap_t.into_iter().map(|(r, c, v)| (r, c, mu * v)).collect();
        if xi > 0.0 {
            // rows of D per cell, then the outer products
            let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); mac.n_cells()];
            for (c, f, v) in mac.divergence_triplets() {
                rows[c].push((f, v));
            }
            for row in &rows {
                for &(a, va) in row {
                    for &(b, vb) in row {
                        t.push((a, b, xi * va * vb));
                    }
                }
            }
        }
        let op = Csr::from_triplets(n, n, &t);
        let chol = Cholesky::new(n, &t)?;
        Ok(MomentumOperator { mac, mu, xi, op, lap, chol })
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.op.matvec(u)
    }

    pub fn solve(&self, f: &[f64]) -> Vec<f64> {
        self.chol.solve(f)
    }

    /// `h^2 u^T (mu L + xi D^T D) u`, the discrete `int mu |grad u|^2 + xi (div u)^2`.
    pub fn dissipation(&self, u: &[f64]) -> f64 {
        dot(&self.apply(u), u) * self.mac.grid.cell_area()
    }

    /// `||grad u||_{L2}` from the no-slip Dirichlet form `h^2 u^T L u`.
    pub fn grad_norm(&self, u: &[f64]) -> f64 {
        (dot(&self.lap.matvec(u), u) * self.mac.grid.cell_area()).sqrt()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub energy: FreeEnergy,
    pub dissipation: f64,
    /// `(E_{n+1} - E_n) / dt + D_n`; zero on the final record.
    pub residual: f64,
    pub max_u: f64,
    /// `||u||_{L2}`.
    pub u_l2: f64,
    /// `||grad u||_{L2}` from the Dirichlet form.
    pub du_l2: f64,
    /// `||W(rho)||_{L1}`.
    pub w_l1: f64,
    pub rho_l2: f64,
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    /// Density on the full grid (solid cells hold 0).
    pub rho: Vec<f64>,
    /// Velocity on the (nx+1) x ny and nx x (ny+1) face arrays.
    pub ux: Vec<f64>,
    pub uy: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct PoreRun {
    pub eps: f64,
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<Snapshot>,
    pub rho: Vec<f64>,
}

impl PoreRun {
    /// Largest positive energy increment relative to `dt * D` over the run.
    pub fn max_energy_increase(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| (w[1].energy.total() - w[0].energy.total()).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.records.iter().map(|r| r.residual.abs()).fold(0.0, f64::max)
    }
}

/// Momentum solve output: velocity, forcing and the face densities used.
#[derive(Clone, Debug)]
pub struct Momentum {
    pub u: Vec<f64>,
    pub force: Vec<f64>,
    /// Shared face density (chemical-potential form only).
    pub rho_face: Option<Vec<f64>>,
    pub residual: f64,
}

pub struct PoreSolver<'a> {
    pub mask: &'a DomainMask,
    pub kernel: &'a Kernel,
    pub energy: &'a EnergyFunction,
    pub cfg: PoreConfig,
    pub op: MomentumOperator,
    weight: Vec<f64>,
}

impl<'a> PoreSolver<'a> {
    pub fn new(mask: &'a DomainMask, kernel: &'a Kernel, energy: &'a EnergyFunction, cfg: PoreConfig) -> Result<Self> {
        cfg.validate()?;
        if !mask.eps.is_finite() && mask.n != 0 {
            return Err(Error::config("perforated domain needs a finite eps"));
        }
        let mac = MacLayout::new(mask.grid.clone(), mask.fluid.clone(), Topology::Walled)?;
        let op = MomentumOperator::new(mac, cfg.mu, cfg.xi)?;
        let weight = fluid_weight(&mask.fluid, &mask.grid, kernel, cfg.conv);
        Ok(PoreSolver { mask, kernel, energy, cfg, op, weight })
    }

    fn omega(&self) -> f64 {
        let e = self.eps();
        e * e
    }

    pub fn eps(&self) -> f64 {
        if self.mask.eps.is_finite() {
            self.mask.eps
        } else {
            1.0
        }
    }

    fn check_density(&self, rho: &[f64]) -> Result<()> {
        let law = &self.energy.law;
        for (c, &r) in rho.iter().enumerate() {
            if self.mask.fluid[c] {
                law.check_range(r)?;
                if self.cfg.forcing == ForcingForm::ChemicalPotential && r < self.energy.rho_min {
                    return Err(Error::Range { value: r, lo: self.energy.rho_min, hi: law.r_max });
                }
            }
        }
        Ok(())
    }

    fn conv(&self, rho: &[f64]) -> Vec<f64> {
        convolve_wall(rho, &self.mask.fluid, &self.mask.grid, self.kernel, self.energy.law.rho_s, self.cfg.conv)
    }

    /// Face forcing for the configured form, from a precomputed `phi *_X rho`.
    pub fn forcing(&self, rho: &[f64], conv: &[f64]) -> (Vec<f64>, Option<Vec<f64>>) {
        let mac = &self.op.mac;
        let law = &self.energy.law;
        let g = law.gamma;
        let ih = 1.0 / mac.grid.h;
        match self.cfg.forcing {
            ForcingForm::ChemicalPotential => {
                let pot: Vec<f64> = (0..rho.len())
                    .map(|c| if self.mask.fluid[c] { self.energy.dw(rho[c]) + g * rho[c] - g * conv[c] } else { 0.0 })
                    .collect();
                let mut rf = Vec::with_capacity(mac.n_faces());
                let f = mac
                    .faces
                    .iter()
                    .map(|f| {
                        let dg = (pot[f.hi] - pot[f.lo]) * ih;
                        // flow runs down the potential gradient
                        let r = if dg < 0.0 { rho[f.lo] } else { rho[f.hi] };
                        rf.push(r);
                        -r * dg
                    })
                    .collect();
                (f, Some(rf))
            }
            ForcingForm::GeneralizedPressure | ForcingForm::Korteweg => {
                let gc = grad_convolution(rho, &self.mask.fluid, &self.mask.grid, self.kernel, law.rho_s, self.cfg.conv);
                let f = mac
                    .faces
                    .iter()
                    .map(|f| {
                        let rbar = 0.5 * (rho[f.lo] + rho[f.hi]);
                        let gf = 0.5 * (gc[f.axis][f.lo] + gc[f.axis][f.hi]);
                        if self.cfg.forcing == ForcingForm::GeneralizedPressure {
                            g * rbar * gf - (law.big_p(rho[f.hi]) - law.big_p(rho[f.lo])) * ih
                        } else {
                            -(law.p(rho[f.hi]) - law.p(rho[f.lo])) * ih + g * rbar * (gf - (rho[f.hi] - rho[f.lo]) * ih)
                        }
                    })
                    .collect();
                (f, None)
            }
        }
    }

    pub fn solve_momentum(&self, rho: &[f64]) -> Result<Momentum> {
        self.check_density(rho)?;
        let conv = self.conv(rho);
        self.momentum_from(rho, &conv)
    }

    fn momentum_from(&self, rho: &[f64], conv: &[f64]) -> Result<Momentum> {
        let (force, rho_face) = self.forcing(rho, conv);
        let u = self.op.solve(&force);
        let au = self.op.apply(&u);
        let res = au.iter().zip(&force).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = max_abs(&force).max(f64::MIN_POSITIVE);
        let residual = res / scale;
        if residual > self.cfg.tol && res > 1e-13 {
            return Err(Error::solver("momentum solve residual above tolerance", residual));
        }
        Ok(Momentum { u, force, rho_face, residual })
    }

    fn face_density(&self, rho: &[f64], m: &Momentum) -> Vec<f64> {
        match &m.rho_face {
            Some(r) => r.clone(),
            None => self
                .op
                .mac
                .faces
                .iter()
                .zip(&m.u)
                .map(|(f, &u)| if u >= 0.0 { rho[f.lo] } else { rho[f.hi] })
                .collect(),
        }
    }

    /// Largest step keeping every fluid cell's outflow within `cfl` of its content.
    pub fn positivity_bound(&self, rho: &[f64], u: &[f64], rho_face: &[f64]) -> f64 {
        let mac = &self.op.mac;
        let mut out = vec![0.0; rho.len()];
        for ((f, &v), &r) in mac.faces.iter().zip(u).zip(rho_face) {
            let flux = r * v;
            if flux > 0.0 {
                out[f.lo] += flux;
            } else {
                out[f.hi] -= flux;
            }
        }
        let scale = self.omega() * mac.grid.h;
        let mut bound = f64::INFINITY;
        for c in 0..rho.len() {
            if out[c] > 0.0 {
                bound = bound.min(self.cfg.cfl * scale * rho[c] / out[c]);
            }
        }
        bound
    }

    /// Step bound from the density relaxation rate `rho P'(rho) / ((mu + xi) eps^2)`.
    pub fn relaxation_bound(&self, rho: &[f64]) -> f64 {
        let law = &self.energy.law;
        let stiff = (0..rho.len())
            .filter(|&c| self.mask.fluid[c])
            .map(|c| rho[c] * law.big_dp(rho[c]).abs().max(law.dp(rho[c]).abs()))
            .fold(0.0, f64::max);
        if stiff == 0.0 {
            return f64::INFINITY;
        }
        self.cfg.relax * (self.cfg.mu + self.cfg.xi) * self.omega() / stiff
    }

    /// Conservative update `rho - dt/eps^2 div(rho_f u)`.
    pub fn transport(&self, rho: &[f64], u: &[f64], rho_face: &[f64], dt: f64) -> Result<Vec<f64>> {
        let mac = &self.op.mac;
        let flux: Vec<f64> = u.iter().zip(rho_face).map(|(v, r)| v * r).collect();
        let div = mac.div(&flux);
        let k = dt / self.omega();
        let mut out = rho.to_vec();
        for (n, &c) in mac.cells.iter().enumerate() {
            out[c] = rho[c] - k * div[n];
            if out[c] < -1e-14 {
                return Err(Error::Internal(format!("negative density {} after transport at cell {c}", out[c])));
            }
            out[c] = out[c].max(0.0);
        }
        Ok(out)
    }

    pub fn mass(&self, rho: &[f64]) -> f64 {
        mass(rho, &self.mask.fluid, self.mask.grid.cell_area())
    }

    /// Integrate to `t_end`, snapshotting at each time in `snap_times` (sorted, within `[0, t_end]`).
    pub fn run(&self, rho0: &[f64], snap_times: &[f64]) -> Result<PoreRun> {
        if rho0.len() != self.mask.grid.len() {
            return Err(Error::config("initial density does not match the grid"));
        }
        let mut rho: Vec<f64> = rho0.iter().zip(&self.mask.fluid).map(|(&r, &f)| if f { r } else { 0.0 }).collect();
        self.check_density(&rho)?;
        let t_end = self.cfg.t_end;
        let h2 = self.mask.grid.cell_area();
        let mut records: Vec<StepRecord> = Vec::new();
        let mut snapshots = Vec::new();
        let mut next_snap = 0;
        let mut t = 0.0;
        let tol_t = 1e-12 * t_end.max(1e-300);
        for step in 0..=self.cfg.max_steps {
            let conv = self.conv(&rho);
            let energy = free_energy_parts(&rho, &self.mask.fluid, &conv, &self.weight, self.energy, self.omega(), h2);
            if let Some(prev) = records.last_mut() {
                prev.residual = (energy.total() - prev.energy.total()) / prev.dt + prev.dissipation;
            }
            let m = self.momentum_from(&rho, &conv)?;
            let dissipation = self.op.dissipation(&m.u);
            let w_l1 = (0..rho.len()).filter(|&c| self.mask.fluid[c]).map(|c| self.energy.w(rho[c]).abs()).sum::<f64>() * h2;
            let rho_l2 = (dot(&rho, &rho) * h2).sqrt();
            let mut rec = StepRecord {
                step,
                t,
                dt: 0.0,
                mass: self.mass(&rho),
                energy,
                dissipation,
                residual: 0.0,
                max_u: max_abs(&m.u),
                u_l2: (dot(&m.u, &m.u) * h2).sqrt(),
                du_l2: self.op.grad_norm(&m.u),
                w_l1,
                rho_l2,
            };
            while next_snap < snap_times.len() && (snap_times[next_snap] - t).abs() <= tol_t.max(1e-14) {
                let (ux, uy) = self.op.mac.to_full(&m.u);
                snapshots.push(Snapshot { t: snap_times[next_snap], rho: rho.clone(), ux, uy });
                next_snap += 1;
            }
            if t >= t_end - tol_t {
                records.push(rec);
                return Ok(PoreRun { eps: self.eps(), records, snapshots, rho });
            }
            let rf = self.face_density(&rho, &m);
            let bound = self.positivity_bound(&rho, &m.u, &rf).min(self.relaxation_bound(&rho));
            let mut dt = match self.cfg.fixed_dt {
                Some(dt) => {
                    if dt > bound {
                        return Err(Error::StepTooLarge { dt, bound });
                    }
                    dt
                }
                None => bound,
            };
            if !dt.is_finite() {
                dt = t_end - t;
            }
            if next_snap < snap_times.len() {
                dt = dt.min(snap_times[next_snap] - t);
            }
            dt = dt.min(t_end - t);
            if dt < 1e-12 * t_end {
                return Err(Error::solver(format!("time step {dt:.3e} collapsed below 1e-12 T at t = {t:.6e}"), dt));
            }
            rec.dt = dt;
            records.push(rec);
            rho = self.transport(&rho, &m.u, &rf, dt)?;
            t += dt;
            if (t_end - t).abs() <= tol_t {
                t = t_end;
            }
            if next_snap < snap_times.len() && (snap_times[next_snap] - t).abs() <= tol_t {
                t = snap_times[next_snap];
            }
        }
        Err(Error::solver(format!("step budget of {} exhausted before t_end", self.cfg.max_steps), t))
    }
}

pub fn mass(rho: &[f64], fluid: &[bool], h2: f64) -> f64 {
    rho.iter().zip(fluid).filter(|(_, &f)| f).map(|(r, _)| r).sum::<f64>() * h2
}

/// Velocity-upwind conservative update: `rho - dt/eps^2 div(rho_up u)`.
///
/// Rejects steps above `cfl * eps^2 h / max|u|`.
pub fn advance_density(rho: &[f64], u: &[f64], dt: f64, mac: &MacLayout, eps: f64, cfl: f64) -> Result<Vec<f64>> {
    let umax = max_abs(u);
    let bound = if umax > 0.0 { cfl * eps * eps * mac.grid.h / umax } else { f64::INFINITY };
    if dt > bound {
        return Err(Error::StepTooLarge { dt, bound });
    }
    let flux: Vec<f64> = mac.faces.iter().zip(u).map(|(f, &v)| v * if v >= 0.0 { rho[f.lo] } else { rho[f.hi] }).collect();
    let div = mac.div(&flux);
    let mut out = rho.to_vec();
    for (n, &c) in mac.cells.iter().enumerate() {
        out[c] = rho[c] - dt / (eps * eps) * div[n];
        if out[c] < -1e-14 {
            return Err(Error::Internal(format!("negative density {} at cell {c}", out[c])));
        }
        out[c] = out[c].max(0.0);
    }
    Ok(out)
}
