//! The homogenization experiment: pore runs over a decreasing eps list on one
//! common grid, compared with the effective equation driven by the cell-problem
//! permeability.

use super::config::{Built, RunConfig};
use crate::cell_problem::{permeability_with, UZAWA_TOL};
use crate::effective::{EffectiveConfig, EffectiveRun, EffectiveSnapshot, EffectiveSolver};
use crate::extension::{mean_value_extend, TestFunction};
use crate::geometry::{build_perforated_domain, DomainMask};
use crate::grid::Grid;
use crate::pore::{PoreConfig, PoreRun, PoreSolver, Snapshot};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Porosity and permeability for the effective equation: inline values win,
/// then `cell_csv`, then a fresh cell solve.
pub fn effective_coefficients(cfg: &RunConfig, built: &Built) -> Result<(f64, [[f64; 2]; 2])> {
    let theta = cfg.effective.theta.unwrap_or(built.cell.theta);
    let abar = match (&cfg.effective.abar, &cfg.effective.cell_csv) {
        (Some(a), _) => *a,
        (None, Some(p)) => super::read_abar(p)?,
        (None, None) => permeability_with(&built.cell, cfg.study.cell_method, UZAWA_TOL)?.a,
    };
    Ok((theta, abar))
}

pub fn effective_config(cfg: &RunConfig, theta: f64, abar: [[f64; 2]; 2], t_end: f64) -> EffectiveConfig {
    let e = &cfg.effective;
    EffectiveConfig {
        theta,
        abar,
        mu: cfg.pore.mu,
        t_end,
        sigma: e.sigma,
        cfl: e.cfl,
        fixed_dt: e.fixed_dt,
        conv: cfg.kernel.conv,
        allow_unit_theta: e.allow_unit_theta,
        max_steps: e.max_steps,
    }
}

/// First time the effective solution differs from `rho0` by `change` in
/// relative L2, rounded up to two significant digits.
pub fn choose_t_end(solver: &EffectiveSolver, rho0: &[f64], change: f64, cap: f64) -> Result<f64> {
    let n0 = rho0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut s = solver.state(0.0, rho0.to_vec())?;
    for _ in 0..solver.cfg.max_steps {
        let d = s.rho.iter().zip(rho0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if d >= change * n0 && s.t > 0.0 {
            let e = s.t.log10().floor() as i32 - 1;
            let digits = (s.t / 10f64.powi(e)).ceil();
            return Ok(format!("{digits}e{e}").parse().expect("valid float literal"));
        }
        if s.t >= cap {
            break;
        }
        let dt = solver.stability_bound(&s.rho, &s.flux).min(cap - s.t);
        s = solver.step(&s, dt)?;
    }
    Err(Error::config(format!(
        "dry run: the effective solution does not change by {change} within t = {cap}; set study.t_end"
    )))
}

pub fn comparison_times(t_end: f64, n: usize) -> Vec<f64> {
    (0..n).map(|j| if j + 1 == n { t_end } else { t_end * j as f64 / (n - 1) as f64 }).collect()
}

/// Trapezoid weights on the comparison times.
fn time_weights(times: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; times.len()];
    for k in 1..times.len() {
        let dt = times[k] - times[k - 1];
        w[k - 1] += 0.5 * dt;
        w[k] += 0.5 * dt;
    }
    w
}

fn l2(a: &[f64], b: &[f64], h2: f64) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() * h2).sqrt()
}

/// `(sum_j w_j ||hat rho_eps(t_j) - rho_CH(t_j)||^2)^(1/2)`.
pub fn density_error(mask: &DomainMask, pore: &[Snapshot], ch: &[EffectiveSnapshot], times: &[f64]) -> Result<f64> {
    if pore.len() != times.len() || ch.len() != times.len() {
        return Err(Error::Internal("snapshot count does not match the comparison times".into()));
    }
    let h2 = mask.grid.cell_area();
    let w = time_weights(times);
    let mut acc = 0.0;
    for j in 0..times.len() {
        let hat = mean_value_extend(&pore[j].rho, mask)?;
        acc += w[j] * l2(&hat.values, &ch[j].rho, h2).powi(2);
    }
    Ok(acc.sqrt())
}

/// Cell averages of the two adjacent face values of full face arrays.
pub fn cell_average(grid: &Grid, fx: &[f64], fy: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut ux = vec![0.0; grid.len()];
    let mut uy = vec![0.0; grid.len()];
    for j in 0..ny {
        for i in 0..nx {
            let c = j * nx + i;
            ux[c] = 0.5 * (fx[j * (nx + 1) + i] + fx[j * (nx + 1) + i + 1]);
            uy[c] = 0.5 * (fy[j * nx + i] + fy[(j + 1) * nx + i]);
        }
    }
    (ux, uy)
}

/// Max over test functions and components of `|int (tilde u / eps^2 - J / rho) psi|`
/// restricted to `{rho_CH > rho_floor}`.
pub fn darcy_residual(
    mask: &DomainMask,
    pore: &Snapshot,
    ch: &EffectiveSnapshot,
    rho_floor: f64,
    tests: &[TestFunction],
) -> f64 {
    let g = &mask.grid;
    let (ux, uy) = cell_average(g, &pore.ux, &pore.uy);
    let (jx, jy) = cell_average(g, &ch.jx, &ch.jy);
    let s = 1.0 / (mask.eps * mask.eps);
    let mut dx = vec![0.0; g.len()];
    let mut dy = vec![0.0; g.len()];
    for c in 0..g.len() {
        let r = ch.rho[c];
        if r > rho_floor {
            let fl = if mask.fluid[c] { 1.0 } else { 0.0 };
            dx[c] = fl * ux[c] * s - jx[c] / r;
            dy[c] = fl * uy[c] * s - jy[c] / r;
        }
    }
    tests
        .iter()
        .map(|psi| psi.integrate(&dx, g).abs().max(psi.integrate(&dy, g).abs()))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AprioriRow {
    pub eps: f64,
    /// `||u / eps^2||_{L2(0,T; L2)}`
    pub u_l2l2: f64,
    /// `||u / eps||_{L2(0,T; H1)}`
    pub u_l2h1: f64,
    /// `sup_t ||W(rho)||_{L1}`
    pub w_sup_l1: f64,
    /// `sup_t ||rho||_{L2}`
    pub rho_sup_l2: f64,
    /// `max_t |m(t) - m(0)| / m(0)`
    pub mass_drift: f64,
    pub config_hash: String,
}

pub fn apriori_row(eps: f64, run: &PoreRun) -> AprioriRow {
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for r in &run.records {
        l2 += r.dt * r.u_l2 * r.u_l2;
        h1 += r.dt * (r.u_l2 * r.u_l2 + r.du_l2 * r.du_l2);
    }
    let m0 = run.records.first().map_or(0.0, |r| r.mass);
    AprioriRow {
        eps,
        u_l2l2: l2.sqrt() / (eps * eps),
        u_l2h1: h1.sqrt() / eps,
        w_sup_l1: run.records.iter().map(|r| r.w_l1).fold(0.0, f64::max),
        rho_sup_l2: run.records.iter().map(|r| r.rho_l2).fold(0.0, f64::max),
        mass_drift: run.records.iter().map(|r| (r.mass - m0).abs() / m0.abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max),
        config_hash: String::new(),
    }
}

/// Every column within `2x` its value at the coarsest eps (the first row).
pub fn apriori_uniform(rows: &[AprioriRow]) -> bool {
    let Some(first) = rows.first() else { return true };
    let col = |r: &AprioriRow| [r.u_l2l2, r.u_l2h1, r.w_sup_l1, r.rho_sup_l2];
    let base = col(first);
    rows.iter().all(|r| col(r).iter().zip(&base).all(|(v, b)| *v <= 2.0 * b + 1e-300))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoincareRow {
    pub eps: f64,
    pub t: f64,
    /// `||u||_{L2} / (eps ||grad u||_{L2})`; absent when `u = 0`.
    pub ratio: Option<f64>,
    pub config_hash: String,
}

/// Ratios at the records matching the snapshot times.
pub fn poincare_rows(eps: f64, run: &PoreRun) -> Vec<PoincareRow> {
    run.snapshots
        .iter()
        .map(|s| {
            let rec = run.records.iter().min_by(|a, b| (a.t - s.t).abs().total_cmp(&(b.t - s.t).abs()));
            let ratio = rec.filter(|r| r.u_l2 > 0.0 && r.du_l2 > 0.0).map(|r| r.u_l2 / (eps * r.du_l2));
            PoincareRow { eps, t: s.t, ratio, config_hash: String::new() }
        })
        .collect()
}

/// `(max - min) / min` of the per-eps maximal ratios; `None` if no eps has a ratio.
pub fn poincare_spread(rows: &[PoincareRow], eps_list: &[f64]) -> Option<f64> {
    let maxima: Vec<f64> = eps_list
        .iter()
        .filter_map(|&e| rows.iter().filter(|r| r.eps == e).filter_map(|r| r.ratio).reduce(f64::max))
        .collect();
    if maxima.is_empty() {
        return None;
    }
    let lo = maxima.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = maxima.iter().copied().fold(0.0, f64::max);
    Some((hi - lo) / lo)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    pub h: f64,
    pub steps: usize,
    pub e_rho: f64,
    /// Max over comparison times of the weak Darcy residual.
    pub darcy: f64,
    /// Same with twice the density floor.
    pub darcy_2floor: f64,
    /// Wall-clock time; kept out of the CSV so reruns are byte-identical.
    #[serde(skip)]
    pub seconds: f64,
    pub error: String,
    pub config_hash: String,
}

#[derive(Clone, Debug)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub apriori: Vec<AprioriRow>,
    pub poincare: Vec<PoincareRow>,
    pub t_end: f64,
    pub times: Vec<f64>,
    pub theta: f64,
    pub abar: [[f64; 2]; 2],
    pub complete: bool,
    pub effective_seconds: f64,
    pub notes: Vec<String>,
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

impl ConvergenceReport {
    pub fn rho_decreasing(&self) -> bool {
        strictly_decreasing(&self.rows.iter().map(|r| r.e_rho).collect::<Vec<_>>())
    }

    pub fn darcy_decreasing(&self) -> bool {
        strictly_decreasing(&self.rows.iter().map(|r| r.darcy).collect::<Vec<_>>())
    }

    pub fn apriori_uniform(&self) -> bool {
        apriori_uniform(&self.apriori)
    }

    pub fn poincare_spread(&self) -> Option<f64> {
        poincare_spread(&self.poincare, &self.rows.iter().map(|r| r.eps).collect::<Vec<_>>())
    }

    /// All errors vanish (equilibrium data).
    pub fn all_zero(&self) -> bool {
        self.rows.iter().all(|r| r.e_rho == 0.0 && r.darcy == 0.0)
    }

    /// Names of the violated contracts.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !self.complete {
            v.push("incomplete: a sub-run failed".to_string());
            return v;
        }
        if !self.all_zero() {
            if !self.rho_decreasing() {
                v.push("density error not strictly decreasing in eps".to_string());
            }
            if !self.darcy_decreasing() {
                v.push("Darcy residual not strictly decreasing in eps".to_string());
            }
        }
        if !self.apriori_uniform() {
            v.push("a-priori norms leave the 2x envelope".to_string());
        }
        if let Some(s) = self.poincare_spread() {
            if s >= 0.5 {
                v.push(format!("Poincare ratio spread {s:.3} >= 0.5"));
            }
        }
        v
    }
}

/// Everything a study produces.
pub struct StudyOutput {
    pub report: ConvergenceReport,
    pub masks: Vec<DomainMask>,
    pub pore: Vec<Option<PoreRun>>,
    pub effective: EffectiveRun,
}

pub fn convergence_study(cfg: &RunConfig) -> Result<StudyOutput> {
    cfg.validate()?;
    let built = cfg.build()?;
    let hash = cfg.hash();
    // reject non-nested configurations before any solve
    let masks = cfg
        .geometry
        .eps
        .iter()
        .map(|&e| build_perforated_domain(&built.cell, cfg.geometry.omega, e, built.h))
        .collect::<Result<Vec<_>>>()?;
    let rho0 = cfg.study.initial.sample(&built.grid);
    built.law.check_field(&rho0)?;
    let (theta, abar) = effective_coefficients(cfg, &built)?;
    let mut notes = Vec::new();
    let t_end = match cfg.study.t_end {
        Some(t) => t,
        None => {
            let probe = EffectiveSolver::new(
                built.grid.clone(),
                &built.law,
                &built.kernel,
                effective_config(cfg, theta, abar, cfg.study.dry_run_cap),
            )?;
            let t = choose_t_end(&probe, &rho0, cfg.study.dry_run_change, cfg.study.dry_run_cap)?;
            notes.push(format!("t_end = {t} chosen by dry run"));
            t
        }
    };
    let times = comparison_times(t_end, cfg.study.n_times);
    let ecfg = effective_config(cfg, theta, abar, t_end);
    notes.extend(ecfg.warnings());
    let pcfg = PoreConfig { t_end, ..cfg.pore.clone() };

    let (eff, pore) = rayon::join(
        || {
            let t0 = Instant::now();
            let s = EffectiveSolver::new(built.grid.clone(), &built.law, &built.kernel, ecfg.clone())?;
            s.run(&rho0, &times).map(|r| (r, t0.elapsed().as_secs_f64()))
        },
        || {
            masks
                .par_iter()
                .map(|m| {
                    let t0 = Instant::now();
                    let s = PoreSolver::new(m, &built.kernel, &built.energy, pcfg.clone())?;
                    s.run(&rho0, &times).map(|r| (r, t0.elapsed().as_secs_f64()))
                })
                .collect::<Vec<Result<(PoreRun, f64)>>>()
        },
    );
    let (effective, effective_seconds) = eff?;
    let rho_floor = cfg.study.rho_floor_factor * rho0.iter().copied().fold(0.0, f64::max);
    let tests = TestFunction::standard(&built.grid);
    let mut rows = Vec::new();
    let mut apriori = Vec::new();
    let mut poincare = Vec::new();
    let mut runs = Vec::new();
    let mut complete = true;
    for (m, res) in masks.iter().zip(pore) {
        match res {
            Ok((run, seconds)) => {
                let e_rho = density_error(m, &run.snapshots, &effective.snapshots, &times)?;
                let dres = |floor: f64| {
                    run.snapshots
                        .iter()
                        .zip(&effective.snapshots)
                        .map(|(p, c)| darcy_residual(m, p, c, floor, &tests))
                        .fold(0.0, f64::max)
                };
                rows.push(ConvergenceRow {
                    eps: m.eps,
                    h: built.h,
                    steps: run.records.len() - 1,
                    e_rho,
                    darcy: dres(rho_floor),
                    darcy_2floor: dres(2.0 * rho_floor),
                    seconds,
                    error: String::new(),
                    config_hash: hash.clone(),
                });
                apriori.push(AprioriRow { config_hash: hash.clone(), ..apriori_row(m.eps, &run) });
                poincare.extend(poincare_rows(m.eps, &run).into_iter().map(|r| PoincareRow { config_hash: hash.clone(), ..r }));
                runs.push(Some(run));
            }
            Err(e) => {
                complete = false;
                rows.push(ConvergenceRow {
                    eps: m.eps,
                    h: built.h,
                    steps: 0,
                    e_rho: f64::NAN,
                    darcy: f64::NAN,
                    darcy_2floor: f64::NAN,
                    seconds: 0.0,
                    error: e.to_string(),
                    config_hash: hash.clone(),
                });
                runs.push(None);
            }
        }
    }
    let report = ConvergenceReport {
        rows,
        apriori,
        poincare,
        t_end,
        times,
        theta,
        abar,
        complete,
        effective_seconds,
        notes,
    };
    Ok(StudyOutput { report, masks, pore: runs, effective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::LawKind;
    use crate::geometry::Grain;
    use crate::harness::config::InitialDatum;

    fn small(law: LawKind, gamma: f64, initial: InitialDatum) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.geometry.grain = Grain::centered_disc(0.25);
        cfg.geometry.eps = vec![0.5, 0.25];
        cfg.geometry.m = 8;
        cfg.constitutive.law = law;
        cfg.constitutive.gamma = gamma;
        cfg.kernel.delta = 0.1;
        cfg.study.initial = initial;
        cfg
    }

    #[test]
    fn equilibrium_study_has_zero_errors() {
        let mut cfg = small(LawKind::TWO_WELL, 20.0, InitialDatum::Constant { value: 0.5 });
        cfg.study.t_end = Some(0.05);
        let out = convergence_study(&cfg).unwrap();
        let r = &out.report;
        assert!(r.complete);
        assert!(r.all_zero(), "{:?}", r.rows);
        assert!(r.violations().is_empty(), "{:?}", r.violations());
        assert!(r.poincare.iter().all(|p| p.ratio.is_none()));
        assert!(r.apriori.iter().all(|a| a.u_l2l2 == 0.0 && a.u_l2h1 == 0.0));
        assert_eq!(r.rows[0].config_hash, cfg.hash());
    }

    #[test]
    fn dry_run_finds_visible_change() {
        let cfg = small(
            LawKind::Polytropic { coef: 1.0, exponent: 2.0 },
            0.0,
            InitialDatum::Cosine { mean: 0.5, amp: 0.2, kx: 1.0, ky: 1.0 },
        );
        let b = cfg.build().unwrap();
        let rho0 = cfg.study.initial.sample(&b.grid);
        let s = EffectiveSolver::new(b.grid.clone(), &b.law, &b.kernel, effective_config(&cfg, 0.8, [[0.02, 0.0], [0.0, 0.02]], 100.0))
            .unwrap();
        let t = choose_t_end(&s, &rho0, 0.05, 100.0).unwrap();
        let run = EffectiveSolver::new(b.grid.clone(), &b.law, &b.kernel, effective_config(&cfg, 0.8, [[0.02, 0.0], [0.0, 0.02]], t))
            .unwrap()
            .run(&rho0, &[])
            .unwrap();
        let n0 = rho0.iter().map(|v| v * v).sum::<f64>().sqrt();
        let d = run.rho.iter().zip(&rho0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(d >= 0.05 * n0, "t = {t}");
        let flat = vec![0.5; rho0.len()];
        assert!(choose_t_end(&s, &flat, 0.05, 1.0).is_err());
    }

    #[test]
    fn time_weights_integrate_exactly_for_linear() {
        let t = comparison_times(2.0, 5);
        assert_eq!(t, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        let w = time_weights(&t);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-15);
        assert!((w.iter().zip(&t).map(|(a, b)| a * b).sum::<f64>() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn poincare_spread_skips_zero_snapshots() {
        let rows = vec![
            PoincareRow { eps: 0.5, t: 0.0, ratio: Some(0.1), config_hash: String::new() },
            PoincareRow { eps: 0.5, t: 1.0, ratio: None, config_hash: String::new() },
            PoincareRow { eps: 0.25, t: 0.0, ratio: Some(0.12), config_hash: String::new() },
        ];
        assert!((poincare_spread(&rows, &[0.5, 0.25]).unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(poincare_spread(&rows[1..2], &[0.5]), None);
    }
}
