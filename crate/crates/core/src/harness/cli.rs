//! `korteweg cell|pore|effective|compare|check-pressure --config <file> --out <dir>`
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 solver failure,
//! 4 contract violation.

use super::config::RunConfig;
use super::io::{write_csv, write_mask, Field, Manifest};
use super::study::{comparison_times, convergence_study, effective_coefficients, effective_config};
use super::write_abar;
use crate::cell_problem::{permeability_with, UZAWA_TOL};
use crate::constitutive::check_admissibility;
use crate::effective::EffectiveSolver;
use crate::extension::mean_value_extend;
use crate::geometry::build_perforated_domain;
use crate::grid::Grid;
use crate::pore::PoreSolver;
use crate::{Error, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(name = "korteweg", version, about = "Nonlocal NSK flow in perforated domains and its Darcy/Cahn-Hilliard limit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Also dump solution fields.
    #[arg(long)]
    fields: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the periodic cell problems and write the permeability tensor.
    Cell(Common),
    /// Run the pore-scale solver for every eps in the geometry section.
    Pore(Common),
    /// Run the effective Cahn-Hilliard/Darcy solver.
    Effective(Common),
    /// Full convergence study with contract checks.
    Compare(Common),
    /// Admissibility report for the configured pressure law.
    CheckPressure(Common),
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("korteweg: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    let (name, c) = match &cmd {
        Command::Cell(c) => ("cell", c),
        Command::Pore(c) => ("pore", c),
        Command::Effective(c) => ("effective", c),
        Command::Compare(c) => ("compare", c),
        Command::CheckPressure(c) => ("check-pressure", c),
    };
    let cfg = RunConfig::load(&c.config)?;
    std::fs::create_dir_all(&c.out).map_err(|e| Error::io(&c.out, e))?;
    std::fs::write(c.out.join("config.toml"), cfg.to_toml()).map_err(|e| Error::io(&c.out, e))?;
    let mut man = Manifest::new(name, cfg.hash());
    man.files.push("config.toml".into());
    let t0 = Instant::now();
    let res = match cmd {
        Command::Cell(_) => cell(&cfg, &c.out, c.fields, &mut man),
        Command::Pore(_) => pore(&cfg, &c.out, c.fields, &mut man),
        Command::Effective(_) => effective(&cfg, &c.out, c.fields, &mut man),
        Command::Compare(_) => compare(&cfg, &c.out, c.fields, &mut man),
        Command::CheckPressure(_) => check_pressure(&cfg, &c.out, &mut man),
    };
    man.time("total", t0.elapsed().as_secs_f64());
    if let Err(e) = &res {
        man.notes.push(format!("failed: {e}"));
    }
    man.write(&c.out)?;
    res
}

fn field(out: &Path, man: &mut Manifest, file: String, name: &str, grid: &Grid, t: f64, comment: &str, v: Vec<f64>) -> Result<()> {
    Field::new(name, grid, t, comment, v).write(&out.join(&file))?;
    man.files.push(file);
    Ok(())
}

fn csv<T: Serialize>(out: &Path, man: &mut Manifest, file: &str, rows: &[T]) -> Result<()> {
    write_csv(&out.join(file), rows)?;
    man.files.push(file.to_string());
    Ok(())
}

#[derive(Serialize)]
struct Quantity {
    quantity: String,
    value: f64,
    config_hash: String,
}

fn cell(cfg: &RunConfig, out: &Path, fields: bool, man: &mut Manifest) -> Result<()> {
    let b = cfg.build()?;
    let t0 = Instant::now();
    let pm = permeability_with(&b.cell, cfg.study.cell_method, UZAWA_TOL)?;
    man.time("cell", t0.elapsed().as_secs_f64());
    let hash = cfg.hash();
    write_abar(&out.join("abar.csv"), pm.a, &hash)?;
    man.files.push("abar.csv".into());
    let eig = pm.eigenvalues();
    let mut q = vec![
        ("theta".to_string(), pm.theta),
        ("m".to_string(), pm.m as f64),
        ("asymmetry".to_string(), pm.asymmetry()),
        ("eig_min".to_string(), eig[0]),
        ("eig_max".to_string(), eig[1]),
    ];
    for s in &pm.solutions {
        let i = s.index + 1;
        q.push((format!("div_residual_{i}"), s.div_residual));
        q.push((format!("momentum_residual_{i}"), s.momentum_residual));
        q.push((format!("iterations_{i}"), s.iterations as f64));
    }
    let rows: Vec<Quantity> = q.into_iter().map(|(quantity, value)| Quantity { quantity, value, config_hash: hash.clone() }).collect();
    csv(out, man, "cell_report.csv", &rows)?;
    let grid = Grid::unit(b.cell.m);
    let fluid: Vec<bool> = b.cell.solid.iter().map(|s| !s).collect();
    write_mask(&out.join("unit_cell.mask"), &grid, &fluid)?;
    man.files.push("unit_cell.mask".into());
    if fields {
        for s in &pm.solutions {
            let i = s.index + 1;
            let (vx, vy) = s.mac.cell_velocity(&s.v);
            field(out, man, format!("v{i}_x.field"), &format!("v{i}_x"), &grid, 0.0, "cell solution", vx)?;
            field(out, man, format!("v{i}_y.field"), &format!("v{i}_y"), &grid, 0.0, "cell solution", vy)?;
            field(out, man, format!("q{i}.field"), &format!("q{i}"), &grid, 0.0, "cell pressure", s.mac.cells_to_grid(&s.q, 0.0))?;
        }
    }
    println!("theta = {:.6}", pm.theta);
    println!("Abar  = [[{:.8e}, {:.8e}], [{:.8e}, {:.8e}]]", pm.a[0][0], pm.a[0][1], pm.a[1][0], pm.a[1][1]);
    Ok(())
}

#[derive(Serialize)]
struct PoreRow {
    step: usize,
    t: f64,
    dt: f64,
    mass: f64,
    #[serde(rename = "E_fluid_fluid")]
    e_ff: f64,
    #[serde(rename = "E_fluid_solid")]
    e_fs: f64,
    #[serde(rename = "E_bulk")]
    e_bulk: f64,
    #[serde(rename = "D")]
    d: f64,
    residual: f64,
    max_u: f64,
    config_hash: String,
}

fn pore(cfg: &RunConfig, out: &Path, fields: bool, man: &mut Manifest) -> Result<()> {
    let b = cfg.build()?;
    let hash = cfg.hash();
    let masks = cfg
        .geometry
        .eps
        .iter()
        .map(|&e| build_perforated_domain(&b.cell, cfg.geometry.omega, e, b.h))
        .collect::<Result<Vec<_>>>()?;
    let rho0 = cfg.study.initial.sample(&b.grid);
    let times = comparison_times(cfg.pore.t_end, cfg.study.n_times);
    let runs = masks
        .par_iter()
        .map(|m| {
            let t0 = Instant::now();
            let s = PoreSolver::new(m, &b.kernel, &b.energy, cfg.pore.clone())?;
            s.run(&rho0, &times).map(|r| (r, t0.elapsed().as_secs_f64()))
        })
        .collect::<Vec<_>>();
    for (k, (m, res)) in masks.iter().zip(runs).enumerate() {
        let (run, secs) = res?;
        man.time(&format!("pore eps={}", m.eps), secs);
        let rows: Vec<PoreRow> = run
            .records
            .iter()
            .map(|r| PoreRow {
                step: r.step,
                t: r.t,
                dt: r.dt,
                mass: r.mass,
                e_ff: r.energy.fluid_fluid,
                e_fs: r.energy.fluid_solid,
                e_bulk: r.energy.bulk,
                d: r.dissipation,
                residual: r.residual,
                max_u: r.max_u,
                config_hash: hash.clone(),
            })
            .collect();
        csv(out, man, &format!("pore_eps{k}.csv"), &rows)?;
        let mf = format!("pore_eps{k}.mask");
        write_mask(&out.join(&mf), &m.grid, &m.fluid)?;
        man.files.push(mf);
        for (j, s) in run.snapshots.iter().enumerate() {
            if fields || j + 1 == run.snapshots.len() {
                let c = format!("eps={} snapshot={j}", m.eps);
                field(out, man, format!("pore_eps{k}_rho_{j}.field"), "rho", &m.grid, s.t, &c, s.rho.clone())?;
            }
        }
        let last = run.records.last().expect("at least one record");
        println!(
            "eps = {:<8} steps = {:<7} mass drift = {:.2e}  max|residual| = {:.3e}",
            m.eps,
            last.step,
            (last.mass - run.records[0].mass).abs() / run.records[0].mass,
            run.max_abs_residual()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct EffectiveRow {
    step: usize,
    t: f64,
    dt: f64,
    mass: f64,
    max_flux: f64,
    config_hash: String,
}

fn effective(cfg: &RunConfig, out: &Path, fields: bool, man: &mut Manifest) -> Result<()> {
    let b = cfg.build()?;
    let hash = cfg.hash();
    let (theta, abar) = effective_coefficients(cfg, &b)?;
    let ecfg = effective_config(cfg, theta, abar, cfg.effective.t_end);
    for w in ecfg.warnings() {
        eprintln!("{w}");
        man.notes.push(w);
    }
    let rho0 = cfg.study.initial.sample(&b.grid);
    let times = comparison_times(ecfg.t_end, cfg.study.n_times);
    let t0 = Instant::now();
    let s = EffectiveSolver::new(b.grid.clone(), &b.law, &b.kernel, ecfg)?;
    let run = s.run(&rho0, &times)?;
    man.time("effective", t0.elapsed().as_secs_f64());
    let rows: Vec<EffectiveRow> = run
        .records
        .iter()
        .map(|r| EffectiveRow { step: r.step, t: r.t, dt: r.dt, mass: r.mass, max_flux: r.max_flux, config_hash: hash.clone() })
        .collect();
    csv(out, man, "effective.csv", &rows)?;
    for (j, sn) in run.snapshots.iter().enumerate() {
        if fields || j + 1 == run.snapshots.len() {
            field(out, man, format!("effective_rho_{j}.field"), "rho_ch", &b.grid, sn.t, &format!("snapshot={j}"), sn.rho.clone())?;
        }
    }
    let last = run.records.last().expect("at least one record");
    println!("steps = {}  mass drift = {:.2e}", last.step, (last.mass - run.records[0].mass).abs() / run.records[0].mass);
    Ok(())
}

fn compare(cfg: &RunConfig, out: &Path, fields: bool, man: &mut Manifest) -> Result<()> {
    let so = convergence_study(cfg)?;
    let r = &so.report;
    for row in &r.rows {
        man.time(&format!("pore eps={}", row.eps), row.seconds);
    }
    man.time("effective", r.effective_seconds);
    man.notes.extend(r.notes.iter().cloned());
    csv(out, man, "convergence.csv", &r.rows)?;
    csv(out, man, "apriori.csv", &r.apriori)?;
    csv(out, man, "poincare.csv", &r.poincare)?;
    let last = r.times.len() - 1;
    let g = &so.masks[0].grid;
    field(out, man, "rho_ch.field".into(), "rho_ch", g, r.t_end, "effective", so.effective.snapshots[last].rho.clone())?;
    for (k, (m, run)) in so.masks.iter().zip(&so.pore).enumerate() {
        let Some(run) = run else { continue };
        let snaps: Vec<usize> = if fields { (0..run.snapshots.len()).collect() } else { vec![last] };
        for j in snaps {
            let s = &run.snapshots[j];
            let hat = mean_value_extend(&s.rho, m)?;
            let c = format!("extension={} eps={}", hat.kind.as_str(), m.eps);
            field(out, man, format!("rho_hat_eps{k}_{j}.field"), "rho_hat", g, s.t, &c, hat.values)?;
        }
    }
    println!("T = {}  theta = {:.6}  Abar = {:?}", r.t_end, r.theta, r.abar);
    println!("{:>10} {:>14} {:>14} {:>8}", "eps", "e_rho", "darcy", "steps");
    for row in &r.rows {
        println!("{:>10} {:>14.6e} {:>14.6e} {:>8}", row.eps, row.e_rho, row.darcy, row.steps);
    }
    if !r.complete {
        let msg: Vec<String> = r.rows.iter().filter(|x| !x.error.is_empty()).map(|x| format!("eps={}: {}", x.eps, x.error)).collect();
        return Err(Error::solver(format!("incomplete study: {}", msg.join("; ")), f64::NAN));
    }
    let v = r.violations();
    if !v.is_empty() {
        return Err(Error::Contract(v.join("; ")));
    }
    Ok(())
}

#[derive(Serialize)]
struct ItemRow {
    item: u8,
    name: String,
    measured: f64,
    bound: f64,
    pass: bool,
    note: String,
    config_hash: String,
}

fn check_pressure(cfg: &RunConfig, out: &Path, man: &mut Manifest) -> Result<()> {
    let b = cfg.build()?;
    let rep = check_admissibility(&b.law, b.law.r_max, cfg.constitutive.n_samples)?;
    let hash = cfg.hash();
    let rows: Vec<ItemRow> = rep
        .items
        .iter()
        .map(|i| ItemRow {
            item: i.item,
            name: i.name.to_string(),
            measured: i.measured,
            bound: i.bound,
            pass: i.pass,
            note: i.note.clone(),
            config_hash: hash.clone(),
        })
        .collect();
    csv(out, man, "admissibility.csv", &rows)?;
    println!("{:<4} {:<28} {:>14} {:>14}  {}", "item", "condition", "measured", "bound", "result");
    for i in &rep.items {
        println!(
            "{:<4} {:<28} {:>14.6e} {:>14.6e}  {}{}",
            i.item,
            i.name,
            i.measured,
            i.bound,
            if i.pass { "pass" } else { "FAIL" },
            if i.note.is_empty() { String::new() } else { format!(" ({})", i.note) }
        );
    }
    println!("alpha = {:.6e}  verdict: {}", rep.alpha, if rep.admissible { "admissible (verified on range)" } else { "not admissible" });
    Ok(())
}
