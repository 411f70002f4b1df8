//! Extensions of fields from the perforated domain to all of the domain, and
//! a finite weak-limit probe comparing the two.

use crate::geometry::DomainMask;
use crate::grid::Grid;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionKind {
    Zero,
    MeanValue,
}

impl ExtensionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExtensionKind::Zero => "zero",
            ExtensionKind::MeanValue => "mean_value",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExtendedField {
    pub values: Vec<f64>,
    pub kind: ExtensionKind,
    pub eps: f64,
}

fn check_len(f: &[f64], mask: &DomainMask) -> Result<()> {
    if f.len() != mask.grid.len() {
        return Err(Error::config(format!("field has {} entries, grid has {}", f.len(), mask.grid.len())));
    }
    Ok(())
}

/// `f` on fluid cells, 0 on solid cells. Solid entries of `f` are ignored.
pub fn zero_extend(f: &[f64], mask: &DomainMask) -> Result<ExtendedField> {
    check_len(f, mask)?;
    let values = f.iter().zip(&mask.fluid).map(|(&v, &fl)| if fl { v } else { 0.0 }).collect();
    Ok(ExtendedField { values, kind: ExtensionKind::Zero, eps: mask.eps })
}

/// `f` on fluid cells; on each grain, the average of `f` over the annulus
/// cells of the same eps-cell.
pub fn mean_value_extend(f: &[f64], mask: &DomainMask) -> Result<ExtendedField> {
    check_len(f, mask)?;
    let nk = mask.cells_k.len();
    // deviations from the first annulus value, so a constant averages exactly
    let mut base = vec![None; nk];
    let mut sum = vec![0.0; nk];
    let mut count = vec![0usize; nk];
    for c in 0..f.len() {
        if let (true, Some(k)) = (mask.ring[c] && mask.fluid[c], mask.owner[c]) {
            let b = *base[k].get_or_insert(f[c]);
            sum[k] += f[c] - b;
            count[k] += 1;
        }
    }
    let mut values = f.to_vec();
    for c in 0..f.len() {
        if mask.fluid[c] {
            continue;
        }
        let k = mask.owner[c].ok_or_else(|| Error::Internal(format!("solid cell {c} outside every eps-cell")))?;
        if count[k] == 0 {
            return Err(Error::Geometry(format!(
                "annulus of eps-cell {:?} contains no grid cells; refine the grid",
                mask.cells_k[k]
            )));
        }
        values[c] = base[k].unwrap_or(0.0) + sum[k] / count[k] as f64;
    }
    Ok(ExtendedField { values, kind: ExtensionKind::MeanValue, eps: mask.eps })
}

/// Smooth probes for weak convergence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    One,
    X,
    Y,
    /// `x^2 + y^2`
    R2,
    Gaussian { cx: f64, cy: f64, w: f64 },
}

impl TestFunction {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        match *self {
            TestFunction::One => 1.0,
            TestFunction::X => x,
            TestFunction::Y => y,
            TestFunction::R2 => x * x + y * y,
            TestFunction::Gaussian { cx, cy, w } => (-((x - cx).powi(2) + (y - cy).powi(2)) / (w * w)).exp(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            TestFunction::One => "1".into(),
            TestFunction::X => "x".into(),
            TestFunction::Y => "y".into(),
            TestFunction::R2 => "x2+y2".into(),
            TestFunction::Gaussian { cx, cy, w } => format!("gauss({cx},{cy},{w})"),
        }
    }

    /// `1, x, y, x^2 + y^2` and a Gaussian bump at the domain centre.
    pub fn standard(grid: &Grid) -> Vec<TestFunction> {
        let cx = grid.x0 + 0.5 * grid.nx as f64 * grid.h;
        let cy = grid.y0 + 0.5 * grid.ny as f64 * grid.h;
        let w = 0.2 * (grid.nx.max(grid.ny) as f64 * grid.h);
        vec![TestFunction::One, TestFunction::X, TestFunction::Y, TestFunction::R2, TestFunction::Gaussian { cx, cy, w }]
    }

    /// `int f psi` by the midpoint rule.
    pub fn integrate(&self, f: &[f64], grid: &Grid) -> f64 {
        (0..grid.len())
            .map(|c| {
                let (x, y) = grid.center(c);
                f[c] * self.eval(x, y)
            })
            .sum::<f64>()
            * grid.cell_area()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakRow {
    pub eps: f64,
    pub test: String,
    /// `int hat g_eps psi`
    pub a: f64,
    /// `int tilde g_eps psi`
    pub b: f64,
    /// `|a - int g psi|`
    pub a_err: f64,
    /// `|b - theta int g psi|`
    pub b_err: f64,
}

#[derive(Clone, Debug)]
pub struct WeakLimitReport {
    pub rows: Vec<WeakRow>,
    /// Per test function: did the a-errors decrease along the eps list?
    pub a_decreasing: Vec<bool>,
    pub b_decreasing: Vec<bool>,
    /// Both error columns decrease for every test function.
    pub pass: bool,
}

/// Non-increasing, strictly where the values are above the round-off floor `tol`.
fn decreasing(v: &[f64], tol: f64) -> bool {
    v.windows(2).all(|w| w[1] < w[0] || (w[0] <= tol && w[1] <= tol))
}

/// Probes both extensions of each `g_eps` (ordered by decreasing eps) against `g`.
pub fn weak_limit_check(
    family: &[(&DomainMask, &[f64])],
    g: &[f64],
    theta: f64,
    tests: &[TestFunction],
) -> Result<WeakLimitReport> {
    let Some((first, _)) = family.first() else {
        return Err(Error::config("empty family"));
    };
    let grid = &first.grid;
    if g.len() != grid.len() {
        return Err(Error::config("limit field does not match the grid"));
    }
    for (m, f) in family {
        if m.grid != *grid || f.len() != grid.len() {
            return Err(Error::config("all fields must share one grid"));
        }
    }
    let exts = family
        .iter()
        .map(|(m, f)| Ok((m.eps, mean_value_extend(f, m)?, zero_extend(f, m)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut a_decreasing = Vec::new();
    let mut b_decreasing = Vec::new();
    for psi in tests {
        let target = psi.integrate(g, grid);
        let scale = psi.integrate(&g.iter().map(|v| v.abs()).collect::<Vec<_>>(), grid).max(1e-300);
        let mut ae = Vec::new();
        let mut be = Vec::new();
        for (eps, hat, tilde) in &exts {
            let a = psi.integrate(&hat.values, grid);
            let b = psi.integrate(&tilde.values, grid);
            let row = WeakRow { eps: *eps, test: psi.name(), a, b, a_err: (a - target).abs(), b_err: (b - theta * target).abs() };
            ae.push(row.a_err);
            be.push(row.b_err);
            rows.push(row);
        }
        a_decreasing.push(decreasing(&ae, 1e-12 * scale));
        b_decreasing.push(decreasing(&be, 1e-12 * scale));
    }
    let pass = a_decreasing.iter().chain(&b_decreasing).all(|&d| d);
    Ok(WeakLimitReport { rows, a_decreasing, b_decreasing, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_perforated_domain, build_unit_cell, Grain, Rect, UnitCell};

    fn masks(cell: &UnitCell, h: f64) -> Vec<DomainMask> {
        [0.25, 0.125, 0.0625].iter().map(|&e| build_perforated_domain(cell, Rect::UNIT, e, h).unwrap()).collect()
    }

    #[test]
    fn zero_extension_basics() {
        let cell = build_unit_cell(Grain::centered_disc(0.25), 8).unwrap();
        let m = build_perforated_domain(&cell, Rect::UNIT, 0.125, 1.0 / 64.0).unwrap();
        let one = vec![1.0; m.grid.len()];
        let z = zero_extend(&one, &m).unwrap();
        assert!(z.values.iter().zip(&m.fluid).all(|(&v, &f)| v == if f { 1.0 } else { 0.0 }));
        let f = m.grid.sample(|x, y| 1.0 + x * y);
        let z = zero_extend(&f, &m).unwrap();
        let fluid_sum: f64 = (0..f.len()).filter(|&c| m.fluid[c]).map(|c| f[c]).sum();
        assert_eq!(z.values.iter().sum::<f64>(), fluid_sum);
        assert!((0..f.len()).filter(|&c| m.fluid[c]).all(|c| z.values[c] == f[c]));
        assert_eq!(z.kind.as_str(), "zero");
        assert!(zero_extend(&f[1..], &m).is_err());
    }

    #[test]
    fn mean_value_of_constant_and_restriction() {
        let cell = build_unit_cell(Grain::centered_disc(0.3), 16).unwrap();
        for m in masks(&cell, 1.0 / 256.0) {
            let hat = mean_value_extend(&vec![0.7; m.grid.len()], &m).unwrap();
            assert!(hat.values.iter().all(|&v| v == 0.7));
            let f = m.grid.sample(|x, y| (3.0 * x).sin() + y);
            let hat = mean_value_extend(&f, &m).unwrap();
            assert!((0..f.len()).filter(|&c| m.fluid[c]).all(|c| hat.values[c] == f[c]));
        }
    }

    #[test]
    fn indicator_of_one_cell() {
        let cell = build_unit_cell(Grain::centered_disc(0.25), 8).unwrap();
        let m = build_perforated_domain(&cell, Rect::UNIT, 0.125, 1.0 / 64.0).unwrap();
        let k = 5;
        let f: Vec<f64> = (0..m.grid.len()).map(|c| if m.owner[c] == Some(k) { 1.0 } else { 0.0 }).collect();
        let hat = mean_value_extend(&f, &m).unwrap();
        for c in 0..f.len() {
            let want = if m.owner[c] == Some(k) { 1.0 } else { 0.0 };
            assert_eq!(hat.values[c], want, "cell {c}");
        }
    }

    #[test]
    fn linear_field_takes_annulus_centroid() {
        let cell = build_unit_cell(Grain::centered_disc(0.25), 16).unwrap();
        let m = build_perforated_domain(&cell, Rect::UNIT, 0.125, 1.0 / 128.0).unwrap();
        let f = m.grid.sample(|x, _| x);
        let hat = mean_value_extend(&f, &m).unwrap();
        for c in 0..f.len() {
            if !m.fluid[c] {
                let (kx, _) = m.cells_k[m.owner[c].unwrap()];
                let centroid = m.eps * (kx as f64 + 0.5);
                assert!((hat.values[c] - centroid).abs() <= m.grid.h, "{} vs {centroid}", hat.values[c]);
            }
        }
    }

    #[test]
    fn empty_annulus_is_resolution_error() {
        let cell = build_unit_cell(Grain::centered_disc(0.25), 8).unwrap();
        let mut m = build_perforated_domain(&cell, Rect::UNIT, 0.25, 1.0 / 32.0).unwrap();
        m.ring.iter_mut().for_each(|r| *r = false);
        assert!(matches!(mean_value_extend(&vec![1.0; m.grid.len()], &m), Err(Error::Geometry(_))));
    }

    #[test]
    fn linear_in_the_field() {
        let cell = build_unit_cell(Grain::centered_disc(0.25), 8).unwrap();
        let m = build_perforated_domain(&cell, Rect::UNIT, 0.25, 1.0 / 32.0).unwrap();
        let f = m.grid.sample(|x, y| x * x - y);
        let g = m.grid.sample(|x, y| (x + 2.0 * y).cos());
        let fg: Vec<f64> = f.iter().zip(&g).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let (hf, hg, hfg) = (
            mean_value_extend(&f, &m).unwrap(),
            mean_value_extend(&g, &m).unwrap(),
            mean_value_extend(&fg, &m).unwrap(),
        );
        for c in 0..f.len() {
            assert!((hfg.values[c] - (2.0 * hf.values[c] - 3.0 * hg.values[c])).abs() < 1e-12);
        }
    }

    #[test]
    fn weak_limits_of_constants_and_smooth_restrictions() {
        let cell = build_unit_cell(Grain::centered_disc(0.25), 8).unwrap();
        let ms = masks(&cell, 1.0 / 128.0);
        let grid = ms[0].grid.clone();
        let tests = TestFunction::standard(&grid);
        let one = vec![1.0; grid.len()];
        let fam: Vec<(&DomainMask, &[f64])> = ms.iter().map(|m| (m, one.as_slice())).collect();
        let rep = weak_limit_check(&fam, &one, cell.theta, &tests).unwrap();
        assert!(rep.pass, "{:?}", rep.rows);
        assert!(rep.rows.iter().all(|r| r.a_err < 1e-12));

        let rs = vec![0.4; grid.len()];
        let fam: Vec<(&DomainMask, &[f64])> = ms.iter().map(|m| (m, rs.as_slice())).collect();
        let rep = weak_limit_check(&fam, &rs, cell.theta, &tests).unwrap();
        assert!(rep.rows.iter().all(|r| r.a_err == 0.0 || r.a_err < 1e-14));

        let big_g = grid.sample(|x, y| 1.0 + 0.5 * (2.0 * x).sin() * (3.0 * y).cos());
        let fam: Vec<(&DomainMask, &[f64])> = ms.iter().map(|m| (m, big_g.as_slice())).collect();
        let rep = weak_limit_check(&fam, &big_g, cell.theta, &tests).unwrap();
        assert!(rep.pass, "{:?}", rep.rows);
    }

    #[test]
    fn mismatched_grids_rejected() {
        let cell = build_unit_cell(Grain::centered_disc(0.25), 8).unwrap();
        let a = build_perforated_domain(&cell, Rect::UNIT, 0.25, 1.0 / 32.0).unwrap();
        let b = build_perforated_domain(&cell, Rect::UNIT, 0.125, 1.0 / 64.0).unwrap();
        let fa = vec![1.0; a.grid.len()];
        let fb = vec![1.0; b.grid.len()];
        assert!(weak_limit_check(&[(&a, &fa), (&b, &fb)], &fa, 0.8, &[TestFunction::One]).is_err());
    }
}
