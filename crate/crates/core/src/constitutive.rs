//! Pressure laws, the generalized pressure `P = p + gamma rho^2 / 2`, the
//! energy density `W` with `p = rho W' - W`, admissibility checks and the
//! nonlocal free energy.

use crate::grid::Grid;
use crate::nonlocal::{convolve_wall, fluid_weight, ConvMethod, Kernel};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LawKind {
    /// `p = coef * r^exponent`.
    Polytropic { coef: f64, exponent: f64 },
    /// `p = amp * (x^3 - kappa x + 1 - kappa)`, `x = r / center - 1`.
    Cubic { amp: f64, center: f64, kappa: f64 },
    /// `p = r_gas temp r / (1 - r / b) - a r^2`, valid for `r < b`.
    Vdw { a: f64, b: f64, r_gas: f64, temp: f64 },
}

impl LawKind {
    /// The two-well cubic `0.8 [(2r-1)^3 - 0.5 (2r-1) + 0.5]`.
    pub const TWO_WELL: LawKind = LawKind::Cubic { amp: 0.8, center: 0.5, kappa: 0.5 };
}

#[derive(Clone, Debug, PartialEq)]
pub struct PressureLaw {
    pub kind: LawKind,
    pub gamma: f64,
    pub rho_s: f64,
    /// Upper end of the working density range.
    pub r_max: f64,
    /// Interval where `p' < 0`, if any.
    pub spinodal: Option<(f64, f64)>,
}

pub fn make_pressure(kind: LawKind, gamma: f64, rho_s: f64, r_max: f64) -> Result<PressureLaw> {
    if !(gamma >= 0.0) {
        return Err(Error::config(format!("gamma must be non-negative, got {gamma}")));
    }
    if !(rho_s > 0.0) {
        return Err(Error::config(format!("wall density must be positive, got {rho_s}")));
    }
    if !(r_max > 0.0) {
        return Err(Error::config("r_max must be positive"));
    }
    match kind {
        LawKind::Polytropic { coef, exponent } => {
            if !(coef > 0.0) || !(exponent >= 1.0) {
                return Err(Error::config("polytropic law needs coef > 0 and exponent >= 1"));
            }
        }
        LawKind::Cubic { amp, center, kappa } => {
            if !(amp > 0.0) || !(center > 0.0) || !(0.0..3.0).contains(&kappa) {
                return Err(Error::config("cubic law needs amp > 0, center > 0, 0 <= kappa < 3"));
            }
        }
        LawKind::Vdw { a, b, r_gas, temp } => {
            if !(a >= 0.0) || !(b > 0.0) || !(r_gas > 0.0) || !(temp > 0.0) {
                return Err(Error::config("van der Waals law needs a >= 0 and b, r_gas, temp > 0"));
            }
            if r_max >= b {
                return Err(Error::config(format!(
                    "van der Waals density range [0, {r_max}] reaches the co-volume pole b = {b}"
                )));
            }
        }
    }
    let mut law = PressureLaw { kind, gamma, rho_s, r_max, spinodal: None };
    law.spinodal = law.find_spinodal();
    Ok(law)
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (f(m) < 0.0) == (fa < 0.0) {
            a = m;
        } else {
            b = m;
        }
        if b - a <= 1e-15 * b.abs().max(1.0) {
            break;
        }
    }
    0.5 * (a + b)
}

/// Roots of `f` on `[lo, hi]` found by sampling plus bisection.
fn roots(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut prev = (lo, f(lo));
    for k in 1..=n {
        let x = lo + (hi - lo) * k as f64 / n as f64;
        let fx = f(x);
        if prev.1 == 0.0 {
            out.push(prev.0);
        } else if prev.1 * fx < 0.0 {
            out.push(bisect(&f, prev.0, x));
        }
        prev = (x, fx);
    }
    out
}

impl PressureLaw {
    /// Polynomial coefficients `(a1, a2, a3)` of the cubic law `a1 r + a2 r^2 + a3 r^3`.
    fn cubic_coeffs(amp: f64, s: f64, kappa: f64) -> (f64, f64, f64) {
        (amp * (3.0 - kappa) / s, -3.0 * amp / (s * s), amp / (s * s * s))
    }

    pub fn p(&self, r: f64) -> f64 {
        match self.kind {
            LawKind::Polytropic { coef, exponent } => coef * r.powf(exponent),
            LawKind::Cubic { amp, center, kappa } => {
                let (a1, a2, a3) = Self::cubic_coeffs(amp, center, kappa);
                r * (a1 + r * (a2 + r * a3))
            }
            LawKind::Vdw { a, b, r_gas, temp } => r_gas * temp * r / (1.0 - r / b) - a * r * r,
        }
    }

    pub fn dp(&self, r: f64) -> f64 {
        match self.kind {
            LawKind::Polytropic { coef, exponent } => {
                if exponent == 1.0 {
                    coef
                } else {
                    coef * exponent * r.powf(exponent - 1.0)
                }
            }
            LawKind::Cubic { amp, center, kappa } => {
                let (a1, a2, a3) = Self::cubic_coeffs(amp, center, kappa);
                a1 + r * (2.0 * a2 + 3.0 * a3 * r)
            }
            LawKind::Vdw { a, b, r_gas, temp } => {
                let q = 1.0 - r / b;
                r_gas * temp / (q * q) - 2.0 * a * r
            }
        }
    }

    pub fn d2p(&self, r: f64) -> f64 {
        match self.kind {
            LawKind::Polytropic { coef, exponent } => {
                if exponent == 1.0 {
                    0.0
                } else if exponent == 2.0 {
                    2.0 * coef
                } else {
                    coef * exponent * (exponent - 1.0) * r.powf(exponent - 2.0)
                }
            }
            LawKind::Cubic { amp, center, kappa } => {
                let (_, a2, a3) = Self::cubic_coeffs(amp, center, kappa);
                2.0 * a2 + 6.0 * a3 * r
            }
            LawKind::Vdw { a, b, r_gas, temp } => {
                let q = 1.0 - r / b;
                2.0 * r_gas * temp / (b * q * q * q) - 2.0 * a
            }
        }
    }

    pub fn big_p(&self, r: f64) -> f64 {
        self.p(r) + 0.5 * self.gamma * r * r
    }

    pub fn big_dp(&self, r: f64) -> f64 {
        self.dp(r) + self.gamma * r
    }

    pub fn big_d2p(&self, r: f64) -> f64 {
        self.d2p(r) + self.gamma
    }

    /// Error unless `0 <= r <= r_max`.
    pub fn check_range(&self, r: f64) -> Result<()> {
        if r.is_finite() && r >= 0.0 && r <= self.r_max {
            Ok(())
        } else {
            Err(Error::Range { value: r, lo: 0.0, hi: self.r_max })
        }
    }

    pub fn check_field(&self, rho: &[f64]) -> Result<()> {
        rho.iter().try_for_each(|&r| self.check_range(r))
    }

    /// Growth exponent and constant with `P'(r) / r^(beta-1) -> c`, when the
    /// family has an unbounded density range.
    pub fn tail(&self) -> Option<(f64, f64)> {
        let g = self.gamma;
        match self.kind {
            LawKind::Polytropic { coef, exponent } => {
                if exponent > 2.0 {
                    Some((exponent, coef * exponent))
                } else if exponent == 2.0 {
                    Some((2.0, 2.0 * coef + g))
                } else if g > 0.0 {
                    Some((2.0, g))
                } else {
                    // P' ~ r^(e-1) with e < 2: beta = e < 2 is not admissible
                    Some((2.0, 0.0))
                }
            }
            LawKind::Cubic { amp, center, .. } => Some((3.0, 3.0 * amp / center.powi(3))),
            LawKind::Vdw { .. } => None,
        }
    }

    fn find_spinodal(&self) -> Option<(f64, f64)> {
        let hi = self.r_max;
        let n = 4000;
        let neg: Vec<f64> = (0..=n).map(|k| hi * k as f64 / n as f64).filter(|&r| self.dp(r) < 0.0).collect();
        if neg.is_empty() {
            return None;
        }
        let z = roots(|r| self.dp(r), 0.0, hi, n);
        let lo = z.iter().copied().find(|&r| r <= neg[0]).unwrap_or(0.0);
        let up = z.iter().copied().find(|&r| r >= *neg.last().unwrap()).unwrap_or(hi);
        Some((lo, up))
    }

    /// Inflection point of `p` inside the spinodal interval (centre of the
    /// double well), when one exists.
    pub fn inflection(&self) -> Option<f64> {
        let (a, b) = self.spinodal?;
        roots(|r| self.d2p(r), a, b, 2000).first().copied()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ItemReport {
    pub item: u8,
    pub name: &'static str,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibilityReport {
    pub items: Vec<ItemReport>,
    /// Measured `min(min P', min P'')` over the samples.
    pub alpha: f64,
    pub sup_ratio: f64,
    pub tail_dp: Option<f64>,
    pub tail_p: Option<f64>,
    pub admissible: bool,
}

impl AdmissibilityReport {
    pub fn item(&self, k: u8) -> &ItemReport {
        &self.items[(k - 1) as usize]
    }
}

/// Relative tolerance for the growth-limit items.
pub const TAIL_TOL: f64 = 0.05;

pub fn check_admissibility(law: &PressureLaw, r_max: f64, n_samples: usize) -> Result<AdmissibilityReport> {
    if !(r_max > 0.0) || n_samples < 100 {
        return Err(Error::config("admissibility check needs r_max > 0 and at least 100 samples"));
    }
    if let LawKind::Vdw { b, .. } = law.kind {
        if r_max >= b {
            return Err(Error::config("sampling range reaches the van der Waals pole"));
        }
    }
    let rs: Vec<f64> = (0..=n_samples).map(|k| r_max * k as f64 / n_samples as f64).collect();
    let min_dp = rs.iter().map(|&r| law.big_dp(r)).filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    let min_d2p = rs.iter().map(|&r| law.big_d2p(r)).filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    let alpha = min_dp.min(min_d2p);
    let sup_ratio = rs
        .iter()
        .map(|&r| law.big_p(r) * law.big_d2p(r) / law.big_dp(r).powi(2))
        .filter(|v| v.is_finite())
        .fold(f64::NEG_INFINITY, f64::max);
    let p0 = law.big_p(0.0);
    let mut items = vec![
        ItemReport {
            item: 1,
            name: "C2 regularity",
            measured: f64::NAN,
            bound: f64::NAN,
            pass: true,
            note: "analytic law family".into(),
        },
        ItemReport { item: 2, name: "P(0) = 0", measured: p0, bound: 0.0, pass: p0.abs() <= 1e-14, note: String::new() },
        ItemReport {
            item: 3,
            name: "P', P'' >= alpha > 0",
            measured: alpha,
            bound: 0.0,
            pass: alpha > 0.0,
            note: format!("min P' = {min_dp:.6e}, min P'' = {min_d2p:.6e}"),
        },
        ItemReport {
            item: 4,
            name: "P P'' / P'^2 <= 2",
            measured: sup_ratio,
            bound: 2.0,
            pass: sup_ratio <= 2.0,
            note: String::new(),
        },
    ];
    let (mut tail_dp, mut tail_p) = (None, None);
    let item5 = match law.tail() {
        None => ItemReport {
            item: 5,
            name: "growth at infinity",
            measured: f64::NAN,
            bound: f64::NAN,
            pass: true,
            note: "not applicable: bounded density range".into(),
        },
        Some((beta, c)) => {
            let a = law.big_dp(r_max) / r_max.powf(beta - 1.0);
            let b = beta * law.big_p(r_max) / r_max.powf(beta);
            tail_dp = Some(a);
            tail_p = Some(b);
            let ok = c > 0.0 && beta >= 2.0 && (a - c).abs() <= TAIL_TOL * c && (b - c).abs() <= TAIL_TOL * c;
            ItemReport {
                item: 5,
                name: "P'/r^(beta-1) -> c, beta P/r^beta -> c",
                measured: a,
                bound: c,
                pass: ok,
                note: format!("beta = {beta}, c = {c:.6e}, beta P/r^beta = {b:.6e} (verified on range)"),
            }
        }
    };
    items.push(item5);
    let admissible = items.iter().all(|i| i.pass);
    Ok(AdmissibilityReport { items, alpha, sup_ratio, tail_dp, tail_p, admissible })
}

/// Energy density `W(r) = r (I(r) + c_lin)` with `I(r) = int_{rho_ref}^r p(s)/s^2 ds`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyFunction {
    pub law: PressureLaw,
    pub rho_ref: f64,
    pub c_lin: f64,
    /// Lower end of the range on which `W >= 0` is enforced.
    pub rho_min: f64,
}

/// Default lower cut-off when `p(s)/s^2` is not integrable at 0.
pub const RHO_MIN_DEFAULT: f64 = 1e-6;

pub fn energy_function(law: &PressureLaw, rho_ref: f64) -> Result<EnergyFunction> {
    let rho_min = if integrable_at_zero(law) { 0.0 } else { RHO_MIN_DEFAULT };
    energy_function_with_floor(law, rho_ref, rho_min)
}

fn integrable_at_zero(law: &PressureLaw) -> bool {
    match law.kind {
        LawKind::Polytropic { exponent, .. } => exponent > 1.0,
        LawKind::Cubic { kappa, .. } => kappa == 3.0,
        LawKind::Vdw { .. } => false,
    }
}

pub fn energy_function_with_floor(law: &PressureLaw, rho_ref: f64, rho_min: f64) -> Result<EnergyFunction> {
    if !(rho_ref > 0.0) {
        return Err(Error::config("rho_ref must be positive"));
    }
    if rho_min == 0.0 && !integrable_at_zero(law) {
        return Err(Error::config("p(s)/s^2 is not integrable at 0; a positive rho_min is required"));
    }
    if !(rho_min >= 0.0) || rho_min >= law.r_max {
        return Err(Error::config("rho_min must lie in [0, r_max)"));
    }
    let mut e = EnergyFunction { law: law.clone(), rho_ref, c_lin: 0.0, rho_min };
    // min of I is attained at an endpoint or where p changes sign from - to +
    let mut cands = vec![rho_min, law.r_max];
    cands.extend(roots(|r| law.p(r), rho_min.max(1e-300), law.r_max, 4000));
    let min_i = cands.iter().map(|&r| e.integral(r)).fold(f64::INFINITY, f64::min);
    e.c_lin = -min_i;
    Ok(e)
}

impl EnergyFunction {
    /// `I(r) = int_{rho_ref}^r p(s)/s^2 ds`, closed form per law family.
    pub fn integral(&self, r: f64) -> f64 {
        let r0 = self.rho_ref;
        match self.law.kind {
            LawKind::Polytropic { coef, exponent } => {
                if exponent == 1.0 {
                    coef * (r / r0).ln()
                } else {
                    let e = exponent - 1.0;
                    coef * (r.powf(e) - r0.powf(e)) / e
                }
            }
            LawKind::Cubic { amp, center, kappa } => {
                let (a1, a2, a3) = PressureLaw::cubic_coeffs(amp, center, kappa);
                let log = if a1 == 0.0 { 0.0 } else { a1 * (r / r0).ln() };
                log + a2 * (r - r0) + 0.5 * a3 * (r * r - r0 * r0)
            }
            LawKind::Vdw { a, b, r_gas, temp } => {
                r_gas * temp * ((r / r0).ln() - ((b - r) / (b - r0)).ln()) - a * (r - r0)
            }
        }
    }

    pub fn w(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        r * (self.integral(r) + self.c_lin)
    }

    pub fn dw(&self, r: f64) -> f64 {
        if r == 0.0 {
            return self.integral(0.0) + self.c_lin + self.law.dp(0.0);
        }
        self.integral(r) + self.c_lin + self.law.p(r) / r
    }

    pub fn d2w(&self, r: f64) -> f64 {
        self.law.dp(r) / r
    }

    /// Number of local minima of `W(r) - W'(r_c) r` on `[lo, hi]` where
    /// `r_c` is the inflection point of `p`. The tilt makes the count
    /// independent of the linear gauge.
    pub fn count_wells(&self, lo: f64, hi: f64) -> usize {
        let Some(rc) = self.law.inflection() else {
            return 1;
        };
        let tilt = self.dw(rc);
        let n = 20000;
        let mut prev = self.dw(lo) - tilt;
        let mut count = 0;
        for k in 1..=n {
            let r = lo + (hi - lo) * k as f64 / n as f64;
            let v = self.dw(r) - tilt;
            if prev < 0.0 && v >= 0.0 && v != prev {
                count += 1;
            }
            prev = v;
        }
        count
    }
}

/// `W(r_max) / P(r_max)`, which tends to `1 / (beta - 1)` when `beta > 2`.
pub fn growth_ratio(law: &PressureLaw, energy: &EnergyFunction, r_max: f64) -> Result<f64> {
    match law.tail() {
        Some((beta, _)) if beta > 2.0 => Ok(energy.w(r_max) / law.big_p(r_max)),
        Some(_) => Err(Error::NotApplicable("energy/pressure ratio requires beta > 2".into())),
        None => Err(Error::NotApplicable("bounded density range has no growth exponent".into())),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FreeEnergy {
    pub fluid_fluid: f64,
    pub fluid_solid: f64,
    pub bulk: f64,
}

impl FreeEnergy {
    pub fn total(&self) -> f64 {
        self.fluid_fluid + self.fluid_solid + self.bulk
    }
}

/// Nonlocal free energy with time-scale weight `omega` (`eps^2` in the pore system).
///
/// `weight` is `phi * 1_X`; pass `None` to compute it here.
#[allow(clippy::too_many_arguments)]
pub fn free_energy(
    rho: &[f64],
    fluid: &[bool],
    grid: &Grid,
    k: &Kernel,
    energy: &EnergyFunction,
    omega: f64,
    weight: Option<&[f64]>,
) -> Result<FreeEnergy> {
    let law = &energy.law;
    if let Some((c, &r)) = rho.iter().enumerate().find(|(c, &r)| fluid[*c] && r < 0.0) {
        return Err(Error::Precondition(format!("negative density {r} at cell {c}")));
    }
    let owned;
    let a = match weight {
        Some(w) => w,
        None => {
            owned = fluid_weight(fluid, grid, k, ConvMethod::Auto);
            &owned
        }
    };
    let conv = convolve_wall(rho, fluid, grid, k, law.rho_s, ConvMethod::Auto);
    Ok(free_energy_parts(rho, fluid, &conv, a, energy, omega, grid.cell_area()))
}

/// Free energy from a precomputed wall convolution `conv = phi *_X rho` and
/// fluid weight `a = phi * 1_X`.
pub fn free_energy_parts(
    rho: &[f64],
    fluid: &[bool],
    conv: &[f64],
    a: &[f64],
    energy: &EnergyFunction,
    omega: f64,
    h2: f64,
) -> FreeEnergy {
    let law = &energy.law;
    let rho_s = law.rho_s;
    // pair differences are shift invariant: work with sigma = rho - rho_s
    let (mut ff, mut fs, mut bulk) = (0.0, 0.0, 0.0);
    for c in 0..rho.len() {
        if !fluid[c] {
            continue;
        }
        let sigma = rho[c] - rho_s;
        let b = conv[c] - rho_s;
        ff += sigma * (sigma * a[c] - b);
        fs += sigma * sigma * (1.0 - a[c]);
        bulk += energy.w(rho[c]);
    }
    let g = law.gamma;
    FreeEnergy { fluid_fluid: 0.5 * g * omega * ff * h2, fluid_solid: 0.5 * g * omega * fs * h2, bulk: omega * bulk * h2 }
}
